"""Program images: loading into SRAM and the two on-disk formats.

Format A is a flat little-endian binary next to a ``.hdr`` text sidecar::

    base=0x1c000000
    entry=0x1c000000

Format B is assembly text (``.s``), assembled on load.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Optional

from .asm import ProgramImage, assemble
from .cpu import CpuState
from .memsys import MemError, MemorySystem

__all__ = ["ProgramImage", "OutOfRange", "load_program", "boot_stub", "read_image",
           "write_image", "load_image_file", "PROGRAM_DIR", "program_path"]

PROGRAM_DIR = Path(__file__).parent / "programs"


class OutOfRange(Exception):
    pass


def load_program(mem: MemorySystem, image: ProgramImage,
                 state: Optional[CpuState] = None) -> None:
    """Copy ``image`` into SRAM and point ``state.pc`` at its entry.

    Every word is checked before any is written, so a rejected image
    leaves memory untouched.
    """
    for i in range(len(image.words)):
        addr = image.base + 4 * i
        try:
            _, _, writable = mem.locate(addr)
        except MemError:
            raise OutOfRange(f"word {i} at {addr:#010x} is unmapped") from None
        if not writable:
            raise OutOfRange(f"word {i} at {addr:#010x} is in ROM")
    mem.write_words(image.base, image.words)
    if state is not None:
        state.pc = image.entry


def boot_stub(entry: int) -> list[int]:
    """16-word ROM stub: ``li t0, entry; jr t0`` padded with nops."""
    src = f"li t0, {entry & 0xFFFFFFFF:#x}\njr t0\n"
    words = assemble(src, base=0).words
    return words + [0x00000013] * (16 - len(words))


def write_image(image: ProgramImage, path) -> None:
    path = Path(path)
    path.write_bytes(struct.pack(f"<{len(image.words)}I", *image.words))
    Path(str(path) + ".hdr").write_text(f"base={image.base:#x}\nentry={image.entry:#x}\n")


def read_image(path) -> ProgramImage:
    path = Path(path)
    data = path.read_bytes()
    if len(data) % 4:
        raise ValueError(f"{path}: length {len(data)} is not a whole number of words")
    hdr = {}
    for line in Path(str(path) + ".hdr").read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, val = line.partition("=")
            hdr[key.strip()] = int(val.strip(), 0)
    base = hdr["base"]
    return ProgramImage(base, list(struct.unpack(f"<{len(data) // 4}I", data)),
                        hdr.get("entry", base))


def program_path(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    for cand in (PROGRAM_DIR / name, PROGRAM_DIR / f"{name}.s"):
        if cand.exists():
            return cand
    raise FileNotFoundError(name)


def load_image_file(path, base: Optional[int] = None,
                    symbols: Optional[dict[str, int]] = None) -> ProgramImage:
    """Load format A (binary + .hdr) or format B (.s assembly)."""
    p = program_path(str(path))
    if p.suffix in (".s", ".asm"):
        return assemble(p.read_text(), base, symbols)
    return read_image(p)
