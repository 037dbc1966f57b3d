"""Shared SRAM: boot ROM, two private banks, four word-interleaved banks.

All banks sit behind a single-cycle interconnect. Each MCU cycle every bank
serves at most one request; contention is resolved by a per-bank
round-robin arbiter over the fixed master order below, and losing masters
retry on the next cycle.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional


class Master(enum.IntEnum):
    CPU_I = 0
    CPU_D = 1
    UDMA_RX = 2
    UDMA_TX = 3
    JTAG = 4
    EFPGA_P0 = 5
    EFPGA_P1 = 6
    EFPGA_P2 = 7
    EFPGA_P3 = 8


N_MASTERS = len(Master)
EFPGA_PORTS = (Master.EFPGA_P0, Master.EFPGA_P1, Master.EFPGA_P2, Master.EFPGA_P3)


class MemError(Exception):
    """Base class for access faults."""


class Unmapped(MemError):
    pass


class ReadOnly(MemError):
    pass


class Forbidden(MemError):
    pass


@dataclass(frozen=True)
class Region:
    name: str
    base: int
    size: int
    banks: tuple[int, ...]
    interleaved: bool = False
    writable: bool = True

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.base + self.size


# Bank ids: 0..3 interleaved, 4/5 private, 6 ROM.
ROM_BANK = 6


@dataclass(frozen=True)
class AddressMap:
    """Concrete bases are a documented choice; only sizes come from the chip."""

    rom_base: int = 0x0000_0000
    rom_size: int = 8 * 1024
    private0_base: int = 0x1C00_0000
    private1_base: int = 0x1C00_8000
    private_size: int = 32 * 1024
    interleaved_base: int = 0x1C01_0000
    interleaved_size: int = 448 * 1024
    apb_base: int = 0x1A10_0000
    apb_size: int = 0x0001_0000

    @property
    def regions(self) -> tuple[Region, ...]:
        return (
            Region("rom", self.rom_base, self.rom_size, (ROM_BANK,), writable=False),
            Region("private0", self.private0_base, self.private_size, (4,)),
            Region("private1", self.private1_base, self.private_size, (5,)),
            Region("interleaved", self.interleaved_base, self.interleaved_size, (0, 1, 2, 3),
                   interleaved=True),
        )

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def is_apb(self, addr: int) -> bool:
        return self.apb_base <= addr < self.apb_base + self.apb_size

    def bank_words(self) -> dict[int, int]:
        out = {}
        for r in self.regions:
            n = len(r.banks)
            for b in r.banks:
                out[b] = r.size // 4 // n
        return out


DEFAULT_MAP = AddressMap()


@dataclass(frozen=True)
class Mapping:
    region: str
    bank: int
    word_offset: int


def map_address(addr: int, amap: AddressMap = DEFAULT_MAP) -> Mapping:
    """Translate a byte address to (region, bank, word offset within bank)."""
    for r in amap.regions:
        if r.contains(addr):
            rel = addr - r.base
            if r.interleaved:
                return Mapping(r.name, (rel >> 2) & 3, rel >> 4)
            return Mapping(r.name, r.banks[0], rel >> 2)
    if amap.is_apb(addr):
        return Mapping("apb", -1, (addr - amap.apb_base) >> 2)
    raise Unmapped(f"{addr:#010x}")


@dataclass
class BankState:
    words: int
    rr_pointer: int = N_MASTERS - 1
    storage: list = field(default=None)
    grants: int = 0

    def __post_init__(self):
        if self.storage is None:
            self.storage = [0] * self.words


def arbitrate(bank: BankState, requesters: Iterable[int]) -> int:
    """Grant the first requester after ``rr_pointer`` in cyclic master order."""
    req = set(requesters)
    if not req:
        raise ValueError("no requesters")
    for i in range(1, N_MASTERS + 1):
        m = (bank.rr_pointer + i) % N_MASTERS
        if m in req:
            bank.rr_pointer = m
            return m
    raise AssertionError("unreachable")


BYTE_MASKS = tuple(
    sum(0xFF << (8 * i) for i in range(4) if be >> i & 1) for be in range(16)
)


@dataclass
class MemRequest:
    master: Master
    addr: int
    write: bool = False
    wdata: int = 0
    byte_enable: int = 0xF
    on_done: Optional[Callable[["MemRequest", int], None]] = None
    rdata: int = 0
    stalls: int = 0
    done: bool = False


class MemorySystem:
    """Storage plus the per-cycle request/arbitrate/commit interconnect."""

    def __init__(self, amap: AddressMap = DEFAULT_MAP):
        self.amap = amap
        self.banks = {b: BankState(n) for b, n in amap.bank_words().items()}
        self._regions = amap.regions
        self.posted: list[MemRequest] = []
        self.words_moved = [0] * N_MASTERS
        self.stall_cycles = [0] * N_MASTERS
        self.cycles = 0

    # -- addressing ----------------------------------------------------------

    def map(self, addr: int) -> Mapping:
        return map_address(addr, self.amap)

    def locate(self, addr: int) -> tuple[int, int, bool]:
        """Fast path: (bank, word offset, writable) or raise Unmapped."""
        for r in self._regions:
            if r.base <= addr < r.base + r.size:
                rel = addr - r.base
                if r.interleaved:
                    return (rel >> 2) & 3, rel >> 4, r.writable
                return r.banks[0], rel >> 2, r.writable
        raise Unmapped(f"{addr:#010x}")

    def check(self, req: MemRequest) -> tuple[int, int]:
        if req.master in EFPGA_PORTS or req.master in (Master.UDMA_RX, Master.UDMA_TX):
            if req.addr & 3:
                raise ValueError(f"{req.master.name} address {req.addr:#x} not word-aligned")
        if req.write and not req.byte_enable:
            raise ValueError("write with empty byte_enable")
        if self.amap.is_apb(req.addr):
            if req.master in EFPGA_PORTS:
                raise Forbidden(f"{req.master.name} cannot reach APB at {req.addr:#x}")
            raise Unmapped(f"APB address {req.addr:#x} is not an SRAM target")
        bank, off, writable = self.locate(req.addr)
        if bank == ROM_BANK and req.master in EFPGA_PORTS:
            raise Forbidden(f"{req.master.name} cannot reach boot ROM")
        if req.write and not writable:
            raise ReadOnly(f"{req.addr:#x}")
        return bank, off

    # -- functional (untimed) access -----------------------------------------

    def read_word(self, addr: int) -> int:
        bank, off, _ = self.locate(addr & ~3)
        return self.banks[bank].storage[off]

    def write_word(self, addr: int, value: int, byte_enable: int = 0xF, force: bool = False) -> None:
        bank, off, writable = self.locate(addr & ~3)
        if not writable and not force:
            raise ReadOnly(f"{addr:#x}")
        st = self.banks[bank].storage
        m = BYTE_MASKS[byte_enable]
        st[off] = (st[off] & ~m) | (value & m)

    def read_bytes(self, addr: int, n: int) -> bytes:
        lead = addr & 3
        a = addr - lead
        out = bytearray()
        while len(out) < lead + n:
            out += struct.pack("<I", self.read_word(a))
            a += 4
        return bytes(out[lead:lead + n])

    def write_bytes(self, addr: int, data: bytes, force: bool = False) -> None:
        for i, b in enumerate(data):
            a = addr + i
            self.write_word(a, b << (8 * (a & 3)), 1 << (a & 3), force=force)

    def write_words(self, addr: int, words: Iterable[int], force: bool = False) -> None:
        for i, w in enumerate(words):
            self.write_word(addr + 4 * i, w & 0xFFFFFFFF, force=force)

    def read_words(self, addr: int, n: int) -> list[int]:
        return [self.read_word(addr + 4 * i) for i in range(n)]

    def dump_region(self, name: str) -> bytes:
        r = self.amap.region(name)
        return struct.pack(f"<{r.size // 4}I", *self.read_words(r.base, r.size // 4))

    def load_region(self, name: str, data: bytes) -> None:
        r = self.amap.region(name)
        if len(data) > r.size or len(data) % 4:
            raise ValueError(f"image of {len(data)} bytes does not fit {name}")
        self.write_words(r.base, struct.unpack(f"<{len(data) // 4}I", data), force=True)

    # -- timed access ----------------------------------------------------------

    def _commit(self, req: MemRequest, bank: int, off: int) -> None:
        st = self.banks[bank].storage
        if req.write:
            m = BYTE_MASKS[req.byte_enable]
            st[off] = (st[off] & ~m) | (req.wdata & m)
        else:
            req.rdata = st[off]
        req.done = True
        self.words_moved[req.master] += 1

    def post(self, req: MemRequest) -> None:
        """Queue a request for the next arbitration cycle (async masters)."""
        self.check(req)
        self.posted.append(req)

    def cycle(self, extra: Iterable[MemRequest] = ()) -> list[MemRequest]:
        """One interconnect cycle: collect, arbitrate per bank, commit.

        ``extra`` requests take part in this cycle only; posted requests that
        lose stay queued. Returns the requests completed this cycle.
        """
        self.cycles += 1
        reqs = self.posted + list(extra)
        if not reqs:
            return []
        by_bank: dict[int, list[tuple[MemRequest, int]]] = {}
        for r in reqs:
            bank, off = self.check(r)
            by_bank.setdefault(bank, []).append((r, off))
        done: list[MemRequest] = []
        for bank in sorted(by_bank):
            group = by_bank[bank]
            bs = self.banks[bank]
            if len(group) == 1:
                winner = group[0][0].master
                bs.rr_pointer = winner
            else:
                masters = [g[0].master for g in group]
                if len(set(masters)) != len(masters):
                    raise ValueError(f"master issued two requests to bank {bank} in one cycle")
                winner = arbitrate(bs, masters)
            for r, off in group:
                if r.master == winner:
                    self._commit(r, bank, off)
                    bs.grants += 1
                    done.append(r)
                else:
                    r.stalls += 1
                    self.stall_cycles[r.master] += 1
        self.posted = [r for r in self.posted if not r.done]
        for r in done:
            if r.on_done is not None:
                r.on_done(r, r.rdata)
        return done

    def access(self, req: MemRequest) -> tuple[int, int]:
        """Blocking access for a lone master: returns (rdata, stall_cycles)."""
        while True:
            self.cycle([req])
            if req.done:
                return req.rdata, req.stalls


def stream_benchmark(mem: MemorySystem, masters: list[Master], n_words: int,
                     base: int, start_offsets: Optional[list[int]] = None,
                     write: bool = False) -> dict:
    """Each master reads ``n_words`` sequential words; count cycles taken.

    Returns aggregate words/cycle and per-master stall counts.
    """
    if start_offsets is None:
        start_offsets = list(range(len(masters)))
    cursors = {m: 0 for m in masters}
    pending: dict[Master, MemRequest] = {}
    cycles = 0
    moved = 0
    while any(c < n_words for c in cursors.values()) or pending:
        batch = []
        for m, off in zip(masters, start_offsets):
            if m not in pending and cursors[m] < n_words:
                addr = base + 4 * (off + cursors[m])
                pending[m] = MemRequest(m, addr, write=write, wdata=cursors[m])
            if m in pending:
                batch.append(pending[m])
        done = mem.cycle(batch)
        cycles += 1
        for r in done:
            del pending[r.master]
            cursors[r.master] += 1
            moved += 1
    return {
        "cycles": cycles,
        "words": moved,
        "words_per_cycle": moved / cycles if cycles else 0.0,
        "stalls": {m.name: mem.stall_cycles[m] for m in masters},
    }
