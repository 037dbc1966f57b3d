"""Two-pass assembler for the RV32IM subset plus ``pcnt``.

Syntax is the usual GNU-style one-instruction-per-line form::

    .equ  ARGS, 0x1C008000
    _start:
        li    a0, ARGS
        lw    t0, 4(a0)
    loop:
        addi  t0, t0, -1
        bnez  t0, loop
        ecall
    table: .word 1, 2, label+4

Directives: ``.org``, ``.equ``, ``.word``, ``.space``, ``.entry``.
Comments start with ``#`` or ``;``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .memsys import DEFAULT_MAP

ABI = ("zero ra sp gp tp t0 t1 t2 s0 s1 a0 a1 a2 a3 a4 a5 a6 a7 "
       "s2 s3 s4 s5 s6 s7 s8 s9 s10 s11 t3 t4 t5 t6").split()
REGS = {name: i for i, name in enumerate(ABI)}
REGS.update({f"x{i}": i for i in range(32)})
REGS["fp"] = 8

CSRS = {
    "mstatus": 0x300, "mie": 0x304, "mtvec": 0x305, "mscratch": 0x340, "mepc": 0x341,
    "mcause": 0x342, "mtval": 0x343, "mip": 0x344, "mcycle": 0xB00, "minstret": 0xB02,
    "mcycleh": 0xB80, "minstreth": 0xB82, "cycle": 0xC00, "instret": 0xC02,
    "cycleh": 0xC80, "instreth": 0xC82, "irq_pending": 0x7C0, "irq_enable": 0x7C1,
}

R_TYPE = {
    "add": (0, 0), "sub": (0x20, 0), "sll": (0, 1), "slt": (0, 2), "sltu": (0, 3),
    "xor": (0, 4), "srl": (0, 5), "sra": (0x20, 5), "or": (0, 6), "and": (0, 7),
    "mul": (1, 0), "mulh": (1, 1), "mulhsu": (1, 2), "mulhu": (1, 3),
    "div": (1, 4), "divu": (1, 5), "rem": (1, 6), "remu": (1, 7),
}
I_TYPE = {"addi": 0, "slti": 2, "sltiu": 3, "xori": 4, "ori": 6, "andi": 7}
SHIFTS = {"slli": (0, 1), "srli": (0, 5), "srai": (0x20, 5)}
LOADS = {"lb": 0, "lh": 1, "lw": 2, "lbu": 4, "lhu": 5}
STORES = {"sb": 0, "sh": 1, "sw": 2}
BRANCHES = {"beq": 0, "bne": 1, "blt": 4, "bge": 5, "bltu": 6, "bgeu": 7}
CSR_F3 = {"csrrw": 1, "csrrs": 2, "csrrc": 3, "csrrwi": 5, "csrrsi": 6, "csrrci": 7}


class AsmError(Exception):
    def __init__(self, msg: str, line: int = 0, text: str = ""):
        super().__init__(f"line {line}: {msg}: {text.strip()}" if line else msg)
        self.line = line


@dataclass
class ProgramImage:
    base: int
    words: list[int]
    entry: int
    symbols: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.base & 3 or self.entry & 3:
            raise ValueError("base and entry must be word-aligned")

    @property
    def end(self) -> int:
        return self.base + 4 * len(self.words)


# -- expressions ----------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(0x[0-9a-fA-F_]+|0b[01_]+|\d+)|([A-Za-z_.$][\w.$]*)|(%hi|%lo)\(|(.))")


def _eval(expr: str, symbols: dict[str, int]) -> int:
    """Evaluate ``a + b - c`` style expressions over numbers and symbols."""
    expr = expr.strip()
    if not expr:
        raise ValueError("empty expression")
    m = re.fullmatch(r"%(hi|lo)\((.*)\)", expr)
    if m:
        v = _eval(m.group(2), symbols) & 0xFFFFFFFF
        lo = ((v & 0xFFF) ^ 0x800) - 0x800
        return ((v - lo) >> 12) & 0xFFFFF if m.group(1) == "hi" else lo
    total, sign, expect_term = 0, 1, True
    pos = 0
    while pos < len(expr):
        tm = _TOKEN.match(expr, pos)
        if not tm or tm.end() == pos:
            break
        pos = tm.end()
        num, name, _, other = tm.groups()
        if expect_term:
            if other == "-":
                sign = -sign
                continue
            if other == "+":
                continue
            if num is not None:
                v = int(num.replace("_", ""), 0)
            elif name is not None:
                if name not in symbols:
                    raise KeyError(name)
                v = symbols[name]
            elif other == "'" :
                raise ValueError("character literals unsupported")
            else:
                raise ValueError(f"unexpected {other!r}")
            total += sign * v
            sign, expect_term = 1, False
        else:
            if other == "+":
                sign = 1
            elif other == "-":
                sign = -1
            else:
                raise ValueError(f"unexpected token in {expr!r}")
            expect_term = True
    if expect_term:
        raise ValueError(f"dangling operator in {expr!r}")
    return total


def _split_operands(s: str) -> list[str]:
    return [p.strip() for p in s.split(",")] if s.strip() else []


def _reg(tok: str) -> int:
    t = tok.strip().lower()
    if t not in REGS:
        raise ValueError(f"bad register {tok!r}")
    return REGS[t]


def _mem_operand(tok: str) -> tuple[str, int]:
    m = re.fullmatch(r"(.*)\(\s*(\w+)\s*\)", tok.strip())
    if not m:
        raise ValueError(f"bad memory operand {tok!r}")
    return m.group(1).strip() or "0", _reg(m.group(2))


def _check_imm(v: int, bits: int, what: str = "immediate") -> int:
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= v <= hi:
        raise ValueError(f"{what} {v} out of range for {bits} bits")
    return v & ((1 << bits) - 1)


# -- encoders -------------------------------------------------------------------

def enc_r(f7, rs2, rs1, f3, rd, op=0x33):
    return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def enc_i(imm, rs1, f3, rd, op):
    return (_check_imm(imm, 12) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | op


def enc_s(imm, rs2, rs1, f3):
    v = _check_imm(imm, 12)
    return ((v >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((v & 31) << 7) | 0x23


def enc_b(off, rs2, rs1, f3):
    if off & 1:
        raise ValueError("branch offset must be even")
    v = _check_imm(off, 13, "branch offset")
    return (((v >> 12) & 1) << 31) | (((v >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15) \
        | (f3 << 12) | (((v >> 1) & 0xF) << 8) | (((v >> 11) & 1) << 7) | 0x63


def enc_u(imm20, rd, op):
    return ((imm20 & 0xFFFFF) << 12) | (rd << 7) | op


def enc_j(off, rd):
    if off & 1:
        raise ValueError("jump offset must be even")
    v = _check_imm(off, 21, "jump offset")
    return (((v >> 20) & 1) << 31) | (((v >> 1) & 0x3FF) << 21) | (((v >> 11) & 1) << 20) \
        | (((v >> 12) & 0xFF) << 12) | (rd << 7) | 0x6F


def _hi_lo(v: int) -> tuple[int, int]:
    v &= 0xFFFFFFFF
    lo = ((v & 0xFFF) ^ 0x800) - 0x800
    return ((v - lo) >> 12) & 0xFFFFF, lo


# -- assembler ------------------------------------------------------------------

@dataclass
class _Line:
    lineno: int
    text: str
    mnemonic: str
    operands: list[str]
    addr: int
    size: int  # bytes


def _li_size(expr: str, symbols: dict[str, int]) -> int:
    try:
        v = _eval(expr, symbols)
    except (KeyError, ValueError):
        return 8
    return 4 if -2048 <= v <= 2047 else 8


def _size_of(mn: str, ops: list[str], symbols: dict[str, int]) -> int:
    if mn == "li":
        return _li_size(ops[1], symbols)
    if mn in ("la", "call", "tail"):
        return 8
    return 4


class Assembler:
    def __init__(self, base: Optional[int] = None):
        self.base = DEFAULT_MAP.private0_base if base is None else base

    def assemble(self, source: str, predefined: Optional[dict[str, int]] = None) -> ProgramImage:
        symbols: dict[str, int] = dict(predefined or {})
        lines: list[_Line] = []
        data: dict[int, list] = {}
        pc = self.base
        base = self.base
        entry_expr: Optional[str] = None
        # pass 1: addresses and symbols
        for lineno, raw in enumerate(source.splitlines(), 1):
            text = re.split(r"[#;]", raw, 1)[0].strip()
            while True:
                m = re.match(r"([A-Za-z_.$][\w.$]*)\s*:(.*)", text)
                if not m:
                    break
                label = m.group(1)
                if label in symbols:
                    raise AsmError(f"duplicate label {label}", lineno, raw)
                symbols[label] = pc
                text = m.group(2).strip()
            if not text:
                continue
            parts = text.split(None, 1)
            mn = parts[0].lower()
            ops = _split_operands(parts[1]) if len(parts) > 1 else []
            try:
                if mn == ".equ" or mn == ".set":
                    symbols[ops[0]] = _eval(ops[1], symbols)
                    continue
                if mn == ".org":
                    new = _eval(ops[0], symbols)
                    if not lines and new != pc and pc == base:
                        base = pc = new
                    elif new < pc:
                        raise ValueError(".org cannot move backwards")
                    else:
                        lines.append(_Line(lineno, raw, ".space", [str(new - pc)], pc, new - pc))
                        pc = new
                    continue
                if mn == ".entry":
                    entry_expr = ops[0]
                    continue
                if mn == ".word":
                    size = 4 * len(ops)
                elif mn == ".space":
                    size = _eval(ops[0], symbols)
                    if size % 4:
                        raise ValueError(".space must be a multiple of 4")
                else:
                    size = _size_of(mn, ops, symbols)
            except (KeyError, ValueError, IndexError) as e:
                raise AsmError(str(e), lineno, raw) from None
            lines.append(_Line(lineno, raw, mn, ops, pc, size))
            pc += size
        # pass 2: encode
        words: list[int] = []
        for ln in lines:
            try:
                enc = self._encode(ln, symbols)
            except (KeyError, ValueError, IndexError) as e:
                raise AsmError(str(e) if not isinstance(e, KeyError) else f"undefined symbol {e}",
                               ln.lineno, ln.text) from None
            if len(enc) * 4 != ln.size:
                raise AsmError("internal size mismatch", ln.lineno, ln.text)
            words.extend(w & 0xFFFFFFFF for w in enc)
        if entry_expr is not None:
            entry = _eval(entry_expr, symbols)
        else:
            entry = symbols.get("_start", base)
        return ProgramImage(base, words, entry, symbols)

    def _encode(self, ln: _Line, sym: dict[str, int]) -> list[int]:
        mn, ops, pc = ln.mnemonic, ln.operands, ln.addr
        ev = lambda e: _eval(e, sym)  # noqa: E731
        if mn == ".word":
            return [ev(o) for o in ops]
        if mn == ".space":
            return [0] * (ln.size // 4)
        if mn in R_TYPE:
            f7, f3 = R_TYPE[mn]
            return [enc_r(f7, _reg(ops[2]), _reg(ops[1]), f3, _reg(ops[0]))]
        if mn in I_TYPE:
            return [enc_i(ev(ops[2]), _reg(ops[1]), I_TYPE[mn], _reg(ops[0]), 0x13)]
        if mn in SHIFTS:
            f7, f3 = SHIFTS[mn]
            sh = ev(ops[2])
            if not 0 <= sh < 32:
                raise ValueError(f"shift amount {sh}")
            return [enc_r(f7, sh, _reg(ops[1]), f3, _reg(ops[0]), 0x13)]
        if mn in LOADS:
            off, rs1 = _mem_operand(ops[1])
            return [enc_i(ev(off), rs1, LOADS[mn], _reg(ops[0]), 0x03)]
        if mn in STORES:
            off, rs1 = _mem_operand(ops[1])
            return [enc_s(ev(off), _reg(ops[0]), rs1, STORES[mn])]
        if mn in BRANCHES:
            return [enc_b(ev(ops[2]) - pc, _reg(ops[1]), _reg(ops[0]), BRANCHES[mn])]
        if mn == "lui":
            return [enc_u(ev(ops[1]), _reg(ops[0]), 0x37)]
        if mn == "auipc":
            return [enc_u(ev(ops[1]), _reg(ops[0]), 0x17)]
        if mn == "jal":
            if len(ops) == 1:
                return [enc_j(ev(ops[0]) - pc, 1)]
            return [enc_j(ev(ops[1]) - pc, _reg(ops[0]))]
        if mn == "jalr":
            if len(ops) == 1:
                return [enc_i(0, _reg(ops[0]), 0, 1, 0x67)]
            if "(" in ops[-1]:
                off, rs1 = _mem_operand(ops[1])
                return [enc_i(ev(off), rs1, 0, _reg(ops[0]), 0x67)]
            return [enc_i(ev(ops[2]) if len(ops) > 2 else 0, _reg(ops[1]), 0, _reg(ops[0]), 0x67)]
        if mn in CSR_F3:
            csr = CSRS.get(ops[1].lower())
            csr = ev(ops[1]) if csr is None else csr
            src = ev(ops[2]) if mn.endswith("i") else _reg(ops[2])
            if mn.endswith("i") and not 0 <= src < 32:
                raise ValueError("csr immediate must be 0..31")
            return [(csr << 20) | (src << 15) | (CSR_F3[mn] << 12) | (_reg(ops[0]) << 7) | 0x73]
        if mn == "pcnt":
            return [(_reg(ops[1]) << 15) | (_reg(ops[0]) << 7) | 0x0B]
        simple = {"ecall": 0x00000073, "ebreak": 0x00100073, "mret": 0x30200073,
                  "wfi": 0x10500073, "fence": 0x0FF0000F, "nop": 0x00000013}
        if mn in simple:
            return [simple[mn]]
        return self._pseudo(mn, ops, pc, sym, ln.size)

    def _pseudo(self, mn, ops, pc, sym, size) -> list[int]:
        ev = lambda e: _eval(e, sym)  # noqa: E731
        if mn in ("li", "la"):
            rd = _reg(ops[0])
            v = ev(ops[1])
            if size == 4:
                return [enc_i(v, 0, 0, rd, 0x13)]
            hi, lo = _hi_lo(v)
            return [enc_u(hi, rd, 0x37), enc_i(lo, rd, 0, rd, 0x13)]
        if mn == "mv":
            return [enc_i(0, _reg(ops[1]), 0, _reg(ops[0]), 0x13)]
        if mn == "not":
            return [enc_i(-1, _reg(ops[1]), 4, _reg(ops[0]), 0x13)]
        if mn == "neg":
            return [enc_r(0x20, _reg(ops[1]), 0, 0, _reg(ops[0]))]
        if mn == "seqz":
            return [enc_i(1, _reg(ops[1]), 3, _reg(ops[0]), 0x13)]
        if mn == "snez":
            return [enc_r(0, _reg(ops[1]), 0, 3, _reg(ops[0]))]
        if mn == "j":
            return [enc_j(ev(ops[0]) - pc, 0)]
        if mn == "jr":
            return [enc_i(0, _reg(ops[0]), 0, 0, 0x67)]
        if mn == "ret":
            return [enc_i(0, 1, 0, 0, 0x67)]
        if mn in ("call", "tail"):
            rd = 1 if mn == "call" else 0
            hi, lo = _hi_lo(ev(ops[0]) - pc)
            return [enc_u(hi, 6 if rd == 0 else 1, 0x17), enc_i(lo, 6 if rd == 0 else 1, 0, rd, 0x67)]
        zero_br = {"beqz": ("beq", False), "bnez": ("bne", False), "bgez": ("bge", False),
                   "bltz": ("blt", False), "blez": ("bge", True), "bgtz": ("blt", True)}
        if mn in zero_br:
            base, swap = zero_br[mn]
            r = _reg(ops[0])
            rs1, rs2 = (0, r) if swap else (r, 0)
            return [enc_b(ev(ops[1]) - pc, rs2, rs1, BRANCHES[base])]
        swapped = {"bgt": "blt", "ble": "bge", "bgtu": "bltu", "bleu": "bgeu"}
        if mn in swapped:
            return [enc_b(ev(ops[2]) - pc, _reg(ops[0]), _reg(ops[1]), BRANCHES[swapped[mn]])]
        csr_short = {"csrr": ("csrrs", True), "csrw": ("csrrw", False), "csrs": ("csrrs", False),
                     "csrc": ("csrrc", False)}
        if mn in csr_short:
            real, is_read = csr_short[mn]
            csr = CSRS.get(ops[-1 if is_read else 0].lower())
            if is_read:
                csr = ev(ops[1]) if csr is None else csr
                return [(csr << 20) | (CSR_F3[real] << 12) | (_reg(ops[0]) << 7) | 0x73]
            csr = ev(ops[0]) if csr is None else csr
            return [(csr << 20) | (_reg(ops[1]) << 15) | (CSR_F3[real] << 12) | 0x73]
        raise ValueError(f"unknown mnemonic {mn!r}")


def assemble(source: str, base: Optional[int] = None,
             symbols: Optional[dict[str, int]] = None) -> ProgramImage:
    """Assemble ``source``; ``symbols`` are predefined constants it may use."""
    return Assembler(base).assemble(source, symbols)


def assemble_file(path, symbols: Optional[dict[str, int]] = None) -> ProgramImage:
    return assemble(Path(path).read_text(), symbols=symbols)
