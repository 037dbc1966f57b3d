"""RV32IM instruction-set simulator with a per-instruction cycle-cost table.

Besides RV32IM the core understands WFI, MRET, a handful of machine CSRs
and one custom instruction, ``pcnt rd, rs1`` (population count), encoded
in the custom-0 opcode space. ECALL/EBREAK halt the core, which is the
end-of-program convention used by the shipped programs.

Interrupts use a single vector (``mtvec``) and a 32-bit pending register:
lines 0..15 are the eFPGA events, 16 and up are SoC events such as uDMA
end-of-transfer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Protocol

from .memsys import MemError

MASK = 0xFFFFFFFF

# One editable cost table (cycles). Memory stalls come on top.
COSTS = {
    "alu": 1,
    "branch_not_taken": 1,
    "branch_taken": 2,
    "jump": 2,
    "load": 1,
    "store": 1,
    "mul": 1,
    "div": 35,
    "wfi": 1,
    "csr": 1,
    "system": 1,
    "mret": 2,
    "trap": 1,
}

# CSR numbers
MSTATUS, MIE_CSR, MTVEC, MSCRATCH, MEPC, MCAUSE, MTVAL, MIP = (
    0x300, 0x304, 0x305, 0x340, 0x341, 0x342, 0x343, 0x344)
MCYCLE, MINSTRET, MCYCLEH, MINSTRETH = 0xB00, 0xB02, 0xB80, 0xB82
CYCLE, INSTRET, CYCLEH, INSTRETH = 0xC00, 0xC02, 0xC80, 0xC82
IRQ_PENDING, IRQ_ENABLE = 0x7C0, 0x7C1

CAUSE_ILLEGAL = 2
CAUSE_LOAD_MISALIGNED, CAUSE_LOAD_FAULT = 4, 5
CAUSE_STORE_MISALIGNED, CAUSE_STORE_FAULT = 6, 7
CAUSE_IRQ = 0x8000_0000


def s32(x: int) -> int:
    return x - 0x1_0000_0000 if x & 0x8000_0000 else x


def sext(value: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (value & (sign - 1)) - (value & sign)


class Mode(enum.Enum):
    RUNNING = "running"
    WFI = "wfi"
    HALTED = "halted"


class IllegalInstruction(Exception):
    pass


@dataclass
class CpuState:
    pc: int = 0
    regs: list = field(default_factory=lambda: [0] * 32)
    mode: Mode = Mode.RUNNING
    cycle_count: int = 0
    stall_pending: int = 0
    trap_vector: int = 0
    instret: int = 0
    pending: int = 0
    irq_enable: int = MASK
    mstatus: int = 0
    mepc: int = 0
    mcause: int = 0
    mtval: int = 0
    mscratch: int = 0


class DataAccess(NamedTuple):
    addr: int  # word aligned
    write: bool
    wdata: int
    byte_enable: int


class CpuBus(Protocol):
    def read_instr(self, addr: int) -> int: ...

    def cpu_cycle(self, fetch_addr: Optional[int], data: Optional[DataAccess]
                  ) -> tuple[bool, Optional[tuple[int, int]]]:
        """Run one MCU bus cycle for the core.

        Returns (fetch granted, data result) where the data result is
        ``(rdata, extra_cycles)`` or None when the access must be retried.
        """
        ...


class StepRecord(NamedTuple):
    pc: int
    word: int
    name: str
    cost: int


class Instr:
    __slots__ = ("word", "name", "kind", "rd", "rs1", "rs2", "imm", "size", "signed", "run")

    def __init__(self, word, name, kind, rd=0, rs1=0, rs2=0, imm=0, size=4, signed=False):
        self.word = word
        self.name = name
        self.kind = kind
        self.rd = rd
        self.rs1 = rs1
        self.rs2 = rs2
        self.imm = imm
        self.size = size
        self.signed = signed
        self.run: Callable = None


def _alu_fn(name: str) -> Callable[[int, int], int]:
    def div(a, b):
        a, b = s32(a), s32(b)
        if b == 0:
            return MASK
        if a == -0x8000_0000 and b == -1:
            return 0x8000_0000
        q = abs(a) // abs(b)
        return (-q if (a < 0) != (b < 0) else q) & MASK

    def rem(a, b):
        a, b = s32(a), s32(b)
        if b == 0:
            return a & MASK
        if a == -0x8000_0000 and b == -1:
            return 0
        r = abs(a) % abs(b)
        return (-r if a < 0 else r) & MASK

    table = {
        "add": lambda a, b: (a + b) & MASK,
        "sub": lambda a, b: (a - b) & MASK,
        "sll": lambda a, b: (a << (b & 31)) & MASK,
        "slt": lambda a, b: int(s32(a) < s32(b)),
        "sltu": lambda a, b: int(a < b),
        "xor": lambda a, b: a ^ b,
        "srl": lambda a, b: a >> (b & 31),
        "sra": lambda a, b: (s32(a) >> (b & 31)) & MASK,
        "or": lambda a, b: a | b,
        "and": lambda a, b: a & b,
        "mul": lambda a, b: (a * b) & MASK,
        "mulh": lambda a, b: ((s32(a) * s32(b)) >> 32) & MASK,
        "mulhsu": lambda a, b: ((s32(a) * b) >> 32) & MASK,
        "mulhu": lambda a, b: (a * b) >> 32,
        "div": div,
        "divu": lambda a, b: a // b if b else MASK,
        "rem": rem,
        "remu": lambda a, b: a % b if b else a,
    }
    return table[name]


R_OPS = {
    (0, 0): "add", (0x20, 0): "sub", (0, 1): "sll", (0, 2): "slt", (0, 3): "sltu",
    (0, 4): "xor", (0, 5): "srl", (0x20, 5): "sra", (0, 6): "or", (0, 7): "and",
    (1, 0): "mul", (1, 1): "mulh", (1, 2): "mulhsu", (1, 3): "mulhu",
    (1, 4): "div", (1, 5): "divu", (1, 6): "rem", (1, 7): "remu",
}
I_OPS = {0: "addi", 2: "slti", 3: "sltiu", 4: "xori", 6: "ori", 7: "andi"}
BRANCHES = {0: "beq", 1: "bne", 4: "blt", 5: "bge", 6: "bltu", 7: "bgeu"}
LOADS = {0: ("lb", 1, True), 1: ("lh", 2, True), 2: ("lw", 4, False),
         4: ("lbu", 1, False), 5: ("lhu", 2, False)}
STORES = {0: ("sb", 1), 1: ("sh", 2), 2: ("sw", 4)}
CSR_OPS = {1: "csrrw", 2: "csrrs", 3: "csrrc", 5: "csrrwi", 6: "csrrsi", 7: "csrrci"}

_BRANCH_TEST = {
    "beq": lambda a, b: a == b,
    "bne": lambda a, b: a != b,
    "blt": lambda a, b: s32(a) < s32(b),
    "bge": lambda a, b: s32(a) >= s32(b),
    "bltu": lambda a, b: a < b,
    "bgeu": lambda a, b: a >= b,
}


def decode(word: int) -> Instr:
    """Decode one 32-bit instruction into an :class:`Instr` with a bound executor."""
    op = word & 0x7F
    rd = (word >> 7) & 31
    f3 = (word >> 12) & 7
    rs1 = (word >> 15) & 31
    rs2 = (word >> 20) & 31
    f7 = word >> 25
    imm_i = sext(word >> 20, 12)
    C = COSTS

    if op == 0x37 or op == 0x17:  # LUI / AUIPC
        imm = word & 0xFFFFF000
        ins = Instr(word, "lui" if op == 0x37 else "auipc", "alu", rd=rd, imm=imm)
        if op == 0x37:
            def run(cpu, pc, res, rd=rd, imm=imm):
                if rd:
                    cpu.regs[rd] = imm
                cpu.state.pc = (pc + 4) & MASK
                return C["alu"]
        else:
            def run(cpu, pc, res, rd=rd, imm=imm):
                if rd:
                    cpu.regs[rd] = (pc + imm) & MASK
                cpu.state.pc = (pc + 4) & MASK
                return C["alu"]
        ins.run = run
        return ins

    if op == 0x6F:  # JAL
        imm = sext(((word >> 31) << 20) | (((word >> 12) & 0xFF) << 12)
                   | (((word >> 20) & 1) << 11) | (((word >> 21) & 0x3FF) << 1), 21)
        ins = Instr(word, "jal", "jump", rd=rd, imm=imm)

        def run(cpu, pc, res, rd=rd, imm=imm):
            if rd:
                cpu.regs[rd] = (pc + 4) & MASK
            cpu.state.pc = (pc + imm) & MASK
            return C["jump"]
        ins.run = run
        return ins

    if op == 0x67 and f3 == 0:  # JALR
        ins = Instr(word, "jalr", "jump", rd=rd, rs1=rs1, imm=imm_i)

        def run(cpu, pc, res, rd=rd, rs1=rs1, imm=imm_i):
            target = (cpu.regs[rs1] + imm) & ~1 & MASK
            if rd:
                cpu.regs[rd] = (pc + 4) & MASK
            cpu.state.pc = target
            return C["jump"]
        ins.run = run
        return ins

    if op == 0x63 and f3 in BRANCHES:
        imm = sext(((word >> 31) << 12) | (((word >> 7) & 1) << 11)
                   | (((word >> 25) & 0x3F) << 5) | (((word >> 8) & 0xF) << 1), 13)
        name = BRANCHES[f3]
        test = _BRANCH_TEST[name]
        ins = Instr(word, name, "branch", rs1=rs1, rs2=rs2, imm=imm)

        def run(cpu, pc, res, rs1=rs1, rs2=rs2, imm=imm, test=test):
            r = cpu.regs
            if test(r[rs1], r[rs2]):
                cpu.state.pc = (pc + imm) & MASK
                return C["branch_taken"]
            cpu.state.pc = (pc + 4) & MASK
            return C["branch_not_taken"]
        ins.run = run
        return ins

    if op == 0x03 and f3 in LOADS:
        name, size, signed = LOADS[f3]
        ins = Instr(word, name, "load", rd=rd, rs1=rs1, imm=imm_i, size=size, signed=signed)

        def run(cpu, pc, res, rd=rd, size=size, signed=signed, rs1=rs1, imm=imm_i):
            rdata, extra = res
            addr = (cpu.regs[rs1] + imm) & MASK
            v = (rdata >> (8 * (addr & 3))) & ((1 << (8 * size)) - 1)
            if signed:
                v = sext(v, 8 * size) & MASK
            if rd:
                cpu.regs[rd] = v
            cpu.state.pc = (pc + 4) & MASK
            return C["load"] + extra
        ins.run = run
        return ins

    if op == 0x23 and f3 in STORES:
        name, size = STORES[f3]
        imm = sext(((word >> 25) << 5) | ((word >> 7) & 31), 12)
        ins = Instr(word, name, "store", rs1=rs1, rs2=rs2, imm=imm, size=size)

        def run(cpu, pc, res):
            cpu.state.pc = (pc + 4) & MASK
            return C["store"] + res[1]
        ins.run = run
        return ins

    if op == 0x13:
        if f3 in I_OPS:
            name = I_OPS[f3]
            fn = _alu_fn({"addi": "add", "slti": "slt", "sltiu": "sltu", "xori": "xor",
                          "ori": "or", "andi": "and"}[name])
            b = imm_i & MASK
        elif f3 == 1 and f7 == 0:
            name, fn, b = "slli", _alu_fn("sll"), rs2
        elif f3 == 5 and f7 in (0, 0x20):
            name = "srai" if f7 else "srli"
            fn, b = _alu_fn("sra" if f7 else "srl"), rs2
        else:
            raise IllegalInstruction(f"{word:#010x}")
        ins = Instr(word, name, "alu", rd=rd, rs1=rs1, imm=b)
        if rd:
            def run(cpu, pc, res, rd=rd, rs1=rs1, b=b, fn=fn):
                cpu.regs[rd] = fn(cpu.regs[rs1], b)
                cpu.state.pc = (pc + 4) & MASK
                return C["alu"]
        else:
            def run(cpu, pc, res):
                cpu.state.pc = (pc + 4) & MASK
                return C["alu"]
        ins.run = run
        return ins

    if op == 0x33 and (f7, f3) in R_OPS:
        name = R_OPS[(f7, f3)]
        fn = _alu_fn(name)
        kind = "div" if name in ("div", "divu", "rem", "remu") else ("mul" if f7 == 1 else "alu")
        cost = C[kind]
        ins = Instr(word, name, kind, rd=rd, rs1=rs1, rs2=rs2)

        def run(cpu, pc, res, rd=rd, rs1=rs1, rs2=rs2, fn=fn, cost=cost):
            r = cpu.regs
            v = fn(r[rs1], r[rs2])
            if rd:
                r[rd] = v
            cpu.state.pc = (pc + 4) & MASK
            return cost
        ins.run = run
        return ins

    if op == 0x0B and f3 == 0 and f7 == 0 and rs2 == 0:  # pcnt rd, rs1
        ins = Instr(word, "pcnt", "alu", rd=rd, rs1=rs1)

        def run(cpu, pc, res, rd=rd, rs1=rs1):
            if rd:
                cpu.regs[rd] = bin(cpu.regs[rs1]).count("1")
            cpu.state.pc = (pc + 4) & MASK
            return C["alu"]
        ins.run = run
        return ins

    if op == 0x0F:  # FENCE / FENCE.I: no caches, no-op
        ins = Instr(word, "fence", "alu")

        def run(cpu, pc, res):
            cpu.state.pc = (pc + 4) & MASK
            return C["alu"]
        ins.run = run
        return ins

    if op == 0x73:
        if f3 == 0 and rd == 0 and rs1 == 0:
            funct12 = word >> 20
            name = {0: "ecall", 1: "ebreak", 0x302: "mret", 0x105: "wfi"}.get(funct12)
            if name is None:
                raise IllegalInstruction(f"{word:#010x}")
            ins = Instr(word, name, "system")
            if name in ("ecall", "ebreak"):
                def run(cpu, pc, res):
                    cpu.state.pc = (pc + 4) & MASK
                    cpu.halt()
                    return C["system"]
            elif name == "mret":
                def run(cpu, pc, res):
                    st = cpu.state
                    mpie = (st.mstatus >> 7) & 1
                    st.mstatus = (st.mstatus & ~0x8) | (mpie << 3) | 0x80
                    st.pc = st.mepc
                    return C["mret"]
            else:
                def run(cpu, pc, res):
                    cpu.state.pc = (pc + 4) & MASK
                    cpu.enter_wfi()
                    return C["wfi"]
            ins.run = run
            return ins
        if f3 in CSR_OPS:
            name = CSR_OPS[f3]
            csr = word >> 20
            ins = Instr(word, name, "csr", rd=rd, rs1=rs1, imm=csr)

            def run(cpu, pc, res, rd=rd, rs1=rs1, csr=csr, f3=f3):
                old = cpu.read_csr(csr)
                src = rs1 if f3 >= 5 else cpu.regs[rs1]
                kind = f3 & 3
                if kind == 1:
                    cpu.write_csr(csr, src)
                elif rs1 != 0:
                    cpu.write_csr(csr, old | src if kind == 2 else old & ~src & MASK)
                if rd:
                    cpu.regs[rd] = old
                cpu.state.pc = (pc + 4) & MASK
                return C["csr"]
            ins.run = run
            return ins

    raise IllegalInstruction(f"{word:#010x}")


class _Illegal:
    """Cached marker for words that do not decode."""

    def __init__(self, word):
        self.word = word
        self.kind = "illegal"
        self.name = "illegal"


class Cpu:
    """One in-order core. ``bus`` implements :class:`CpuBus`."""

    def __init__(self, bus: CpuBus, state: Optional[CpuState] = None,
                 on_mode_change: Optional[Callable[[Mode], None]] = None):
        self.bus = bus
        self.state = state or CpuState()
        self.regs = self.state.regs
        self._decoded: dict[int, object] = {}
        self._fetched = False
        self.on_mode_change = on_mode_change

    # -- state transitions -------------------------------------------------

    def _set_mode(self, mode: Mode) -> None:
        if self.state.mode is not mode:
            self.state.mode = mode
            if self.on_mode_change:
                self.on_mode_change(mode)

    def halt(self) -> None:
        self._set_mode(Mode.HALTED)

    def enter_wfi(self) -> None:
        st = self.state
        if st.pending & st.irq_enable:
            self._trap(CAUSE_IRQ | self._lowest_line(), st.pc)
            return
        self._set_mode(Mode.WFI)

    @staticmethod
    def _lowest(bits: int) -> int:
        return (bits & -bits).bit_length() - 1

    def _lowest_line(self) -> int:
        return self._lowest(self.state.pending & self.state.irq_enable)

    def _trap(self, cause: int, epc: int, tval: int = 0) -> None:
        st = self.state
        st.mepc = epc & MASK
        st.mcause = cause
        st.mtval = tval
        mie = (st.mstatus >> 3) & 1
        st.mstatus = (st.mstatus & ~0x88) | (mie << 7)
        st.pc = st.trap_vector & ~3

    def raise_interrupt(self, line: int) -> None:
        """Set a pending bit; a core waiting in WFI wakes into the vector."""
        if not 0 <= line < 32:
            raise ValueError(f"interrupt line {line} out of range")
        st = self.state
        st.pending |= 1 << line
        if st.mode is Mode.WFI and st.pending & st.irq_enable:
            self._trap(CAUSE_IRQ | line, st.pc)
            self._set_mode(Mode.RUNNING)

    # -- CSRs --------------------------------------------------------------

    def read_csr(self, csr: int) -> int:
        st = self.state
        table = {
            MSTATUS: st.mstatus, MTVEC: st.trap_vector, MEPC: st.mepc, MCAUSE: st.mcause,
            MTVAL: st.mtval, MSCRATCH: st.mscratch,
            MIE_CSR: st.irq_enable, IRQ_ENABLE: st.irq_enable,
            MIP: st.pending, IRQ_PENDING: st.pending,
            MCYCLE: st.cycle_count & MASK, CYCLE: st.cycle_count & MASK,
            MCYCLEH: st.cycle_count >> 32, CYCLEH: st.cycle_count >> 32,
            MINSTRET: st.instret & MASK, INSTRET: st.instret & MASK,
            MINSTRETH: st.instret >> 32, INSTRETH: st.instret >> 32,
        }
        if csr not in table:
            raise IllegalInstruction(f"csr {csr:#x}")
        return table[csr]

    def write_csr(self, csr: int, value: int) -> None:
        st = self.state
        value &= MASK
        if csr == MSTATUS:
            st.mstatus = value & 0x88
        elif csr == MTVEC:
            st.trap_vector = value & ~3
        elif csr == MEPC:
            st.mepc = value & ~1
        elif csr == MCAUSE:
            st.mcause = value
        elif csr == MTVAL:
            st.mtval = value
        elif csr == MSCRATCH:
            st.mscratch = value
        elif csr in (MIE_CSR, IRQ_ENABLE):
            st.irq_enable = value
        elif csr in (MIP, IRQ_PENDING):
            st.pending = value
        elif csr in (MCYCLE, MINSTRET, CYCLE, INSTRET, MCYCLEH, MINSTRETH, CYCLEH, INSTRETH):
            raise IllegalInstruction(f"csr {csr:#x} is read-only here")
        else:
            raise IllegalInstruction(f"csr {csr:#x}")

    # -- execution -----------------------------------------------------------

    def _decode_word(self, word: int):
        ins = self._decoded.get(word)
        if ins is None:
            try:
                ins = decode(word)
            except IllegalInstruction:
                ins = _Illegal(word)
            self._decoded[word] = ins
        return ins

    def step(self) -> Optional[StepRecord]:
        """Advance the core by one MCU cycle.

        Returns a record when an instruction retires on this cycle, otherwise
        None (stall, multi-cycle tail, WFI or halt).
        """
        st = self.state
        bus = self.bus
        if st.mode is not Mode.RUNNING:
            if st.mode is Mode.WFI:
                st.cycle_count += 1
            bus.cpu_cycle(None, None)
            return None
        if st.stall_pending:
            st.stall_pending -= 1
            st.cycle_count += 1
            bus.cpu_cycle(None, None)
            return None
        if st.mstatus & 0x8 and st.pending & st.irq_enable and not self._fetched:
            line = self._lowest_line()
            self._trap(CAUSE_IRQ | line, st.pc)
            st.cycle_count += COSTS["trap"]
            bus.cpu_cycle(None, None)
            return None

        pc = st.pc
        try:
            word = bus.read_instr(pc)
        except MemError:
            return self._fault(1, pc, pc)
        ins = self._decode_word(word)
        kind = ins.kind
        data = None
        if kind == "load" or kind == "store":
            addr = (self.regs[ins.rs1] + ins.imm) & MASK
            if addr & (ins.size - 1):
                bus.cpu_cycle(None if self._fetched else pc, None)
                self._fetched = False
                return self._fault(CAUSE_LOAD_MISALIGNED if kind == "load" else CAUSE_STORE_MISALIGNED,
                                   pc, addr)
            if kind == "store":
                sh = 8 * (addr & 3)
                be = ((1 << ins.size) - 1) << (addr & 3)
                data = DataAccess(addr & ~3, True, (self.regs[ins.rs2] << sh) & MASK, be)
            else:
                data = DataAccess(addr & ~3, False, 0, 0xF)
        elif kind == "illegal":
            bus.cpu_cycle(None if self._fetched else pc, None)
            self._fetched = False
            return self._fault(CAUSE_ILLEGAL, pc, word)

        try:
            fetched, res = bus.cpu_cycle(None if self._fetched else pc, data)
        except MemError:
            self._fetched = False
            return self._fault(CAUSE_LOAD_FAULT if kind == "load" else CAUSE_STORE_FAULT, pc,
                               data.addr if data else pc)
        if not fetched:
            st.cycle_count += 1
            return None
        self._fetched = True
        if data is not None and res is None:
            st.cycle_count += 1
            return None
        self._fetched = False
        try:
            cost = ins.run(self, pc, res)
        except IllegalInstruction:
            return self._fault(CAUSE_ILLEGAL, pc, word)
        st.cycle_count += 1  # the remaining cost - 1 cycles tick through stall_pending
        st.stall_pending = cost - 1
        st.instret += 1
        return StepRecord(pc, word, ins.name, cost)

    def _fault(self, cause: int, pc: int, tval: int) -> StepRecord:
        st = self.state
        self._trap(cause, pc, tval)
        st.cycle_count += COSTS["trap"]
        return StepRecord(pc, 0, "trap", COSTS["trap"])

    def run(self, max_steps: int = 1_000_000) -> int:
        """Step until halted/WFI or ``max_steps`` cycles; returns cycles stepped."""
        n = 0
        while self.state.mode is Mode.RUNNING and n < max_steps:
            self.step()
            n += 1
        return n


class FlatBus:
    """Untimed bus for standalone use: every access granted, no stalls."""

    def __init__(self, mem):
        self.mem = mem

    def read_instr(self, addr: int) -> int:
        return self.mem.read_word(addr)

    def cpu_cycle(self, fetch_addr, data):
        if data is None:
            return True, None
        if data.write:
            self.mem.write_word(data.addr, data.wdata, data.byte_enable)
            return True, (0, 0)
        return True, (self.mem.read_word(data.addr), 0)
