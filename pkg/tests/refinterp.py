"""Minimal untimed RV32IM (+pcnt) interpreter used as an oracle for the ISS.

Written straight from the ISA encoding tables and deliberately shares no
code with ``efpgasoc.cpu``.
"""

M = 0xFFFFFFFF


def _sx(v, bits):
    v &= (1 << bits) - 1
    return v - (1 << bits) if v >> (bits - 1) else v


def _signed(v):
    return v - (1 << 32) if v & 0x80000000 else v


class DictMem:
    """Byte-addressed sparse memory."""

    def __init__(self):
        self.b = {}

    def load(self, addr, n):
        return sum(self.b.get(addr + i, 0) << (8 * i) for i in range(n))

    def store(self, addr, n, value):
        for i in range(n):
            self.b[addr + i] = (value >> (8 * i)) & 0xFF

    # word interface for efpgasoc.cpu.FlatBus
    def read_word(self, addr):
        return self.load(addr, 4)

    def write_word(self, addr, value, byte_enable=0xF):
        for i in range(4):
            if byte_enable >> i & 1:
                self.b[addr + i] = (value >> (8 * i)) & 0xFF


class RefCpu:
    def __init__(self, mem, pc=0):
        self.mem = mem
        self.pc = pc
        self.x = [0] * 32
        self.halted = False

    def _w(self, rd, v):
        if rd:
            self.x[rd] = v & M

    def step(self):
        w = self.mem.load(self.pc, 4)
        op = w & 0x7F
        rd = (w >> 7) & 31
        f3 = (w >> 12) & 7
        rs1 = (w >> 15) & 31
        rs2 = (w >> 20) & 31
        f7 = w >> 25
        a, b = self.x[rs1], self.x[rs2]
        nxt = (self.pc + 4) & M
        imm_i = _sx(w >> 20, 12)
        if op == 0x37:
            self._w(rd, w & 0xFFFFF000)
        elif op == 0x17:
            self._w(rd, self.pc + (w & 0xFFFFF000))
        elif op == 0x6F:
            off = (((w >> 31) & 1) << 20) | (((w >> 12) & 0xFF) << 12) | (((w >> 20) & 1) << 11) \
                | (((w >> 21) & 0x3FF) << 1)
            self._w(rd, nxt)
            nxt = (self.pc + _sx(off, 21)) & M
        elif op == 0x67:
            t = (a + imm_i) & ~1 & M
            self._w(rd, nxt)
            nxt = t
        elif op == 0x63:
            off = (((w >> 31) & 1) << 12) | (((w >> 7) & 1) << 11) | (((w >> 25) & 0x3F) << 5) \
                | (((w >> 8) & 0xF) << 1)
            sa, sb = _signed(a), _signed(b)
            take = {0: a == b, 1: a != b, 4: sa < sb, 5: sa >= sb, 6: a < b, 7: a >= b}[f3]
            if take:
                nxt = (self.pc + _sx(off, 13)) & M
        elif op == 0x03:
            addr = (a + imm_i) & M
            n = {0: 1, 1: 2, 2: 4, 4: 1, 5: 2}[f3]
            v = self.mem.load(addr, n)
            if f3 in (0, 1):
                v = _sx(v, 8 * n)
            self._w(rd, v)
        elif op == 0x23:
            off = _sx(((w >> 25) << 5) | ((w >> 7) & 31), 12)
            n = {0: 1, 1: 2, 2: 4}[f3]
            self.mem.store((a + off) & M, n, b)
        elif op == 0x13:
            sh = rs2
            r = {
                0: lambda: a + imm_i,
                2: lambda: int(_signed(a) < imm_i),
                3: lambda: int(a < (imm_i & M)),
                4: lambda: a ^ (imm_i & M),
                6: lambda: a | (imm_i & M),
                7: lambda: a & (imm_i & M),
                1: lambda: a << sh,
                5: lambda: (_signed(a) >> sh) if f7 == 0x20 else (a >> sh),
            }[f3]()
            self._w(rd, r)
        elif op == 0x33 and f7 == 1:
            sa, sb = _signed(a), _signed(b)
            if f3 == 0:
                r = sa * sb
            elif f3 == 1:
                r = (sa * sb) >> 32
            elif f3 == 2:
                r = (sa * b) >> 32
            elif f3 == 3:
                r = (a * b) >> 32
            elif f3 == 4:
                if b == 0:
                    r = -1
                elif sa == -(1 << 31) and sb == -1:
                    r = sa
                else:
                    q = abs(sa) // abs(sb)
                    r = q if (sa < 0) == (sb < 0) else -q
            elif f3 == 5:
                r = M if b == 0 else a // b
            elif f3 == 6:
                if b == 0:
                    r = sa
                elif sa == -(1 << 31) and sb == -1:
                    r = 0
                else:
                    r = abs(sa) % abs(sb)
                    r = -r if sa < 0 else r
            else:
                r = a if b == 0 else a % b
            self._w(rd, r)
        elif op == 0x33:
            s = b & 31
            r = {
                (0, 0): lambda: a + b, (0, 0x20): lambda: a - b,
                (1, 0): lambda: a << s, (2, 0): lambda: int(_signed(a) < _signed(b)),
                (3, 0): lambda: int(a < b), (4, 0): lambda: a ^ b,
                (5, 0): lambda: a >> s, (5, 0x20): lambda: _signed(a) >> s,
                (6, 0): lambda: a | b, (7, 0): lambda: a & b,
            }[(f3, f7)]()
            self._w(rd, r)
        elif op == 0x0B:
            self._w(rd, bin(a).count("1"))
        elif op == 0x73 and w in (0x73, 0x100073):
            self.halted = True
            return
        else:
            raise ValueError(f"reference interpreter cannot run {w:#010x}")
        self.pc = nxt
