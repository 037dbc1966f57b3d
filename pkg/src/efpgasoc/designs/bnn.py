"""Binary convolution: the window kernel and the two-window, eight-filter accelerator.

Layout in memory (all 32-bit words, 32 one-bit channels each):
  input  word (r, c)        at in_ptr   + 4 * (r * cols + c)
  filter word (f, i, j)     at filt_ptr + 4 * (f * 9 + i * 3 + j)
  output byte (r, c)        at out_ptr  + r * (cols - 2) + c, bit f = filter f
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from ..efpga import FabricIO, ResourceUsage, SoftDesign, register_design

N_FILTERS = 8
WINDOW_BITS = 9 * 32


def bnn_window(inputs, filt, threshold: int) -> int:
    """1 iff at least ``threshold`` of the 288 input/filter bits agree."""
    mism = sum(bin((a ^ b) & 0xFFFFFFFF).count("1") for a, b in zip(inputs, filt))
    return int(WINDOW_BITS - mism >= threshold)


@dataclass(frozen=True)
class BnnJob:
    in_ptr: int
    filt_ptr: int
    out_ptr: int
    rows: int
    cols: int
    threshold: int

    def __post_init__(self):
        if self.rows < 3 or self.cols < 3:
            raise ValueError("rows and cols must be at least 3")
        if self.in_ptr & 3 or self.filt_ptr & 3:
            raise ValueError("input and filter pointers must be word-aligned")

    @property
    def out_rows(self) -> int:
        return self.rows - 2

    @property
    def out_cols(self) -> int:
        return self.cols - 2


def bnn_reference(inputs: list[int], filters: list[int], job: BnnJob) -> bytes:
    """Output bytes computed straight from the definition."""
    out = bytearray()
    for r in range(job.out_rows):
        for c in range(job.out_cols):
            win = [inputs[(r + i) * job.cols + c + j] for i in range(3) for j in range(3)]
            byte = 0
            for f in range(N_FILTERS):
                byte |= bnn_window(win, filters[f * 9:(f + 1) * 9], job.threshold) << f
            out.append(byte)
    return bytes(out)


class Phase(enum.IntEnum):
    IDLE = 0
    ISSUE = 1
    WAIT = 2
    XOR = 3
    ACC = 4
    STORE = 5
    DRAIN = 6


# user APB register indices
R_CTRL, R_IN, R_FILT, R_OUT, R_ROWS, R_COLS, R_THRESH, R_STATUS = range(8)


@dataclass
class BnnState:
    phase: Phase = Phase.IDLE
    job: tuple = ()
    r: int = 0
    c: int = 0
    pos: int = 0  # window position 0..8
    fetch: int = 0  # 0: inputs, 1: filters 0-3, 2: filters 4-7
    inputs: list = field(default_factory=lambda: [0, 0])
    words: list = field(default_factory=lambda: [0] * 4)
    got: list = field(default_factory=lambda: [False] * 4)
    expect: list = field(default_factory=lambda: [False] * 4)
    partial: list = field(default_factory=lambda: [0] * 4)
    mism: list = field(default_factory=lambda: [0] * 16)  # [window * 8 + filter]
    stores: list = field(default_factory=list)
    pixels: int = 0


@register_design
class BnnAccel(SoftDesign):
    """Two adjacent 3x3 windows against eight filters per iteration.

    Per window position the controller fetches the two input words, then
    filters 0-3, then filters 4-7, one fetch at a time: issue, wait for the
    responses, register the XOR/popcount, then accumulate.
    """

    design_id = "bnn"
    footprint = ResourceUsage(slc=430, lut=1229, ff=854, mem_ports_used=4, uses_apb=True)

    def reset(self):
        self.state = BnnState()

    def _job(self, io: FabricIO) -> BnnJob:
        t = io.reg(R_THRESH)
        t = t - (1 << 32) if t & 0x80000000 else t
        return BnnJob(io.reg(R_IN), io.reg(R_FILT), io.reg(R_OUT), io.reg(R_ROWS),
                      io.reg(R_COLS), t)

    def _two(self) -> bool:
        st = self.state
        return st.c + 1 < st.job.out_cols

    def _issue(self, io: FabricIO) -> bool:
        st, job = self.state, self.state.job
        i, j = divmod(st.pos, 3)
        if st.fetch == 0:
            base = job.in_ptr + 4 * ((st.r + i) * job.cols + st.c + j)
            addrs = {0: base}
            if self._two():
                addrs[1] = base + 4
        else:
            f0 = 4 * (st.fetch - 1)
            addrs = {p: job.filt_ptr + 4 * ((f0 + p) * 9 + st.pos) for p in range(4)}
        if not all(io.can_issue(p) for p in addrs):
            return False
        for p, a in addrs.items():
            io.mem_read(p, a)
        st.expect = [p in addrs for p in range(4)]
        st.got = [False] * 4
        return True

    def _accumulate(self) -> None:
        st = self.state
        if st.fetch == 0:
            st.inputs = [st.words[0], st.words[1] if st.expect[1] else 0]
            return
        f0 = 4 * (st.fetch - 1)
        for w in range(2):
            for p in range(4):
                st.mism[w * 8 + f0 + p] += bin(st.inputs[w] ^ st.words[p]).count("1")

    def _finish_pixels(self) -> None:
        st, job = self.state, self.state.job
        limit = WINDOW_BITS - job.threshold
        for w in range(2 if self._two() else 1):
            byte = 0
            for f in range(N_FILTERS):
                byte |= int(st.mism[w * 8 + f] <= limit) << f
            addr = job.out_ptr + st.r * job.out_cols + st.c + w
            st.stores.append((addr & ~3, byte << (8 * (addr & 3)), 1 << (addr & 3)))
            st.pixels += 1
        st.mism = [0] * 16

    def _advance(self) -> bool:
        """Move to the next fetch; False once the job is complete."""
        st, job = self.state, self.state.job
        st.fetch += 1
        if st.fetch < 3:
            return True
        st.fetch = 0
        st.pos += 1
        if st.pos < 9:
            return True
        st.pos = 0
        self._finish_pixels()
        st.c += 2
        if st.c >= job.out_cols:
            st.c = 0
            st.r += 1
        return st.r < job.out_rows

    def _store(self, io: FabricIO) -> None:
        st = self.state
        for p in range(4):
            if not st.stores:
                break
            if io.can_issue(p):
                io.mem_write(p, *st.stores.pop(0))

    def step(self, io: FabricIO) -> None:
        st = self.state
        for i, v in io.apb_writes:
            if i == R_CTRL and v & 1 and st.phase is Phase.IDLE:
                st.job = self._job(io)
                st.r = st.c = st.pos = st.fetch = st.pixels = 0
                st.mism = [0] * 16
                st.stores = []
                io.set_reg(R_STATUS, 0)
                st.phase = Phase.ISSUE
        ph = st.phase
        if ph is Phase.IDLE:
            return
        if ph is Phase.ISSUE:
            if self._issue(io):
                st.phase = Phase.WAIT
        elif ph is Phase.WAIT:
            for p in range(4):
                if st.expect[p] and not st.got[p]:
                    v = io.mem_resp(p)
                    if v is not None:
                        st.words[p], st.got[p] = v, True
            if st.got == st.expect:
                st.phase = Phase.XOR
        elif ph is Phase.XOR:
            st.phase = Phase.ACC
        elif ph is Phase.ACC:
            # the next fetch is issued on the same edge as the accumulate
            self._accumulate()
            if not self._advance():
                st.phase = Phase.DRAIN
            else:
                st.phase = Phase.WAIT if self._issue(io) else Phase.ISSUE
        if st.stores and st.phase is not Phase.WAIT:
            self._store(io)
        if st.phase is Phase.DRAIN and not st.stores and io.mem_outstanding() == 0:
            io.set_reg(R_STATUS, 1)
            io.event(0)
            st.phase = Phase.IDLE
