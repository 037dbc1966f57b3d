"""Characterisation designs: the memory accumulator and the clock divider."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from ..efpga import FabricIO, ResourceUsage, SoftDesign, register_design

# user APB: accumulators at 0..7, then control
R_BASE, R_NWORDS, R_CTRL, R_PASSES = 8, 9, 10, 11
CTRL_ONE_PASS, CTRL_LOOP = 1, 2


def accumulate_reference(words: list[int], passes: int = 1) -> list[int]:
    acc = [0] * 8
    for _ in range(passes):
        for i, w in enumerate(words):
            acc[i % 8] = (acc[i % 8] + w) & 0xFFFFFFFF
    return acc


@dataclass
class Ff2socState:
    acc: list = field(default_factory=lambda: [0] * 8)
    mode: int = 0
    base: int = 0
    n: int = 0
    next_index: int = 0
    inflight: list = field(default_factory=lambda: [deque() for _ in range(4)])
    received: int = 0
    passes: int = 0


@register_design
class Ff2soc(SoftDesign):
    """Eight 32-bit accumulators fed by up to four memory reads per edge.

    Word ``i`` of a pass lands in accumulator ``i % 8``; the signature is
    readable on user APB registers 0..7.
    """

    design_id = "ff2soc"
    footprint = ResourceUsage(slc=154, lut=400, ff=300, mem_ports_used=4, uses_apb=True)
    fmax_curve = "ff2soc"

    def reset(self):
        self.state = Ff2socState()

    def step(self, io: FabricIO) -> None:
        st = self.state
        for i, v in io.apb_writes:
            if i == R_CTRL and v in (CTRL_ONE_PASS, CTRL_LOOP):
                st.mode, st.base, st.n = v, io.reg(R_BASE), io.reg(R_NWORDS)
                st.next_index = st.received = 0
            elif i == R_CTRL and v == 0:
                st.mode = 0
        for p in range(4):
            v = io.mem_resp(p)
            if v is not None:
                idx = st.inflight[p].popleft()
                st.acc[idx % 8] = (st.acc[idx % 8] + v) & 0xFFFFFFFF
                io.set_reg(idx % 8, st.acc[idx % 8])
                st.received += 1
                if st.received == st.n:
                    st.received = 0
                    st.passes += 1
                    io.set_reg(R_PASSES, st.passes)
                    if st.mode == CTRL_ONE_PASS:
                        st.mode = 0
                        io.event(0)
        if not st.mode or not st.n:
            return
        for p in range(4):
            if st.mode == CTRL_ONE_PASS and st.next_index >= st.n:
                break
            if not io.can_issue(p):
                continue
            idx = st.next_index % st.n
            io.mem_read(p, st.base + 4 * idx)
            st.inflight[p].append(idx)
            st.next_index = idx + 1 if st.mode == CTRL_ONE_PASS else (idx + 1) % st.n


@dataclass
class Ff2ffState:
    counter: int = 0
    toggles: int = 0
    level: int = 0


@register_design
class Ff2ff(SoftDesign):
    """Free-running 9-bit counter; bit 8 drives GPIO 0 (divide by 512)."""

    design_id = "ff2ff"
    footprint = ResourceUsage(slc=3, lut=9, ff=9, gpio=1)

    def reset(self):
        self.state = Ff2ffState()

    def step(self, io: FabricIO) -> None:
        st = self.state
        st.counter = (st.counter + 1) & 0x1FF
        level = st.counter >> 8
        if level != st.level:
            st.level = level
            st.toggles += 1
            io.set_gpio(level, 1)


def ff2ff_observe(edges: int) -> int:
    """GPIO transitions after ``edges`` clocks, straight from the counter definition."""
    return sum(1 for e in range(1, edges + 1) if ((e & 0x1FF) >> 8) != (((e - 1) & 0x1FF) >> 8))
