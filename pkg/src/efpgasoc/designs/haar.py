"""Integer Haar lifting, local binary patterns, and the smart-SPI design."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from ..efpga import FabricIO, ResourceUsage, SoftDesign, register_design


def haar_pair(x0: int, x1: int) -> tuple[int, int]:
    """Forward S-transform: returns (approximation, detail)."""
    d = x0 - x1
    return x1 + (d >> 1), d


def haar_inverse(a: int, d: int) -> tuple[int, int]:
    x1 = a - (d >> 1)
    return x1 + d, x1


def saturate(v: int, bits: int) -> int:
    hi = (1 << (bits - 1)) - 1
    return max(-hi - 1, min(hi, v))


def lbp_update(prev_sample: int, sample: int, shift_reg: int) -> int:
    return ((shift_reg << 1) | (sample > prev_sample)) & 0xF


def lbp_pack(codes: list[int]) -> int:
    """Pack four successive 4-bit codes, oldest in the top nibble."""
    if len(codes) != 4:
        raise ValueError("need exactly four codes")
    w = 0
    for c in codes:
        w = (w << 4) | (c & 0xF)
    return w


def hdwt(samples: list[int]) -> tuple[list[int], list[int]]:
    if len(samples) % 2:
        raise ValueError("HDWT needs an even number of samples")
    pairs = [haar_pair(samples[i], samples[i + 1]) for i in range(0, len(samples), 2)]
    return [a for a, _ in pairs], [d for _, d in pairs]


def lbp_words(samples: list[int]) -> list[int]:
    """16-bit outputs for a sample stream: one per four comparisons."""
    out, codes, reg = [], [], 0
    for prev, s in zip(samples, samples[1:]):
        reg = lbp_update(prev, s, reg)
        codes.append(reg)
        if len(codes) == 4:
            out.append(lbp_pack(codes))
            codes = []
    return out


def pack_lanes(values: list[int], bits: int) -> list[int]:
    """Little-endian packing of ``bits``-wide two's-complement values into words."""
    per = 32 // bits
    m = (1 << bits) - 1
    words = []
    for i in range(0, len(values), per):
        w = 0
        for j, v in enumerate(values[i:i + per]):
            w |= (v & m) << (bits * j)
        words.append(w)
    return words


def s16(x: int) -> int:
    x &= 0xFFFF
    return x - 0x10000 if x & 0x8000 else x


class HdwtMode(enum.IntEnum):
    RAW = 0
    HDWT = 1
    LBP = 2


@dataclass
class HdwtConfig:
    n_samples: int
    out_approx_ptr: int
    out_detail_ptr: int = 0
    mode: HdwtMode = HdwtMode.HDWT
    coeff_width: int = 16

    def __post_init__(self):
        if self.coeff_width not in (8, 16):
            raise ValueError("coeff_width must be 8 or 16")
        if self.mode is HdwtMode.HDWT and self.n_samples % 2:
            raise ValueError("N must be even in HDWT mode")


def expected_outputs(cfg: HdwtConfig, samples: list[int]) -> dict[int, list[int]]:
    """Memory words the peripheral leaves behind, keyed by base pointer."""
    xs = [s16(s) for s in samples[:cfg.n_samples]]
    if cfg.mode is HdwtMode.RAW:
        return {cfg.out_approx_ptr: pack_lanes(xs, 16)}
    if cfg.mode is HdwtMode.LBP:
        return {cfg.out_approx_ptr: pack_lanes(lbp_words(xs), 16)}
    a, d = hdwt(xs)
    if cfg.coeff_width == 8:
        a, d = [saturate(v, 8) for v in a], [saturate(v, 8) for v in d]
    return {cfg.out_approx_ptr: pack_lanes(a, cfg.coeff_width),
            cfg.out_detail_ptr: pack_lanes(d, cfg.coeff_width)}


# user APB register indices
R_CTRL, R_N, R_MODE, R_WIDTH, R_OUT_A, R_OUT_D, R_DIV, R_STATUS = range(8)


@dataclass
class _Lane:
    ptr: int = 0
    bits: int = 16
    acc: int = 0
    fill: int = 0

    def add(self, v: int) -> Optional[tuple[int, int]]:
        m = (1 << self.bits) - 1
        self.acc |= (v & m) << self.fill
        self.fill += self.bits
        if self.fill == 32:
            return self.flush()
        return None

    def flush(self) -> Optional[tuple[int, int]]:
        if not self.fill:
            return None
        out = (self.ptr, self.acc)
        self.ptr += 4
        self.acc = self.fill = 0
        return out


@dataclass
class HdwtState:
    running: bool = False
    mode: int = 0
    n: int = 0
    acquired: int = 0
    countdown: int = 0
    prev: Optional[int] = None
    held: Optional[int] = None
    shift_reg: int = 0
    codes: list = field(default_factory=list)
    lanes: list = field(default_factory=list)
    writes: deque = field(default_factory=deque)
    edge: int = 0
    acq_done_edge: int = -1
    done: bool = False


@register_design
class HdwtSpi(SoftDesign):
    """SPI master that stores raw samples, Haar coefficients or LBP codes.

    Features are computed in the cycle each sample arrives, so acquisition
    time is the same in every mode.
    """

    design_id = "hdwt_spi"
    footprint = ResourceUsage(slc=205, lut=580, ff=410, gpio=4, mem_ports_used=1, uses_apb=True)

    def reset(self):
        self.state = HdwtState()

    def _start(self, io: FabricIO) -> None:
        st = self.state
        st.running, st.done = True, False
        st.mode = io.reg(R_MODE)
        st.n = io.reg(R_N)
        bits = 8 if io.reg(R_WIDTH) == 8 and st.mode == HdwtMode.HDWT else 16
        st.lanes = [_Lane(io.reg(R_OUT_A), bits), _Lane(io.reg(R_OUT_D), bits)]
        st.acquired, st.prev, st.held, st.shift_reg, st.codes = 0, None, None, 0, []
        st.countdown = 16 * max(1, io.reg(R_DIV))
        st.acq_done_edge = -1
        io.set_reg(R_STATUS, 0)

    def _emit(self, lane: int, v: int) -> None:
        w = self.state.lanes[lane].add(v)
        if w:
            self.state.writes.append(w)

    def _sample(self, x: int) -> None:
        st = self.state
        if st.mode == HdwtMode.RAW:
            self._emit(0, x)
        elif st.mode == HdwtMode.HDWT:
            if st.held is None:
                st.held = x
            else:
                a, d = haar_pair(st.held, x)
                if st.lanes[0].bits == 8:
                    a, d = saturate(a, 8), saturate(d, 8)
                self._emit(0, a)
                self._emit(1, d)
                st.held = None
        else:
            if st.prev is not None:
                st.shift_reg = lbp_update(st.prev, x, st.shift_reg)
                st.codes.append(st.shift_reg)
                if len(st.codes) == 4:
                    self._emit(0, lbp_pack(st.codes))
                    st.codes = []
            st.prev = x

    def step(self, io: FabricIO) -> None:
        st = self.state
        st.edge += 1
        for i, v in io.apb_writes:
            if i == R_CTRL and v & 1:
                self._start(io)
        if st.running and st.acquired < st.n:
            st.countdown -= 1
            if st.countdown == 0:
                st.countdown = 16 * max(1, io.reg(R_DIV))
                self._sample(s16(io.pads.spi_frame()))
                st.acquired += 1
                if st.acquired == st.n:
                    st.acq_done_edge = st.edge
                    for lane in st.lanes:
                        w = lane.flush()
                        if w:
                            st.writes.append(w)
        if st.writes and io.can_issue(0):
            ptr, w = st.writes.popleft()
            io.mem_write(0, ptr, w)
        if (st.running and st.acquired == st.n and not st.writes
                and io.mem_outstanding(0) == 0):
            st.running, st.done = False, True
            io.set_reg(R_STATUS, 1)
            io.event(0)
