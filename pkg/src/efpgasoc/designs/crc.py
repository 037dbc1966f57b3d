"""CRC-32 (reflected, IEEE polynomial) and the byte-serial stream accelerator."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..efpga import FabricIO, ResourceUsage, SoftDesign, register_design

# One parameter block: change these for another reflected CRC-32.
POLY = 0xEDB88320
INIT = 0xFFFFFFFF
XOR_OUT = 0xFFFFFFFF


def crc32_bitwise(state: int, byte: int) -> int:
    state ^= byte & 0xFF
    for _ in range(8):
        state = (state >> 1) ^ (POLY if state & 1 else 0)
    return state


def _make_table() -> tuple[int, ...]:
    return tuple(crc32_bitwise(0, b) for b in range(256))


TABLE = _make_table()


def crc32_update(state: int, byte: int) -> int:
    """Table-driven single-byte step (no final XOR)."""
    return (state >> 8) ^ TABLE[(state ^ byte) & 0xFF]


def crc32(data: bytes, table: bool = True) -> int:
    step = crc32_update if table else crc32_bitwise
    s = INIT
    for b in data:
        s = step(s, b)
    return s ^ XOR_OUT


@dataclass
class CrcState:
    state: int = INIT
    bytes_remaining: int = 0
    job: int = 0
    buf: list = field(default_factory=list)
    result_pending: bool = False
    processed: int = 0


# stream configuration words
CFG_LENGTH, CFG_JOB = 0, 1


@register_design
class CrcAccel(SoftDesign):
    """Consumes the uDMA stream at one byte per edge; emits the CRC on the RX stream.

    Configuration comes over the stream configuration bus: word 0 is the
    byte count, and each new value in word 1 starts a job.
    """

    design_id = "crc"
    footprint = ResourceUsage(slc=20, lut=47, ff=20, uses_dma=True)

    def reset(self):
        self.state = CrcState()

    def step(self, io: FabricIO) -> None:
        st = self.state
        job = io.stream_cfg(CFG_JOB)
        if job != st.job:
            st.job = job
            st.state = INIT
            st.bytes_remaining = io.stream_cfg(CFG_LENGTH)
            st.buf = []
            st.result_pending = st.bytes_remaining == 0
        if st.bytes_remaining:
            if not st.buf:
                w = io.stream_in()
                if w is not None:
                    n = min(4, st.bytes_remaining)
                    st.buf = [(w >> (8 * k)) & 0xFF for k in range(n)]
            if st.buf:
                st.state = crc32_update(st.state, st.buf.pop(0))
                st.bytes_remaining -= 1
                st.processed += 1
                if not st.bytes_remaining:
                    st.result_pending = True
        elif st.result_pending and io.stream_out(st.state ^ XOR_OUT):
            st.result_pending = False
