"""I/O DMA: linear channels between peripherals and shared memory.

The engine has one RX port (peripheral to memory) and one TX port (memory
to peripheral) on the interconnect, so at most one word per direction is
in flight at a time. Active channels sharing a direction are served
round-robin.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol

from .memsys import BYTE_MASKS, Master, MemorySystem, MemRequest


class Peripheral(enum.Enum):
    SPI = "spi"
    EFPGA_STREAM = "efpga_stream"


class Direction(enum.Enum):
    RX = "rx"  # peripheral -> memory
    TX = "tx"  # memory -> peripheral


class Busy(Exception):
    pass


class Misaligned(Exception):
    pass


class ScriptExhausted(Exception):
    pass


@dataclass
class DmaChannel:
    index: int
    peripheral: Peripheral
    direction: Direction
    base_ptr: int = 0
    length: int = 0
    cursor: int = 0
    active: bool = False
    issued: int = 0  # bytes handed to the interconnect
    completions: int = 0


def configure_channel(ch: DmaChannel, base_ptr: int, length: int,
                      direction: Optional[Direction] = None) -> bool:
    """Arm ``ch``. Returns True when the transfer is already complete (length 0)."""
    if ch.active:
        raise Busy(f"channel {ch.index} is active")
    if base_ptr & 3:
        raise Misaligned(f"base_ptr {base_ptr:#x}")
    if length < 0:
        raise ValueError("negative length")
    if direction is not None and direction is not ch.direction:
        raise ValueError(f"channel {ch.index} is {ch.direction.name}-only")
    ch.base_ptr, ch.length, ch.cursor, ch.issued = base_ptr, length, 0, 0
    ch.active = length > 0
    return length == 0


# -- SPI -------------------------------------------------------------------------

@dataclass
class SpiDevice:
    """Scripted ADC behind an SPI master: one sample per 16-bit frame."""

    samples: list[int]
    divider: int = 8
    frame_bits: int = 16
    shift_register: int = 0
    pos: int = 0

    @property
    def frame_cycles(self) -> int:
        return self.frame_bits * self.divider

    def frame_time_ps(self, clock_period_ps: int) -> int:
        return self.frame_cycles * clock_period_ps

    @property
    def remaining(self) -> int:
        return len(self.samples) - self.pos

    def spi_frame(self) -> int:
        if self.pos >= len(self.samples):
            raise ScriptExhausted(f"SPI script ended after {self.pos} samples")
        s = self.samples[self.pos] & ((1 << self.frame_bits) - 1)
        self.pos += 1
        self.shift_register = s
        return s


def load_sample_script(path) -> list[int]:
    """One decimal or 0x-hex sample per line; ``#`` comments allowed."""
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip().rstrip(",")
        if line:
            out.append(int(line, 0))
    return out


class SpiRxPort:
    """Clocks an :class:`SpiDevice` on PERI edges and packs samples into words."""

    def __init__(self, device: SpiDevice):
        self.device = device
        self.countdown = device.frame_cycles
        self.half: Optional[int] = None
        self.words: deque = deque()
        self.enabled = False
        self.target_samples = 0

    def start(self, n_samples: int) -> None:
        self.enabled = n_samples > 0
        self.target_samples = n_samples
        self.countdown = self.device.frame_cycles

    def tick(self) -> None:
        if not self.enabled:
            return
        self.countdown -= 1
        if self.countdown:
            return
        self.countdown = self.device.frame_cycles
        s = self.device.spi_frame()
        self.target_samples -= 1
        if self.half is None:
            self.half = s
        else:
            self.words.append(self.half | (s << 16))
            self.half = None
        if self.target_samples == 0:
            self.enabled = False
            if self.half is not None:
                self.words.append(self.half)
                self.half = None

    def pop(self) -> Optional[int]:
        return self.words.popleft() if self.words else None


# -- engine ------------------------------------------------------------------------

class WordSource(Protocol):
    def __call__(self, now: int) -> Optional[int]: ...


class WordSink(Protocol):
    def room(self) -> int: ...
    def push(self, word: int, now: int) -> None: ...


@dataclass
class FifoSink:
    fifo: object  # DualClockFifo

    def room(self) -> int:
        return self.fifo.capacity - self.fifo.occupancy

    def push(self, word: int, now: int) -> None:
        self.fifo.push(word, now)


@dataclass
class ListSink:
    words: list = field(default_factory=list)
    capacity: int = 1 << 30

    def room(self) -> int:
        return self.capacity - len(self.words)

    def push(self, word: int, now: int) -> None:
        self.words.append(word)


CH_SPI_RX, CH_SPI_TX, CH_EFPGA_RX, CH_EFPGA_TX = range(4)
EOT_LINE_BASE = 16  # interrupt line of channel c is 16 + c


class Udma:
    """The engine plus its APB register file.

    Registers, per channel ``c`` at offset ``0x10*c``: SADDR (+0), SIZE (+4),
    CFG (+8; write bit 0 to start, read bit 0 = active). Eight eFPGA stream
    configuration words sit at +0x80.
    """

    N_STREAM_CFG = 8

    def __init__(self, mem: MemorySystem, now: Callable[[], int],
                 on_eot: Callable[[int], None] = lambda ch: None):
        self.mem = mem
        self.now = now
        self.on_eot = on_eot
        self.channels = [
            DmaChannel(CH_SPI_RX, Peripheral.SPI, Direction.RX),
            DmaChannel(CH_SPI_TX, Peripheral.SPI, Direction.TX),
            DmaChannel(CH_EFPGA_RX, Peripheral.EFPGA_STREAM, Direction.RX),
            DmaChannel(CH_EFPGA_TX, Peripheral.EFPGA_STREAM, Direction.TX),
        ]
        self.sources: dict[int, Callable[[int], Optional[int]]] = {}
        self.sinks: dict[int, WordSink] = {CH_SPI_TX: ListSink()}
        self.spi: Optional[SpiRxPort] = None
        self.stream_cfg = [0] * self.N_STREAM_CFG
        self.regs = {}
        self._rr = {Direction.RX: len(self.channels) - 1, Direction.TX: len(self.channels) - 1}
        self._inflight: dict[Direction, Optional[MemRequest]] = {Direction.RX: None, Direction.TX: None}
        self.words_moved = {Direction.RX: 0, Direction.TX: 0}
        self.max_issue_per_edge = {Direction.RX: 0, Direction.TX: 0}

    def attach_spi(self, device: SpiDevice) -> None:
        self.spi = SpiRxPort(device)
        self.sources[CH_SPI_RX] = lambda now: self.spi.pop()

    # -- control ---------------------------------------------------------------

    def start(self, index: int, base_ptr: int, length: int) -> None:
        ch = self.channels[index]
        done = configure_channel(ch, base_ptr, length)
        if ch.peripheral is Peripheral.SPI and ch.direction is Direction.RX and self.spi:
            self.spi.start((length + 1) // 2)
        if done:
            self._complete(ch)

    def _complete(self, ch: DmaChannel) -> None:
        ch.active = False
        ch.completions += 1
        self.on_eot(ch.index)

    def busy(self) -> bool:
        return any(c.active for c in self.channels)

    # -- APB ---------------------------------------------------------------------

    def apb_write(self, off: int, value: int) -> None:
        if off >= 0x80:
            i = (off - 0x80) >> 2
            if i >= self.N_STREAM_CFG:
                raise KeyError(f"udma offset {off:#x}")
            self.stream_cfg[i] = value
            return
        c, reg = off >> 4, off & 0xF
        if c >= len(self.channels):
            raise KeyError(f"udma offset {off:#x}")
        key = (c, reg)
        if reg in (0, 4):
            self.regs[key] = value
        elif reg == 8:
            if value & 1:
                self.start(c, self.regs.get((c, 0), 0), self.regs.get((c, 4), 0))
        else:
            raise KeyError(f"udma offset {off:#x}")

    def apb_read(self, off: int) -> int:
        if off >= 0x80:
            return self.stream_cfg[(off - 0x80) >> 2]
        c, reg = off >> 4, off & 0xF
        if reg == 8:
            return int(self.channels[c].active)
        if reg == 0xC:
            return self.channels[c].cursor
        return self.regs.get((c, reg), 0)

    # -- stepping ------------------------------------------------------------------

    def _pick(self, direction: Direction, ready: Callable[[DmaChannel], bool]) -> Optional[DmaChannel]:
        n = len(self.channels)
        start = self._rr[direction]
        for i in range(1, n + 1):
            ch = self.channels[(start + i) % n]
            if ch.direction is direction and ch.active and ch.issued < ch.length and ready(ch):
                self._rr[direction] = ch.index
                return ch
        return None

    def step(self, now: int) -> int:
        """One PERI edge. Returns the number of memory requests issued."""
        if self.spi is not None:
            self.spi.tick()
        issued = 0
        if self._inflight[Direction.RX] is None:
            pending: dict[int, int] = {}

            def rx_ready(ch):
                src = self.sources.get(ch.index)
                if src is None:
                    return False
                w = src(now)
                if w is None:
                    return False
                pending[ch.index] = w
                return True

            ch = self._pick(Direction.RX, rx_ready)
            if ch is not None:
                self._issue_rx(ch, pending[ch.index])
                issued += 1
        if self._inflight[Direction.TX] is None:
            def tx_ready(ch):
                sink = self.sinks.get(ch.index)
                return sink is not None and sink.room() > 0

            ch = self._pick(Direction.TX, tx_ready)
            if ch is not None:
                self._issue_tx(ch)
                issued += 1
        return issued

    def _issue_rx(self, ch: DmaChannel, word: int) -> None:
        nbytes = min(4, ch.length - ch.issued)
        req = MemRequest(Master.UDMA_RX, ch.base_ptr + ch.issued, write=True,
                         wdata=word & BYTE_MASKS[(1 << nbytes) - 1], byte_enable=(1 << nbytes) - 1,
                         on_done=lambda r, _d, ch=ch, n=nbytes: self._rx_done(ch, n))
        ch.issued += nbytes
        self._inflight[Direction.RX] = req
        self.mem.post(req)

    def _rx_done(self, ch: DmaChannel, nbytes: int) -> None:
        self._inflight[Direction.RX] = None
        self.words_moved[Direction.RX] += 1
        ch.cursor += nbytes
        if ch.cursor >= ch.length:
            self._complete(ch)

    def _issue_tx(self, ch: DmaChannel) -> None:
        nbytes = min(4, ch.length - ch.issued)
        req = MemRequest(Master.UDMA_TX, ch.base_ptr + ch.issued,
                         on_done=lambda r, d, ch=ch, n=nbytes: self._tx_done(ch, n, d))
        ch.issued += nbytes
        self._inflight[Direction.TX] = req
        self.mem.post(req)

    def _tx_done(self, ch: DmaChannel, nbytes: int, data: int) -> None:
        self._inflight[Direction.TX] = None
        self.words_moved[Direction.TX] += 1
        self.sinks[ch.index].push(data & BYTE_MASKS[(1 << nbytes) - 1], self.now())
        ch.cursor += nbytes
        if ch.cursor >= ch.length:
            self._complete(ch)
