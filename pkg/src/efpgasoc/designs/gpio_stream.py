"""Custom 36-pin parallel interface to an off-chip accelerator, and its scripted stub.

Pin map: 0-31 DATA, 32 CLK, 33 VALID, 34 LAST (outputs), 35 RESP_VALID
(input). The device samples DATA on every clock with VALID high; LAST closes
a row. After a row that carries a response, the device drives the
response on DATA and raises RESP_VALID until the next row starts.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..efpga import FabricIO, ResourceUsage, SoftDesign, register_design
from ..udma import ScriptExhausted

CLK, VALID, LAST, RESP_VALID = 1 << 32, 1 << 33, 1 << 34, 1 << 35
DATA_MASK = 0xFFFFFFFF
N_PINS = 36


@dataclass(frozen=True)
class StubRow:
    phase: int
    expected: tuple[int, ...]
    response: Optional[int] = None


def load_stub_script(path) -> list[StubRow]:
    """CSV rows ``phase, expected words (space separated hex), response``."""
    rows = []
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    for rec in csv.reader(lines):
        rec = [x.strip() for x in rec] + ["", ""]
        if rec[0] == "phase":
            continue
        words = tuple(int(w, 16) for w in rec[1].split())
        rows.append(StubRow(int(rec[0]), words, int(rec[2], 16) if rec[2] else None))
    return rows


def write_stub_script(rows: list[StubRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["phase", "expected", "response"])
        for r in rows:
            w.writerow([r.phase, " ".join(f"{x:08x}" for x in r.expected),
                        "" if r.response is None else f"{r.response:08x}"])


class AcceleratorStub:
    """Replays a stimulus/response script in place of the off-chip chip."""

    def __init__(self, rows: list[StubRow]):
        self.rows = list(rows)
        self.row = 0
        self.received: list[int] = []
        self.response: Optional[int] = None
        self.captured: list[tuple[int, ...]] = []
        self.mismatches = 0
        self.clocks = 0
        self.words = 0

    @property
    def done(self) -> bool:
        return self.row >= len(self.rows)

    def pins_in(self) -> int:
        return (self.response & DATA_MASK) | RESP_VALID if self.response is not None else 0

    def clock(self, pins: int) -> int:
        self.clocks += 1
        if pins & VALID:
            if self.row >= len(self.rows):
                raise ScriptExhausted(f"device script ended after {len(self.rows)} rows")
            if not self.received:
                self.response = None
            self.received.append(pins & DATA_MASK)
            self.words += 1
            if pins & LAST:
                expect = self.rows[self.row]
                got = tuple(self.received)
                self.captured.append(got)
                if expect.expected and got != expect.expected:
                    self.mismatches += 1
                self.response = expect.response
                self.received = []
                self.row += 1
        return self.pins_in()


class Stage(enum.IntEnum):
    IDLE = 0
    WEIGHTS = 1
    VECTOR = 2
    WAIT_RESP = 3
    PUSH = 4


# stream configuration words
CFG_WEIGHTS, CFG_VECTORS, CFG_VEC_WORDS, CFG_JOB = range(4)


@dataclass
class GpioStreamState:
    stage: Stage = Stage.IDLE
    job: int = 0
    n_weights: int = 0
    n_vectors: int = 0
    vec_words: int = 0
    sent: int = 0
    vectors_done: int = 0
    result: int = 0
    events: int = 0


@register_design
class GpioStream(SoftDesign):
    """Streams weights then input vectors onto the pins, one word per edge.

    Words arrive from the uDMA TX stream; each response goes back on the
    RX stream and raises event 0. The pad clock is forwarded from the
    fabric clock, so one pin slot takes exactly one edge.
    """

    design_id = "gpio_stream"
    footprint = ResourceUsage(slc=102, lut=289, ff=205, gpio=36, uses_dma=True)

    def reset(self):
        self.state = GpioStreamState()

    def _start(self, io: FabricIO) -> None:
        st = self.state
        st.n_weights = io.stream_cfg(CFG_WEIGHTS)
        st.n_vectors = io.stream_cfg(CFG_VECTORS)
        st.vec_words = io.stream_cfg(CFG_VEC_WORDS)
        st.sent = st.vectors_done = 0
        st.stage = Stage.WEIGHTS if st.n_weights else self._after_weights()

    def _after_weights(self) -> Stage:
        st = self.state
        return Stage.VECTOR if st.n_vectors and st.vec_words else Stage.IDLE

    def _drive(self, io: FabricIO, total: int) -> bool:
        """Send one word if available; True when the row is complete."""
        st = self.state
        w = io.stream_in()
        if w is None:
            io.set_gpio(0, VALID | LAST | CLK)
            io.pad_clock()
            return False
        st.sent += 1
        last = st.sent == total
        io.set_gpio(w | CLK | VALID | (LAST if last else 0), DATA_MASK | CLK | VALID | LAST)
        io.pad_clock()
        if last:
            st.sent = 0
        return last

    def step(self, io: FabricIO) -> None:
        st = self.state
        job = io.stream_cfg(CFG_JOB)
        if job != st.job:
            st.job = job
            self._start(io)
        if st.stage is Stage.WEIGHTS:
            if self._drive(io, st.n_weights):
                st.stage = self._after_weights()
        elif st.stage is Stage.VECTOR:
            if self._drive(io, st.vec_words):
                st.stage = Stage.WAIT_RESP
        elif st.stage is Stage.WAIT_RESP:
            io.set_gpio(0, VALID | LAST | CLK)
            pins = io.pad_clock()
            if pins & RESP_VALID:
                st.result = pins & DATA_MASK
                st.stage = Stage.PUSH
        if st.stage is Stage.PUSH and io.stream_out(st.result):
            st.vectors_done += 1
            st.events += 1
            io.event(0)
            st.stage = Stage.VECTOR if st.vectors_done < st.n_vectors else Stage.IDLE
