"""Multi-clock time base, edge scheduling and clock-domain-crossing primitives.

All time is integer picoseconds. Each clock domain has rising edges at
``phase + k * period`` for k >= 1; an edge is counted only while the domain
is enabled. Edges that coincide in time run in the fixed order
MCU -> PERI -> EFPGA, and callbacks registered on the same domain run in
registration order.
"""

from __future__ import annotations

import enum
import hashlib
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, NamedTuple


class Domain(enum.IntEnum):
    MCU = 0
    PERI = 1
    EFPGA = 2


def period_from_mhz(f_mhz: float) -> int:
    """Clock period in picoseconds, rounded to the nearest ps."""
    if f_mhz <= 0:
        raise ValueError(f"frequency must be positive, got {f_mhz}")
    return max(1, int(round(1e6 / f_mhz)))


def exact_period(f_mhz: float) -> Fraction:
    """Exact period in ps; edge k then lands on floor(k * period)."""
    if f_mhz <= 0:
        raise ValueError(f"frequency must be positive, got {f_mhz}")
    return Fraction(10**6) / Fraction(str(f_mhz))


@dataclass
class ClockDomain:
    """Edges at ``phase + floor(k * period)`` ps for k >= 1.

    ``period`` may be an int or a Fraction; a rational period keeps edge
    counts exact (600 MHz gives 600 edges per microsecond) without drift.
    """

    id: Domain
    period: int | Fraction
    enabled: bool = True
    edge_count: int = 0
    phase: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("period must be positive")
        p = Fraction(self.period)
        self._num, self._den = p.numerator, p.denominator

    def edge_time(self, k: int) -> int:
        return self.phase + (k * self._num) // self._den

    def edges_until(self, t: int) -> int:
        """Index of the last edge at or before ``t`` (0 if none)."""
        x = t - self.phase
        if x < 0:
            return 0
        return ((x + 1) * self._den - 1) // self._num

    def first_edge_after(self, t: int) -> int:
        return self.edges_until(t) + 1


class EdgeEvent(NamedTuple):
    time: int
    domain: Domain
    edge: int


class SimKernel:
    """Deterministic single-threaded event loop over three clock domains."""

    def __init__(self, domains: Iterable[ClockDomain], trace: bool = True):
        self.domains: dict[Domain, ClockDomain] = {d.id: d for d in domains}
        self.now = 0
        self._handlers: dict[Domain, list[Callable[[int], Any]]] = {d: [] for d in self.domains}
        self._trace_enabled = trace
        self._trace: list[str] = []
        self._hash = hashlib.sha256()
        self.stopped = False

    @classmethod
    def from_mhz(cls, f_mcu: float, f_peri: float, f_efpga: float, **kw) -> "SimKernel":
        return cls(
            [
                ClockDomain(Domain.MCU, exact_period(f_mcu)),
                ClockDomain(Domain.PERI, exact_period(f_peri)),
                ClockDomain(Domain.EFPGA, exact_period(f_efpga)),
            ],
            **kw,
        )

    def period(self, d: Domain) -> int | Fraction:
        return self.domains[d].period

    def edge_after(self, d: Domain, t: int, n: int = 1) -> int:
        """Time of the ``n``-th edge of ``d`` strictly after ``t``."""
        dom = self.domains[d]
        return dom.edge_time(dom.edges_until(t) + n)

    def on_edge(self, domain: Domain, callback: Callable[[int], Any]) -> None:
        self._handlers[domain].append(callback)

    def set_enabled(self, domain: Domain, enabled: bool) -> None:
        dom = self.domains[domain]
        if dom.enabled != enabled:
            dom.enabled = enabled
            self.log(domain, "clock", "on" if enabled else "off")

    # -- tracing -----------------------------------------------------------

    def log(self, domain: Domain, kind: str, detail: Any = "") -> None:
        line = f"{self.now},{domain.name},{kind},{detail}"
        self._hash.update(line.encode())
        self._hash.update(b"\n")
        if self._trace_enabled:
            self._trace.append(line)

    @property
    def trace_lines(self) -> list[str]:
        return list(self._trace)

    def trace_hash(self) -> str:
        return self._hash.hexdigest()

    def stop(self) -> None:
        """Request the current ``advance`` call to return after this edge."""
        self.stopped = True

    # -- time --------------------------------------------------------------

    def advance(self, until: int, collect: bool = True) -> list[EdgeEvent]:
        """Execute every rising edge in ``(now, until]``.

        Returns the executed edges when ``collect`` is true. If a handler
        calls :meth:`stop`, time stops at that edge instead of ``until``.
        """
        if until < self.now:
            raise ValueError(f"cannot advance backwards ({until} < {self.now})")
        events: list[EdgeEvent] = []
        order = sorted(self.domains)
        doms = [self.domains[d] for d in order]
        handlers = [self._handlers[d] for d in order]
        idx = [dom.edges_until(self.now) + 1 for dom in doms]
        nxt = [dom.edge_time(k) for dom, k in zip(doms, idx)]
        self.stopped = False
        while True:
            t = min(nxt)
            if t > until:
                break
            self.now = t
            for i, dom in enumerate(doms):
                if nxt[i] != t:
                    continue
                idx[i] += 1
                nxt[i] = dom.edge_time(idx[i])
                if not dom.enabled:
                    continue
                dom.edge_count += 1
                if collect:
                    events.append(EdgeEvent(t, dom.id, dom.edge_count))
                for h in handlers[i]:
                    h(t)
            if self.stopped:
                return events
        self.now = until
        return events


class FifoFull(Exception):
    pass


class FifoEmpty(Exception):
    pass


@dataclass
class DualClockFifo:
    """Bounded CDC queue between two clock domains.

    An entry pushed at producer time ``t`` becomes poppable at the
    ``sync_latency``-th consumer edge strictly after ``t`` (two-flop
    synchronizer by default; the latency is an assumption, configurable).
    Freed slots are visible to the producer immediately.
    """

    producer: ClockDomain
    consumer: ClockDomain
    capacity: int = 4
    sync_latency: int = 2
    width: int = 32
    name: str = ""
    queue: deque = field(default_factory=deque)
    pushed: int = 0
    popped: int = 0

    def __post_init__(self):
        if self.capacity <= 0 or self.sync_latency < 0:
            raise ValueError("bad FIFO geometry")
        self._mask = (1 << self.width) - 1

    @property
    def occupancy(self) -> int:
        return len(self.queue)

    def visible_time(self, t: int) -> int:
        c = self.consumer
        if self.sync_latency == 0:
            return t
        return c.edge_time(c.first_edge_after(t) + self.sync_latency - 1)

    def can_push(self) -> bool:
        return len(self.queue) < self.capacity

    def push(self, word, now: int) -> None:
        if len(self.queue) >= self.capacity:
            raise FifoFull(self.name)
        if isinstance(word, int):
            if word < 0 or word > self._mask:
                raise ValueError(f"word {word:#x} exceeds {self.width} bits")
        self.queue.append((self.visible_time(now), word))
        self.pushed += 1

    def try_push(self, word, now: int) -> bool:
        if len(self.queue) >= self.capacity:
            return False
        self.push(word, now)
        return True

    def can_pop(self, now: int) -> bool:
        return bool(self.queue) and self.queue[0][0] <= now

    def peek(self, now: int):
        if not self.can_pop(now):
            raise FifoEmpty(self.name)
        return self.queue[0][1]

    def pop(self, now: int):
        if not self.queue or self.queue[0][0] > now:
            raise FifoEmpty(self.name)
        self.popped += 1
        return self.queue.popleft()[1]

    def snapshot(self) -> tuple:
        return (tuple(self.queue), self.pushed, self.popped)


class EventPropagator:
    """One-bit CDC event lines with the same latency contract as the FIFO."""

    def __init__(self, producer: ClockDomain, consumer: ClockDomain, sync_latency: int = 2):
        self._fifo_timing = DualClockFifo(producer, consumer, capacity=1 << 30,
                                          sync_latency=sync_latency, width=8)
        self.pending: deque = deque()

    def raise_line(self, line: int, now: int) -> None:
        self.pending.append((self._fifo_timing.visible_time(now), line))

    def deliver(self, now: int) -> list[int]:
        out = []
        while self.pending and self.pending[0][0] <= now:
            out.append(self.pending.popleft()[1])
        return out
