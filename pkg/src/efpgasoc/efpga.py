"""The eFPGA hard macro as seen from the SoC.

A programmed fabric runs one behavioural *soft design* (see
``efpgasoc.designs``). On every eFPGA edge the design's ``step`` receives a
:class:`FabricIO`, its only window onto the SoC: four memory ports, the
uDMA stream pair, GPIO pads, the user APB register file, sixteen event
lines and the two MAC blocks. Everything that crosses into another clock
domain goes through a :class:`~efpgasoc.kernel.DualClockFifo` or an
:class:`~efpgasoc.kernel.EventPropagator` owned here.
"""

from __future__ import annotations

import copy
import enum
import hashlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

from .kernel import ClockDomain, DualClockFifo, EventPropagator
from .memsys import EFPGA_PORTS, MemError, MemorySystem, MemRequest


@dataclass(frozen=True)
class FabricCapacity:
    quadrants: int = 4
    slc_per_quadrant: int = 256
    total_slc: int = 1024
    luts: int = 6018
    ffs: int = 4096
    gpio: int = 41
    mem_ports: int = 4
    event_lines: int = 16
    mac_blocks: int = 2


FABRIC = FabricCapacity()


@dataclass(frozen=True)
class ResourceUsage:
    slc: int = 0
    lut: int = 0
    ff: int = 0
    gpio: int = 0
    mem_ports_used: int = 0
    uses_dma: bool = False
    uses_apb: bool = False
    mac_blocks: int = 0

    def overflows(self, cap: FabricCapacity = FABRIC) -> list[str]:
        """Names of the axes on which this footprint exceeds ``cap``."""
        limits = {"slc": cap.total_slc, "lut": cap.luts, "ff": cap.ffs, "gpio": cap.gpio,
                  "mem_ports_used": cap.mem_ports, "mac_blocks": cap.mac_blocks}
        bad = [k for k, lim in limits.items() if getattr(self, k) > lim]
        bad += [k for k in limits if getattr(self, k) < 0]
        return bad

    def fits(self, cap: FabricCapacity = FABRIC) -> bool:
        return not self.overflows(cap)


class ResourceOverflow(Exception):
    pass


class BadLength(Exception):
    pass


class InterfaceNotDeclared(Exception):
    """A design touched an interface its footprint does not declare."""


PAYLOAD_BYTES = 230_912
PAYLOAD_WORDS = PAYLOAD_BYTES // 4


@dataclass(frozen=True)
class BitstreamImage:
    design_id: str
    payload: bytes
    footprint: ResourceUsage

    @classmethod
    def synthesize(cls, design_id: str, footprint: ResourceUsage) -> "BitstreamImage":
        """Deterministic stand-in payload; the real format is not public."""
        blob = hashlib.shake_256(f"bitstream:{design_id}".encode()).digest(PAYLOAD_BYTES)
        return cls(design_id, blob, footprint)

    def write(self, path) -> None:
        path = Path(path)
        path.write_bytes(self.payload)
        lines = [f"design_id={self.design_id}"]
        lines += [f"{k}={int(v)}" for k, v in asdict(self.footprint).items()]
        Path(str(path) + ".hdr").write_text("\n".join(lines) + "\n")

    @classmethod
    def read(cls, path) -> "BitstreamImage":
        path = Path(path)
        hdr = {}
        for line in Path(str(path) + ".hdr").read_text().splitlines():
            if "=" in line and not line.lstrip().startswith("#"):
                k, _, v = line.partition("=")
                hdr[k.strip()] = v.strip()
        kw = {}
        for f in fields(ResourceUsage):
            if f.name in hdr:
                kw[f.name] = bool(int(hdr[f.name])) if f.type in (bool, "bool") else int(hdr[f.name])
        return cls(hdr["design_id"], path.read_bytes(), ResourceUsage(**kw))


# -- MAC blocks ----------------------------------------------------------------

class MacMode(enum.Enum):
    FOUR8 = (4, 8)
    TWO16 = (2, 16)
    ONE32 = (1, 32)


@dataclass(frozen=True)
class MacOperands:
    mode: MacMode
    a: int
    b: int
    acc: int = 0


def _lanes(x: int, width: int, n: int) -> list[int]:
    m = (1 << width) - 1
    sign = 1 << (width - 1)
    return [(((x >> (i * width)) & m) ^ sign) - sign for i in range(n)]


def mac_exec(block: int, ops: MacOperands) -> int:
    """Signed lane-wise multiply-accumulate, 32-bit wrap-around result."""
    if block not in (0, 1):
        raise ValueError(f"MAC block {block}")
    n, w = ops.mode.value
    if n == 1:
        return (ops.acc + ops.a * ops.b) & 0xFFFFFFFF
    prods = sum(x * y for x, y in zip(_lanes(ops.a, w, n), _lanes(ops.b, w, n)))
    return (ops.acc + prods) & 0xFFFFFFFF


# -- soft design interface -------------------------------------------------------

class SoftDesign:
    """Base class for behavioural fabric designs.

    Subclasses set ``design_id``, ``footprint`` and ``activity`` and
    implement :meth:`step`. All mutable state lives in ``self.state``.
    """

    design_id = "abstract"
    footprint = ResourceUsage()
    activity = 1.0
    fmax_curve = "ff2ff"

    def __init__(self):
        self.state = None
        self.reset()

    def reset(self) -> None:
        pass

    def step(self, io: "FabricIO") -> None:
        raise NotImplementedError

    def snapshot(self):
        return copy.deepcopy(self.state)


DESIGN_REGISTRY: dict[str, Callable[[], SoftDesign]] = {}


def register_design(cls):
    DESIGN_REGISTRY[cls.design_id] = cls
    return cls


def design_factory(design_id: str) -> Callable[[], SoftDesign]:
    from . import designs  # noqa: F401  (populates the registry)

    try:
        return DESIGN_REGISTRY[design_id]
    except KeyError:
        raise KeyError(f"unknown design {design_id!r}") from None


# -- per-edge view -----------------------------------------------------------------

@dataclass
class StepActions:
    mem_requests: list = field(default_factory=list)  # (port, "r"|"w", addr)
    stream_in: int = 0
    stream_out: int = 0
    gpio: Optional[int] = None
    events: list = field(default_factory=list)
    apb_updates: list = field(default_factory=list)
    refused: int = 0

    def empty(self) -> bool:
        return not (self.mem_requests or self.stream_in or self.stream_out or self.events
                    or self.apb_updates or self.gpio is not None)


class FabricIO:
    """Interfaces available to a design during one eFPGA edge."""

    def __init__(self, fab: "Efpga", now: int, apb_writes: list):
        self._fab = fab
        self._fp = fab.design.footprint
        self.now = now
        self.apb_writes = apb_writes  # (index, value) that arrived this edge
        self.actions = StepActions()
        self._port_used = [False] * 4
        self._in_used = False
        self._out_used = False

    # memory ports
    def _port(self, port: int) -> None:
        if not 0 <= port < self._fp.mem_ports_used:
            raise InterfaceNotDeclared(f"memory port {port} not in footprint")

    def _mem(self, port: int, kind: str, addr: int, data: int, be: int) -> bool:
        self._port(port)
        f = self._fab.req_fifos[port]
        if self._port_used[port] or not f.can_push():
            self.actions.refused += 1
            return False
        if addr & 3:
            raise ValueError(f"fabric address {addr:#x} not word-aligned")
        f.push((kind, addr, data, be), self.now)
        self._port_used[port] = True
        self._fab.outstanding[port] += 1
        self.actions.mem_requests.append((port, kind, addr))
        return True

    def mem_read(self, port: int, addr: int) -> bool:
        return self._mem(port, "r", addr, 0, 0xF)

    def mem_write(self, port: int, addr: int, data: int, be: int = 0xF) -> bool:
        return self._mem(port, "w", addr, data & 0xFFFFFFFF, be)

    def mem_resp(self, port: int) -> Optional[int]:
        """Pop the next read response on ``port`` (write acks are absorbed)."""
        self._port(port)
        self._fab.drain_acks(port, self.now)
        f = self._fab.resp_fifos[port]
        if not f.can_pop(self.now):
            return None
        _, data = f.pop(self.now)
        self._fab.outstanding[port] -= 1
        return data

    def mem_outstanding(self, port: Optional[int] = None) -> int:
        if port is None:
            for p in range(self._fp.mem_ports_used):
                self._fab.drain_acks(p, self.now)
            return sum(self._fab.outstanding)
        self._port(port)
        self._fab.drain_acks(port, self.now)
        return self._fab.outstanding[port]

    def can_issue(self, port: int) -> bool:
        self._port(port)
        return not self._port_used[port] and self._fab.req_fifos[port].can_push()

    # uDMA stream
    def _dma(self) -> None:
        if not self._fp.uses_dma:
            raise InterfaceNotDeclared("uDMA stream not in footprint")

    def stream_in(self) -> Optional[int]:
        self._dma()
        f = self._fab.stream_in_fifo
        if self._in_used or not f.can_pop(self.now):
            return None
        self._in_used = True
        self.actions.stream_in += 1
        return f.pop(self.now)

    def stream_out(self, word: int) -> bool:
        self._dma()
        f = self._fab.stream_out_fifo
        if self._out_used or not f.can_push():
            self.actions.refused += 1
            return False
        f.push(word & 0xFFFFFFFF, self.now)
        self._out_used = True
        self.actions.stream_out += 1
        return True

    def stream_cfg(self, i: int) -> int:
        self._dma()
        return self._fab.stream_cfg[i]

    # GPIO
    def set_gpio(self, value: int, mask: Optional[int] = None) -> None:
        n = self._fp.gpio
        full = (1 << n) - 1
        mask = full if mask is None else mask
        if not n or mask & ~full:
            raise InterfaceNotDeclared(f"GPIO mask {mask:#x} beyond {n} declared pins")
        fab = self._fab
        fab.gpio_out = (fab.gpio_out & ~mask) | (value & mask)
        self.actions.gpio = fab.gpio_out

    @property
    def gpio_in(self) -> int:
        if not self._fp.gpio:
            raise InterfaceNotDeclared("GPIO not in footprint")
        return self._fab.gpio_in

    @property
    def pads(self):
        """The off-chip device wired to this design's GPIO pins."""
        if not self._fp.gpio:
            raise InterfaceNotDeclared("GPIO not in footprint")
        if self._fab.pads is None:
            raise RuntimeError("no off-chip device attached to the pads")
        return self._fab.pads

    def pad_clock(self) -> int:
        """Tick the forwarded pad clock: the device samples ``gpio_out``."""
        fab = self._fab
        fab.gpio_in = self.pads.clock(fab.gpio_out) & ((1 << FABRIC.gpio) - 1)
        fab.pad_slots += 1
        return fab.gpio_in

    # user APB registers
    def reg(self, i: int) -> int:
        if not self._fp.uses_apb:
            raise InterfaceNotDeclared("APB not in footprint")
        return self._fab.apb_regs[i]

    def set_reg(self, i: int, value: int) -> None:
        if not self._fp.uses_apb:
            raise InterfaceNotDeclared("APB not in footprint")
        self._fab.apb_regs[i] = value & 0xFFFFFFFF
        self.actions.apb_updates.append(i)

    # events and MACs
    def event(self, line: int) -> None:
        if not 0 <= line < FABRIC.event_lines:
            raise ValueError(f"event line {line}")
        self._fab.raise_fabric_event(line, self.now)
        self.actions.events.append(line)

    def mac(self, block: int, ops: MacOperands) -> int:
        if block >= self._fp.mac_blocks:
            raise InterfaceNotDeclared(f"MAC block {block} not in footprint")
        return mac_exec(block, ops)


# -- the subsystem -----------------------------------------------------------------

class FabricStatus(enum.Enum):
    RESET = "reset"
    PROGRAMMED = "programmed"


N_APB_REGS = 32


class Efpga:
    def __init__(self, mcu: ClockDomain, peri: ClockDomain, efpga: ClockDomain,
                 now: Callable[[], int] = lambda: 0, sync_latency: int = 2,
                 capacity: FabricCapacity = FABRIC):
        self.capacity = capacity
        self.now = now
        self.domains = (mcu, peri, efpga)
        mk = lambda p, c, name: DualClockFifo(p, c, 4, sync_latency, name=name)  # noqa: E731
        self.req_fifos = [mk(efpga, mcu, f"mem_req{p}") for p in range(4)]
        self.resp_fifos = [mk(mcu, efpga, f"mem_resp{p}") for p in range(4)]
        self.stream_in_fifo = mk(peri, efpga, "stream_in")
        self.stream_out_fifo = mk(efpga, peri, "stream_out")
        self.apb_fifo = mk(mcu, efpga, "apb")
        self._apb_return = mk(efpga, mcu, "apb_rdata")
        self.events = EventPropagator(efpga, mcu, sync_latency)
        self.pads = None
        self.reset()

    def reset(self) -> None:
        self.status = FabricStatus.RESET
        self.design: Optional[SoftDesign] = None
        self.sleeping = False
        self.apb_regs = [0] * N_APB_REGS
        self.stream_cfg = [0] * 8
        self.gpio_out = 0
        self.gpio_in = 0
        self.outstanding = [0] * 4
        self._mcu_inflight: list[Optional[MemRequest]] = [None] * 4
        self.bus_errors = 0
        self.pad_slots = 0
        self.edges_run = 0
        self.refused = 0
        self.event_count = [0] * FABRIC.event_lines

    # -- programming ---------------------------------------------------------------

    def fcb_load(self, bitstream: BitstreamImage, apb_write_cost: int = 1,
                 factory: Optional[Callable[[], SoftDesign]] = None) -> tuple[SoftDesign, int]:
        """Program the fabric. Returns (design handle, APB load cycles)."""
        if self.sleeping:
            raise RuntimeError("fabric must leave sleep before programming")
        if len(bitstream.payload) != PAYLOAD_BYTES:
            raise BadLength(f"payload is {len(bitstream.payload)} bytes, expected {PAYLOAD_BYTES}")
        bad = bitstream.footprint.overflows(self.capacity)
        if bad:
            raise ResourceOverflow(f"{bitstream.design_id}: exceeds capacity on {', '.join(bad)}")
        design = (factory or design_factory(bitstream.design_id))()
        if design.footprint != bitstream.footprint:
            bad = design.footprint.overflows(self.capacity)
            if bad:
                raise ResourceOverflow(f"{design.design_id}: exceeds capacity on {', '.join(bad)}")
        self.reset()
        self.design = design
        self.status = FabricStatus.PROGRAMMED
        return design, PAYLOAD_WORDS * apb_write_cost

    @property
    def programmed(self) -> bool:
        return self.status is FabricStatus.PROGRAMMED

    def set_sleep(self, sleeping: bool) -> None:
        if not self.programmed:
            return
        self.sleeping = sleeping

    # -- eFPGA side ---------------------------------------------------------------

    def drain_acks(self, port: int, now: int) -> None:
        f = self.resp_fifos[port]
        while f.can_pop(now) and f.queue[0][1][0] == "w":
            f.pop(now)
            self.outstanding[port] -= 1

    def raise_fabric_event(self, line: int, now: int) -> None:
        if not self.programmed or self.sleeping:
            return
        self.event_count[line] += 1
        self.events.raise_line(line, now)

    def step(self, now: int) -> StepActions:
        """One eFPGA edge: apply arrived APB writes, then run the design."""
        if not self.programmed or self.sleeping:
            return StepActions()
        writes = []
        while self.apb_fifo.can_pop(now):
            i, v = self.apb_fifo.pop(now)
            self.apb_regs[i] = v
            writes.append((i, v))
        for p in range(self.design.footprint.mem_ports_used):
            self.drain_acks(p, now)
        io = FabricIO(self, now, writes)
        self.design.step(io)
        self.edges_run += 1
        self.refused += io.actions.refused
        return io.actions

    # -- MCU side -------------------------------------------------------------------

    def mcu_service(self, mem: MemorySystem, now: int) -> None:
        """Move visible port requests onto the interconnect (one in flight per port)."""
        for p in range(4):
            if self._mcu_inflight[p] is not None:
                continue
            rq, rs = self.req_fifos[p], self.resp_fifos[p]
            if not rq.can_pop(now) or not rs.can_push():
                continue
            kind, addr, data, be = rq.pop(now)
            req = MemRequest(EFPGA_PORTS[p], addr, write=kind == "w", wdata=data, byte_enable=be,
                             on_done=lambda r, d, p=p: self._port_done(p, r))
            try:
                mem.post(req)
            except MemError:
                self.bus_errors += 1
                rs.push((kind, 0), now)
                continue
            self._mcu_inflight[p] = req

    def _port_done(self, port: int, req: MemRequest) -> None:
        self._mcu_inflight[port] = None
        self.resp_fifos[port].push(("w" if req.write else "r", req.rdata), self.now())

    def apb_write(self, index: int, value: int, now: int) -> bool:
        """CPU-side user register write; False means the APB FIFO is full."""
        if not 0 <= index < N_APB_REGS:
            raise KeyError(f"user APB register {index}")
        return self.apb_fifo.try_push((index, value & 0xFFFFFFFF), now)

    def apb_read_ready_time(self, now: int) -> int:
        """When a CPU read issued at ``now`` returns: one CDC hop each way."""
        return self._apb_return.visible_time(self.apb_fifo.visible_time(now))

    def apb_read(self, index: int) -> int:
        if not 0 <= index < N_APB_REGS:
            raise KeyError(f"user APB register {index}")
        return self.apb_regs[index]

    def idle(self) -> bool:
        return (not any(self.outstanding) and not any(self._mcu_inflight)
                and not self.stream_out_fifo.occupancy)
