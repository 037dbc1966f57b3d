"""The assembled SoC: CPU, memory, uDMA, GPIO, FCB and eFPGA on three clocks.

APB map (offsets from the APB base):

    0x0000  uDMA channels and stream configuration
    0x1000  GPIO   OUT0 +0, OUT1 +4, IN0 +8, IN1 +0xC
    0x2000  FCB    STATUS +0, SLEEP +4, RBB_MV +8, BITSTREAM +0xC
    0x3000  eFPGA user registers, 32 words
    0x4000  SoC control: EOC +0

APB writes are posted and take one cycle. Reads of SoC peripherals stall
for ``apb_read_latency`` cycles; reads of the eFPGA user registers stall
for the CDC round trip.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

from .cpu import Cpu, DataAccess, Mode
from .efpga import BitstreamImage, Efpga, SoftDesign
from .kernel import Domain, EventPropagator, SimKernel
from .memsys import DEFAULT_MAP, AddressMap, Master, MemError, MemorySystem, MemRequest, Unmapped
from .power import Interval, OperatingPoint
from .udma import CH_EFPGA_RX, CH_EFPGA_TX, EOT_LINE_BASE, FifoSink, Udma

UDMA_OFF, GPIO_OFF, FCB_OFF, EFPGA_OFF, CTRL_OFF = 0x0000, 0x1000, 0x2000, 0x3000, 0x4000


def soc_symbols(amap: AddressMap = DEFAULT_MAP) -> dict[str, int]:
    """Constants available to every program: bases and the argument block."""
    apb = amap.apb_base
    return {
        "ARGS": amap.private1_base,
        "L2": amap.interleaved_base,
        "UDMA": apb + UDMA_OFF,
        "GPIO": apb + GPIO_OFF,
        "FCB": apb + FCB_OFF,
        "EFPGA_REGS": apb + EFPGA_OFF,
        "SOC_CTRL": apb + CTRL_OFF,
        "EOT_SPI_RX": 1 << (EOT_LINE_BASE + 0),
        "EOT_EFPGA_RX": 1 << (EOT_LINE_BASE + CH_EFPGA_RX),
    }


class Gpio:
    """Software-driven pads. A rising CLK pin clocks the attached device."""

    CLK_BIT = 1 << 32

    def __init__(self, soc: "Soc"):
        self.soc = soc
        self.out = 0
        self.writes = 0

    def write(self, off: int, v: int) -> None:
        self.writes += 1
        old = self.out
        if off == 0:
            self.out = (self.out & ~0xFFFFFFFF) | v
        elif off == 4:
            self.out = (self.out & 0xFFFFFFFF) | ((v & 0x1FF) << 32)
        else:
            raise Unmapped(f"GPIO offset {off:#x}")
        if self.out & self.CLK_BIT and not old & self.CLK_BIT and self.soc.pads is not None:
            self.soc.pad_in = self.soc.pads.clock(self.out)

    def read(self, off: int) -> int:
        pins = self.soc.pad_in
        if off == 8:
            return pins & 0xFFFFFFFF
        if off == 0xC:
            return pins >> 32
        if off in (0, 4):
            return (self.out >> (8 * off)) & 0xFFFFFFFF
        raise Unmapped(f"GPIO offset {off:#x}")


class SocBus:
    """The CPU's view of the interconnect and the APB bridge."""

    def __init__(self, soc: "Soc"):
        self.soc = soc
        self.mem = soc.mem
        self.amap = soc.mem.amap
        self._held: Optional[tuple] = None  # data result kept while the fetch retries
        self._apb_wait: Optional[tuple] = None

    def read_instr(self, addr: int) -> int:
        return self.mem.read_word(addr)

    def cpu_cycle(self, fetch_addr, data: Optional[DataAccess]):
        mem = self.mem
        extra = []
        f = None
        if fetch_addr is not None:
            f = MemRequest(Master.CPU_I, fetch_addr)
            extra.append(f)
        res = None
        d = None
        if data is not None:
            if self._held is not None and self._held[0] == data:
                res = self._held[1]
            elif self.amap.is_apb(data.addr):
                try:
                    res = self._apb(data)
                except MemError:
                    mem.cycle(extra)
                    raise
            else:
                d = MemRequest(Master.CPU_D, data.addr, data.write, data.wdata, data.byte_enable)
                try:
                    mem.check(d)
                except MemError:
                    mem.cycle(extra)
                    raise
                extra.append(d)
        mem.cycle(extra)
        if d is not None and d.done:
            res = (d.rdata, 0)
        fetched = f is None or f.done
        if not fetched:
            self._held = (data, res) if res is not None else None
            return False, None
        self._held = None
        return True, res

    def _apb(self, data: DataAccess):
        soc = self.soc
        now = soc.kernel.now
        off = data.addr - self.amap.apb_base
        dev, reg = off & ~0xFFF, off & 0xFFF
        try:
            return self._apb_access(data, now, dev, reg)
        except KeyError as e:
            raise Unmapped(f"APB {data.addr:#x}: {e}") from None

    def _apb_access(self, data: DataAccess, now: int, dev: int, reg: int):
        soc = self.soc
        if data.write:
            v = data.wdata >> (8 * ((data.byte_enable & -data.byte_enable).bit_length() - 1))
            if dev == EFPGA_OFF:
                if not soc.efpga.apb_write(reg >> 2, v, now):
                    return None
            else:
                soc.apb_write(dev, reg, v)
            return (0, 0)
        if self._apb_wait is None or self._apb_wait[0] != data:
            if dev == EFPGA_OFF:
                ready = soc.efpga.apb_read_ready_time(now)
            else:
                ready = soc.kernel.edge_after(Domain.MCU, now, soc.apb_read_latency)
            self._apb_wait = (data, ready)
        if now < self._apb_wait[1]:
            return None
        self._apb_wait = None
        if dev == EFPGA_OFF:
            return (soc.efpga.apb_read(reg >> 2), 0)
        return (soc.apb_read(dev, reg), 0)


@dataclass
class StopCondition:
    kind: str = "halt"  # halt | duration | event
    duration_ps: int = 0
    line: int = 0
    count: int = 1

    @classmethod
    def parse(cls, text: str) -> "StopCondition":
        parts = text.strip().split(":")
        if parts[0] == "halt" and len(parts) == 1:
            return cls("halt")
        if parts[0] == "duration" and len(parts) == 2:
            return cls("duration", duration_ps=int(round(float(parts[1]) * 1e6)))
        if parts[0] == "event" and len(parts) == 3:
            return cls("event", line=int(parts[1]), count=int(parts[2]))
        raise ValueError(f"bad stop condition {text!r}")


class SimulationTimeout(Exception):
    pass


class Soc:
    def __init__(self, op: OperatingPoint, amap: AddressMap = DEFAULT_MAP, trace: bool = True,
                 sync_latency: int = 2, apb_read_latency: int = 2):
        self.op = op
        self.kernel = SimKernel.from_mhz(op.f_mcu, op.f_peri, op.f_efpga, trace=trace)
        k = self.kernel
        doms = k.domains
        self.mem = MemorySystem(amap)
        self.apb_read_latency = apb_read_latency
        self.cpu = Cpu(SocBus(self), on_mode_change=self._on_mode)
        now = lambda: k.now  # noqa: E731
        self.efpga = Efpga(doms[Domain.MCU], doms[Domain.PERI], doms[Domain.EFPGA], now=now,
                           sync_latency=sync_latency)
        self.udma = Udma(self.mem, now, on_eot=self._on_eot)
        self.udma.sources[CH_EFPGA_RX] = self._stream_out_pop
        self.udma.sinks[CH_EFPGA_TX] = FifoSink(self.efpga.stream_in_fifo)
        self.udma.stream_cfg = self.efpga.stream_cfg
        self.udma_events = EventPropagator(doms[Domain.PERI], doms[Domain.MCU], sync_latency)
        self.gpio = Gpio(self)
        self.pads = None
        self.pad_in = 0
        self.eoc: Optional[int] = None
        self.fcb_words = 0
        self.events_delivered = [0] * 32
        self.stop = StopCondition()
        self._intervals: list[Interval] = []
        self._seg_start = 0
        self._state = ("running", "off")
        k.set_enabled(Domain.EFPGA, False)
        k.on_edge(Domain.MCU, self._mcu_edge)
        k.on_edge(Domain.PERI, self._peri_edge)
        k.on_edge(Domain.EFPGA, self._efpga_edge)

    # -- setup ---------------------------------------------------------------------

    def attach_pads(self, device) -> None:
        """Wire an off-chip device to the pads (shared by GPIO and the fabric)."""
        self.pads = device
        self.efpga.pads = device

    def program_fabric(self, bitstream: BitstreamImage, apb_write_cost: int = 1,
                       factory=None) -> tuple[SoftDesign, int]:
        design, cycles = self.efpga.fcb_load(bitstream, apb_write_cost, factory)
        self.efpga.stream_cfg = self.udma.stream_cfg
        self.kernel.log(Domain.MCU, "fcb_load", f"{bitstream.design_id}:{cycles}")
        self._fabric_changed()
        return design, cycles

    def set_fabric_sleep(self, sleeping: bool) -> None:
        self.efpga.set_sleep(sleeping)
        self.kernel.log(Domain.MCU, "fabric_sleep", int(sleeping))
        self._fabric_changed()

    def _fabric_changed(self) -> None:
        e = self.efpga
        self.kernel.set_enabled(Domain.EFPGA, e.programmed and not e.sleeping)
        self._set_state(efpga="off" if not e.programmed else ("sleep" if e.sleeping else "active"))

    # -- APB devices ---------------------------------------------------------------

    def apb_write(self, dev: int, reg: int, v: int) -> None:
        if dev == UDMA_OFF:
            self.udma.apb_write(reg, v)
        elif dev == GPIO_OFF:
            self.gpio.write(reg, v)
        elif dev == FCB_OFF:
            if reg == 4:
                self.set_fabric_sleep(bool(v & 1))
            elif reg == 0xC:
                self.fcb_words += 1
            elif reg != 8:
                raise Unmapped(f"FCB offset {reg:#x}")
        elif dev == CTRL_OFF and reg == 0:
            self.eoc = v
            self.kernel.log(Domain.MCU, "eoc", v)
        else:
            raise Unmapped(f"APB {dev + reg:#x}")

    def apb_read(self, dev: int, reg: int) -> int:
        if dev == UDMA_OFF:
            return self.udma.apb_read(reg)
        if dev == GPIO_OFF:
            return self.gpio.read(reg)
        if dev == FCB_OFF and reg == 0:
            return int(self.efpga.programmed) | (int(self.efpga.sleeping) << 1)
        if dev == CTRL_OFF and reg == 0:
            return self.eoc or 0
        raise Unmapped(f"APB {dev + reg:#x}")

    # -- plumbing ------------------------------------------------------------------

    def _stream_out_pop(self, now: int) -> Optional[int]:
        f = self.efpga.stream_out_fifo
        return f.pop(now) if f.can_pop(now) else None

    def _on_eot(self, ch: int) -> None:
        self.kernel.log(Domain.PERI, "udma_eot", ch)
        self.udma_events.raise_line(EOT_LINE_BASE + ch, self.kernel.now)

    def _on_mode(self, mode: Mode) -> None:
        self.kernel.log(Domain.MCU, "cpu_mode", mode.value)
        self._set_state(mcu="running" if mode is Mode.RUNNING else "wfi")

    def _set_state(self, mcu: Optional[str] = None, efpga: Optional[str] = None) -> None:
        new = (mcu or self._state[0], efpga or self._state[1])
        if new == self._state:
            return
        now = self.kernel.now
        if now > self._seg_start:
            self._intervals.append(Interval(self._seg_start, now, *self._state))
        self._seg_start = now
        self._state = new

    def intervals(self) -> list[Interval]:
        out = list(self._intervals)
        if self.kernel.now > self._seg_start:
            out.append(Interval(self._seg_start, self.kernel.now, *self._state))
        return out

    def _deliver(self, line: int) -> None:
        self.events_delivered[line] += 1
        self.kernel.log(Domain.MCU, "irq", line)
        self.cpu.raise_interrupt(line)
        st = self.stop
        if st.kind == "event" and line == st.line and self.events_delivered[line] >= st.count:
            self.kernel.stop()

    def _mcu_edge(self, t: int) -> None:
        if self.efpga.events.pending:
            for line in self.efpga.events.deliver(t):
                self._deliver(line)
        if self.udma_events.pending:
            for line in self.udma_events.deliver(t):
                self._deliver(line)
        if self.efpga.programmed:
            self.efpga.mcu_service(self.mem, t)
        self.cpu.step()
        if self.stop.kind == "halt" and self.cpu.state.mode is Mode.HALTED:
            self.kernel.stop()

    def _peri_edge(self, t: int) -> None:
        self.udma.step(t)

    def _efpga_edge(self, t: int) -> None:
        self.efpga.step(t)

    # -- running -------------------------------------------------------------------

    def run(self, stop: StopCondition, timeout_ps: int = 20_000_000_000) -> int:
        """Run to the stop condition; returns the stop time in ps."""
        self.stop = stop
        if stop.kind == "halt" and self.cpu.state.mode is Mode.HALTED:
            return self.kernel.now
        if stop.kind == "duration":
            self.kernel.advance(self.kernel.now + stop.duration_ps, collect=False)
        else:
            self.kernel.advance(self.kernel.now + timeout_ps, collect=False)
            if not self.kernel.stopped:
                raise SimulationTimeout(f"stop condition {stop} not reached in {timeout_ps} ps")
        self.kernel.log(Domain.MCU, "stop", stop.kind)
        return self.kernel.now
