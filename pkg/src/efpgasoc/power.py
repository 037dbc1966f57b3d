"""Voltage/frequency/body-bias power model and energy integration.

Units: volts, MHz, microwatts, picoseconds in, microjoules out.

Shapes between anchors:
  * leakage and fmax are log-linear in vdd,
  * MCU dynamic density (uW/MHz) is linear in vdd**2, where the dynamic
    part at an anchor is total density minus leak/fmax,
  * the fabric's per-SLC dynamic coefficient k(vdd) is solved from the
    FF2SOC anchors and is also linear in vdd**2.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

ANCHOR_FILE = Path(__file__).parent / "data" / "anchors.csv"


class OutOfRange(ValueError):
    pass


class InvariantViolation(Exception):
    pass


@dataclass(frozen=True)
class PowerAnchor:
    tag: str
    vdd: float
    density: Optional[float]  # uW/MHz
    leakage: Optional[float]  # uW
    fmax: Optional[float]  # MHz


def load_anchors(path=ANCHOR_FILE) -> list[PowerAnchor]:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    out = []
    for r in csv.DictReader(rows):
        num = lambda k: float(r[k]) if r[k].strip() else None  # noqa: E731
        out.append(PowerAnchor(r["tag"].strip(), float(r["vdd_V"]), num("density_uW_per_MHz"),
                               num("leakage_uW"), num("fmax_MHz")))
    out.sort(key=lambda a: (a.tag, a.vdd))
    return out


class Curve:
    """Piecewise interpolation through (x, y) points, extrapolating end segments."""

    def __init__(self, points: Iterable[tuple[float, float]], kind: str):
        pts = sorted(points)
        if len(pts) < 2:
            raise ValueError(f"{kind} curve needs two points, got {pts}")
        self.kind = kind
        self.xs = [p[0] for p in pts]
        if kind == "log":
            self.ys = [math.log(p[1]) for p in pts]
        elif kind == "sq":
            self.xs = [x * x for x in self.xs]
            self.ys = [p[1] for p in pts]
        else:
            raise ValueError(kind)

    def __call__(self, v: float) -> float:
        x = v * v if self.kind == "sq" else v
        i = min(max(bisect_right(self.xs, x) - 1, 0), len(self.xs) - 2)
        x0, x1, y0, y1 = self.xs[i], self.xs[i + 1], self.ys[i], self.ys[i + 1]
        y = y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        return math.exp(y) if self.kind == "log" else y


@dataclass(frozen=True)
class PowerParams:
    ff2soc_slc: int = 154
    wfi_residual: float = 0.10
    fbb_power_gain: float = 0.43
    fbb_fmax_gain: float = 0.20
    fbb_s_at_0v6: float = 1.0
    fbb_s_at_0v8: float = 0.25
    rbb_full: float = 1.8
    vdd_min: float = 0.49
    vdd_max: float = 0.80
    # Quoted CPU-only power for the accelerator comparisons; kept for
    # reference next to the modelled value, not used in energy sums.
    cpu_reference_mw: float = 15.0


class PowerModel:
    def __init__(self, anchors: Optional[Sequence[PowerAnchor]] = None,
                 params: PowerParams = PowerParams()):
        self.anchors = list(anchors) if anchors is not None else load_anchors()
        self.p = params
        by = lambda tag: [a for a in self.anchors if a.tag == tag]  # noqa: E731
        mcu = by("MCU")
        self._mcu_leak = Curve([(a.vdd, a.leakage) for a in mcu if a.leakage], "log")
        self._mcu_fmax = Curve([(a.vdd, a.fmax) for a in mcu if a.fmax], "log")
        full = [a for a in mcu if a.density and a.leakage and a.fmax]
        self._mcu_dyn = Curve([(a.vdd, a.density - a.leakage / a.fmax) for a in full], "sq")
        self._fab_leak = Curve([(a.vdd, a.leakage) for a in by("EFPGA_LEAK")], "log")
        self._sleep_leak = Curve([(a.vdd, a.leakage) for a in by("EFPGA_SLEEP_RBB")], "log")
        ff2soc = by("EFPGA_FF2SOC")
        self._fmax_ff2soc = Curve([(a.vdd, a.fmax) for a in ff2soc], "log")
        self._fmax_ff2ff = Curve([(a.vdd, a.fmax) for a in by("EFPGA_FF2FF")], "log")
        n = params.ff2soc_slc
        self._k = Curve([(a.vdd, (a.density * a.fmax - self._fab_leak(a.vdd)) / (a.fmax * n))
                         for a in ff2soc], "sq")

    # -- range ---------------------------------------------------------------

    def check_vdd(self, vdd: float) -> None:
        if not (self.p.vdd_min - 1e-9 <= vdd <= self.p.vdd_max + 1e-9):
            raise OutOfRange(f"vdd {vdd} V outside [{self.p.vdd_min}, {self.p.vdd_max}]")

    # -- MCU -----------------------------------------------------------------

    def fbb_s(self, vdd: float) -> float:
        p = self.p
        return p.fbb_s_at_0v6 + (p.fbb_s_at_0v8 - p.fbb_s_at_0v6) * (vdd - 0.6) / 0.2

    def mcu_leak(self, vdd: float) -> float:
        self.check_vdd(vdd)
        return self._mcu_leak(vdd)

    def mcu_dyn_density(self, vdd: float) -> float:
        self.check_vdd(vdd)
        return self._mcu_dyn(vdd)

    def mcu_fmax(self, vdd: float, fbb: float = 0.0) -> float:
        self.check_vdd(vdd)
        f = self._mcu_fmax(vdd)
        if fbb > 0:
            f *= 1 + self.p.fbb_fmax_gain * self.fbb_s(vdd)
        return f

    def mcu_power(self, vdd: float, fbb: float, f: float) -> float:
        """Running power in uW."""
        if f < 0:
            raise OutOfRange(f"negative frequency {f}")
        pw = self.mcu_leak(vdd) + self.mcu_dyn_density(vdd) * f
        if fbb > 0:
            pw *= 1 + self.p.fbb_power_gain * self.fbb_s(vdd)
        return pw

    def mcu_idle_power(self, vdd: float, fbb: float, f: float) -> float:
        """Clock-gated (WFI) power: leakage plus a residual share of dynamic."""
        leak = self.mcu_leak(vdd)
        pw = leak + self.p.wfi_residual * self.mcu_dyn_density(vdd) * f
        if fbb > 0:
            pw *= 1 + self.p.fbb_power_gain * self.fbb_s(vdd)
        return pw

    # -- eFPGA ---------------------------------------------------------------

    def efpga_leak(self, vdd: float) -> float:
        self.check_vdd(vdd)
        return self._fab_leak(vdd)

    def efpga_k(self, vdd: float) -> float:
        """Dynamic coefficient in uW/MHz/SLC at unit activity."""
        self.check_vdd(vdd)
        return self._k(vdd)

    def efpga_sleep_leak(self, vdd: float, rbb: float) -> float:
        """Retentive-sleep leakage; partial RBB interpolates geometrically."""
        rbb = abs(rbb)
        if rbb > self.p.rbb_full + 1e-9:
            raise OutOfRange(f"RBB {rbb} V beyond {self.p.rbb_full} V")
        awake = self.efpga_leak(vdd)
        full = self._sleep_leak(vdd)
        return awake * (full / awake) ** (rbb / self.p.rbb_full)

    def efpga_power(self, vdd: float, f: float, slc_used: int, sleeping: bool = False,
                    rbb: float = 0.0, activity: float = 1.0) -> float:
        if not 0 <= slc_used <= 1024:
            raise OutOfRange(f"slc_used {slc_used}")
        if f < 0:
            raise OutOfRange(f"negative frequency {f}")
        if sleeping:
            return self.efpga_sleep_leak(vdd, rbb)
        return self.efpga_leak(vdd) + self.efpga_k(vdd) * f * slc_used * activity

    def efpga_fmax(self, vdd: float, curve: str = "ff2ff") -> float:
        self.check_vdd(vdd)
        if curve == "ff2soc":
            return self._fmax_ff2soc(vdd)
        if curve == "ff2ff":
            return self._fmax_ff2ff(vdd)
        raise ValueError(f"unknown fmax curve {curve!r}")

    def fmax(self, domain: str, vdd: float, bb: float = 0.0, curve: str = "ff2ff") -> float:
        if domain.upper() == "MCU":
            return self.mcu_fmax(vdd, bb)
        if domain.upper() == "EFPGA":
            return self.efpga_fmax(vdd, curve)
        raise OutOfRange(f"no fmax anchors for domain {domain}")


# -- operating points ------------------------------------------------------------

@dataclass(frozen=True)
class OperatingPoint:
    vdd: float
    f_mcu: float
    f_peri: float
    f_efpga: float
    fbb_mcu: float = 0.0
    rbb_efpga: float = 0.0
    efpga_sleeping: bool = False


def validate_operating_point(op: OperatingPoint, model: PowerModel,
                             efpga_curve: str = "ff2ff") -> None:
    """Raise InvariantViolation for anything the silicon could not run."""
    try:
        model.check_vdd(op.vdd)
    except OutOfRange as e:
        raise InvariantViolation(str(e)) from None
    if op.fbb_mcu < 0:
        raise InvariantViolation(f"fbb_mcu must be >= 0, got {op.fbb_mcu}")
    if abs(op.rbb_efpga) > model.p.rbb_full + 1e-9:
        raise InvariantViolation(f"rbb_efpga magnitude {abs(op.rbb_efpga)} > {model.p.rbb_full}")
    for name in ("f_mcu", "f_peri", "f_efpga"):
        if getattr(op, name) <= 0:
            raise InvariantViolation(f"{name} must be positive")
    fm = model.mcu_fmax(op.vdd, op.fbb_mcu)
    if op.f_mcu > fm * (1 + 1e-9):
        raise InvariantViolation(f"f_mcu {op.f_mcu} MHz exceeds fmax {fm:.2f} MHz at {op.vdd} V")
    fe = model.efpga_fmax(op.vdd, efpga_curve)
    if op.f_efpga > fe * (1 + 1e-9):
        raise InvariantViolation(
            f"f_efpga {op.f_efpga} MHz exceeds {efpga_curve} fmax {fe:.2f} MHz at {op.vdd} V")


# -- energy integration ------------------------------------------------------------

MCU_STATES = ("running", "wfi")
EFPGA_STATES = ("off", "active", "sleep")


@dataclass(frozen=True)
class Interval:
    t0: int  # ps
    t1: int
    mcu: str  # running | wfi
    efpga: str  # off | active | sleep


@dataclass(frozen=True)
class EfpgaLoad:
    slc: int = 0
    activity: float = 1.0


@dataclass
class EnergyReport:
    duration_us: float = 0.0
    energy_uj: dict = field(default_factory=lambda: {"mcu": 0.0, "efpga": 0.0})
    time_us: dict = field(default_factory=dict)  # per "domain:state"
    fbb_extrapolated: bool = False

    @property
    def total_uj(self) -> float:
        return sum(self.energy_uj.values())

    @property
    def avg_power_mw(self) -> float:
        return self.total_uj / self.duration_us if self.duration_us else 0.0

    def domain_power_mw(self, d: str) -> float:
        return self.energy_uj[d] / self.duration_us if self.duration_us else 0.0


def state_powers(op: OperatingPoint, model: PowerModel, load: EfpgaLoad) -> dict:
    """Power in uW for every (domain, state) pair at ``op``."""
    return {
        ("mcu", "running"): model.mcu_power(op.vdd, op.fbb_mcu, op.f_mcu),
        ("mcu", "wfi"): model.mcu_idle_power(op.vdd, op.fbb_mcu, op.f_mcu),
        ("efpga", "off"): 0.0,
        ("efpga", "active"): model.efpga_power(op.vdd, op.f_efpga, load.slc, activity=load.activity),
        ("efpga", "sleep"): model.efpga_power(op.vdd, op.f_efpga, load.slc, sleeping=True,
                                              rbb=op.rbb_efpga),
    }


def integrate_energy(intervals: Iterable[Interval], op: OperatingPoint, model: PowerModel,
                     load: EfpgaLoad = EfpgaLoad()) -> EnergyReport:
    pw = state_powers(op, model, load)
    rep = EnergyReport(fbb_extrapolated=op.fbb_mcu > 0 and op.vdd < 0.6)
    total_ps = 0
    for iv in intervals:
        if iv.t1 < iv.t0:
            raise ValueError("interval ends before it starts")
        dt_us = (iv.t1 - iv.t0) * 1e-6
        total_ps += iv.t1 - iv.t0
        for dom, state in (("mcu", iv.mcu), ("efpga", iv.efpga)):
            rep.energy_uj[dom] += pw[(dom, state)] * dt_us * 1e-6
            key = f"{dom}:{state}"
            rep.time_us[key] = rep.time_us.get(key, 0.0) + dt_us
    rep.duration_us = total_ps * 1e-6
    return rep


def savings_ratio(baseline: EnergyReport, accelerated: EnergyReport) -> float:
    if accelerated.total_uj <= 0:
        raise ValueError("accelerated run has no energy")
    return baseline.total_uj / accelerated.total_uj


def system_density(op: OperatingPoint, model: PowerModel, load: EfpgaLoad) -> dict:
    """Sum of per-domain uW/MHz with both domains running, plus the fabric's power share."""
    p_mcu = model.mcu_power(op.vdd, op.fbb_mcu, op.f_mcu)
    p_fab = model.efpga_power(op.vdd, op.f_efpga, load.slc, activity=load.activity)
    return {
        "mcu_uW_per_MHz": p_mcu / op.f_mcu,
        "efpga_uW_per_MHz": p_fab / op.f_efpga,
        "total_uW_per_MHz": p_mcu / op.f_mcu + p_fab / op.f_efpga,
        "efpga_power_share": p_fab / (p_mcu + p_fab),
        "mcu_uW": p_mcu,
        "efpga_uW": p_fab,
    }
