"""Scenario files and the runner that turns one into a :class:`RunReport`.

A scenario is an INI file::

    [scenario]
    name = bnn_both
    workload = bnn
    mode = both                 ; baseline | accelerated | both
    stop = halt                 ; halt | duration:<us> | event:<line>:<count>

    [operating_point]           ; shared by both variants
    vdd = 0.8
    f_mcu = 600
    f_peri = 100
    f_efpga = 125               ; a number, or "fmax" for the curve limit

    [accelerated]               ; per-variant program and overrides
    program = bnn_accel

    [workload]                  ; workload parameters
    rows = 32

Relative paths resolve against the scenario file's directory.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .designs import CATALOG, design_activity
from .efpga import PAYLOAD_BYTES, BitstreamImage
from .kernel import Domain
from .memsys import Master
from .power import (EfpgaLoad, InvariantViolation, OperatingPoint, PowerModel, integrate_energy,
                    validate_operating_point)
from .program import load_image_file, load_program, program_path
from .report import RunReport, RunResult, ratios
from .soc import Soc, StopCondition, soc_symbols
from .workloads import WORKLOADS, make_workload

SCENARIO_DIR = Path(__file__).parent / "scenarios"
MODES = ("baseline", "accelerated", "both")
OP_KEYS = ("vdd", "f_mcu", "f_peri", "f_efpga", "fbb_mcu", "rbb_efpga")
VARIANT_KEYS = set(OP_KEYS) | {"program", "stop"}
SECTIONS = {"scenario", "operating_point", "baseline", "accelerated", "workload", "sweep"}


class ConfigError(Exception):
    """Bad scenario file. ``key`` names the offending entry as ``section.key``."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class VariantSpec:
    name: str
    program: str
    op: dict
    stop: StopCondition


@dataclass
class Scenario:
    name: str
    workload: str
    mode: str
    design_id: Optional[str]
    variants: list[VariantSpec]
    workload_params: dict = field(default_factory=dict)
    seed: int = 1
    timeout_us: float = 20000.0
    sweep_vdd: list[float] = field(default_factory=list)
    bitstream: Optional[str] = None
    path: Optional[Path] = None


def _num(section: str, key: str, raw: str):
    if raw.strip().lower() == "fmax":
        return "fmax"
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"expected a number or 'fmax', got {raw!r}") from None


def _stop(section: str, raw: str) -> StopCondition:
    try:
        return StopCondition.parse(raw)
    except ValueError as e:
        raise ConfigError(f"{section}.stop", str(e)) from None


def parse_scenario(text: str, path: Optional[Path] = None) -> Scenario:
    cfg = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cfg.read_string(text, source=str(path or "<scenario>"))
    except configparser.Error as e:
        raise ConfigError("file", str(e).splitlines()[0]) from None
    for s in cfg.sections():
        if s not in SECTIONS:
            raise ConfigError(s, "unknown section")
    if "scenario" not in cfg:
        raise ConfigError("scenario", "missing section")
    sc = cfg["scenario"]
    known = {"name", "workload", "mode", "stop", "seed", "timeout_us", "design", "bitstream"}
    for k in sc:
        if k not in known:
            raise ConfigError(f"scenario.{k}", "unknown key")
    workload = sc.get("workload")
    if workload is None:
        raise ConfigError("scenario.workload", "missing")
    if workload not in WORKLOADS:
        raise ConfigError("scenario.workload", f"unknown workload {workload!r}")
    mode = sc.get("mode", "both")
    if mode not in MODES:
        raise ConfigError("scenario.mode", f"must be one of {', '.join(MODES)}")
    design_id = sc.get("design", WORKLOADS[workload].design_id)
    if design_id is not None and design_id not in CATALOG:
        raise ConfigError("scenario.design", f"{design_id!r} is not in the design catalog")
    entry = CATALOG.get(design_id) if design_id else None
    default_stop = _stop("scenario", sc.get("stop", "halt"))
    try:
        seed = int(sc.get("seed", "1"))
    except ValueError:
        raise ConfigError("scenario.seed", "expected an integer") from None
    try:
        timeout_us = float(sc.get("timeout_us", "20000"))
    except ValueError:
        raise ConfigError("scenario.timeout_us", "expected a number") from None

    base_op = {"fbb_mcu": 0.0, "rbb_efpga": 0.0}
    if "operating_point" in cfg:
        for k, v in cfg["operating_point"].items():
            if k not in OP_KEYS:
                raise ConfigError(f"operating_point.{k}", "unknown key")
            base_op[k] = _num("operating_point", k, v)

    wanted = ("baseline", "accelerated") if mode == "both" else (mode,)
    variants = []
    for v in wanted:
        sec = cfg[v] if v in cfg else {}
        op = dict(base_op)
        for k, raw in sec.items():
            if k not in VARIANT_KEYS:
                raise ConfigError(f"{v}.{k}", "unknown key")
            if k in OP_KEYS:
                op[k] = _num(v, k, raw)
        for k in ("vdd", "f_mcu", "f_peri", "f_efpga"):
            if k not in op:
                raise ConfigError(f"operating_point.{k}", f"missing (needed by {v})")
        default_prog = None
        if entry is not None:
            default_prog = entry.paired_baseline if v == "baseline" else entry.accelerated
        elif workload == "minimal":
            default_prog = "minimal"
        program = sec.get("program", default_prog)
        if not program:
            raise ConfigError(f"{v}.program", "missing and the catalog has no default")
        if path is not None and (path.parent / program).exists():
            program = str(path.parent / program)
        try:
            program_path(program)
        except FileNotFoundError:
            raise ConfigError(f"{v}.program", f"file not found: {program}") from None
        stop = _stop(v, sec["stop"]) if "stop" in sec else default_stop
        variants.append(VariantSpec(v, program, op, stop))

    params = dict(cfg["workload"]) if "workload" in cfg else {}
    cls = WORKLOADS[workload]
    for k in params:
        if k not in cls.params:
            raise ConfigError(f"workload.{k}", f"unknown parameter for {workload}")
    sweep = []
    if "sweep" in cfg:
        for k, raw in cfg["sweep"].items():
            if k != "vdd":
                raise ConfigError(f"sweep.{k}", "unknown key")
            try:
                sweep = [float(x) for x in raw.split(",") if x.strip()]
            except ValueError:
                raise ConfigError("sweep.vdd", "expected a comma-separated list of volts") from None
    bitstream = sc.get("bitstream")
    if bitstream is not None:
        bp = Path(bitstream) if path is None else path.parent / bitstream
        if not bp.exists():
            raise ConfigError("scenario.bitstream", f"file not found: {bitstream}")
        bitstream = str(bp)
    name = sc.get("name", path.stem if path else "scenario")
    return Scenario(name, workload, mode, design_id, variants, params, seed, timeout_us,
                    sweep, bitstream, path)


def load_scenario(path) -> Scenario:
    p = Path(path)
    if not p.exists() and (SCENARIO_DIR / p).exists():
        p = SCENARIO_DIR / p
    if not p.exists() and (SCENARIO_DIR / f"{p}.cfg").exists():
        p = SCENARIO_DIR / f"{p}.cfg"
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError("file", f"cannot read {path}: {e.strerror}") from None
    return parse_scenario(text, p)


def with_vdd(sc: Scenario, vdd: float) -> Scenario:
    """The same scenario at another supply voltage; numeric frequencies kept."""
    return replace(sc, name=f"{sc.name}@{vdd:g}V",
                   variants=[replace(v, op={**v.op, "vdd": vdd}) for v in sc.variants])


# -- running -----------------------------------------------------------------------

def resolve_op(spec: dict, model: PowerModel, curve: str) -> OperatingPoint:
    """Turn a parsed op dict into an OperatingPoint, filling ``fmax`` entries."""
    vdd = spec["vdd"]
    if vdd == "fmax":
        raise InvariantViolation("vdd cannot be 'fmax'")
    vals = dict(spec)
    try:
        if vals["f_mcu"] == "fmax":
            vals["f_mcu"] = model.mcu_fmax(vdd, vals["fbb_mcu"])
        if vals["f_efpga"] == "fmax":
            vals["f_efpga"] = model.efpga_fmax(vdd, curve)
        if vals["f_peri"] == "fmax":
            vals["f_peri"] = vals["f_mcu"]
    except ValueError as e:
        raise InvariantViolation(str(e)) from None
    return OperatingPoint(vdd, vals["f_mcu"], vals["f_peri"], vals["f_efpga"],
                          vals["fbb_mcu"], vals["rbb_efpga"])


def check_bitstream(sc: Scenario) -> None:
    """Reject a bitstream file the fabric would refuse, before anything runs."""
    if not sc.bitstream or all(v.name != "accelerated" for v in sc.variants):
        return
    try:
        bs = BitstreamImage.read(sc.bitstream)
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError("scenario.bitstream", f"unreadable: {e}") from None
    if len(bs.payload) != PAYLOAD_BYTES:
        raise ConfigError("scenario.bitstream",
                          f"payload is {len(bs.payload)} bytes, expected {PAYLOAD_BYTES}")
    bad = bs.footprint.overflows()
    if bad:
        raise ConfigError("scenario.bitstream", f"footprint exceeds capacity on {', '.join(bad)}")


def validate(sc: Scenario, model: PowerModel) -> list[OperatingPoint]:
    check_bitstream(sc)
    curve = CATALOG[sc.design_id].fmax_curve if sc.design_id else "ff2ff"
    ops = []
    for v in sc.variants:
        op = resolve_op(v.op, model, curve)
        validate_operating_point(op, model, curve)
        ops.append(op)
    return ops


def _bandwidth(soc: Soc, t_us: float) -> tuple[float, float, float]:
    w = soc.mem.words_moved
    if t_us <= 0:
        return 0.0, 0.0, 0.0
    cpu = w[Master.CPU_I] + w[Master.CPU_D]
    dma = w[Master.UDMA_RX] + w[Master.UDMA_TX]
    fab = sum(w[m] for m in (Master.EFPGA_P0, Master.EFPGA_P1, Master.EFPGA_P2, Master.EFPGA_P3))
    return tuple(4 * n / t_us for n in (cpu, dma, fab))


def run_variant(sc: Scenario, v: VariantSpec, op: OperatingPoint, model: PowerModel,
                trace: bool = False) -> tuple[RunResult, Soc]:
    soc = Soc(op, trace=trace)
    wl = make_workload(sc.workload, sc.seed, **sc.workload_params)
    image = load_image_file(v.program, symbols=soc_symbols())
    load_program(soc.mem, image, soc.cpu.state)
    fcb_writes = 0
    activity, slc = 1.0, 0
    uses_fabric = v.name == "accelerated" and sc.design_id is not None
    if uses_fabric:
        entry = CATALOG[sc.design_id]
        bs = (BitstreamImage.read(sc.bitstream) if sc.bitstream
              else BitstreamImage.synthesize(sc.design_id, entry.footprint))
        _, fcb_writes = soc.program_fabric(bs)
        activity, slc = design_activity(entry, model), bs.footprint.slc
    wl.prepare(soc, v.name)
    t_end = soc.run(v.stop, timeout_ps=int(sc.timeout_us * 1e6))
    chk = wl.check(soc, v.name)
    energy = integrate_energy(soc.intervals(), op, model, EfpgaLoad(slc, activity))
    t_us = t_end * 1e-6
    k = soc.kernel.domains
    e_mcu, e_fab = energy.energy_uj["mcu"], energy.energy_uj["efpga"]
    p_mcu = e_mcu / t_us * 1e6 if t_us else 0.0  # uJ/us is W; report uW
    p_fab = e_fab / t_us * 1e6 if t_us else 0.0
    total = e_mcu + e_fab
    bw = _bandwidth(soc, t_us)
    res = RunResult(
        variant=v.name, program=Path(v.program).stem, design_id=sc.design_id if uses_fabric else "",
        vdd_V=op.vdd, f_mcu_MHz=op.f_mcu, f_peri_MHz=op.f_peri, f_efpga_MHz=op.f_efpga,
        fbb_mcu_V=op.fbb_mcu, rbb_efpga_V=op.rbb_efpga,
        edges_mcu=k[Domain.MCU].edge_count, edges_peri=k[Domain.PERI].edge_count,
        edges_efpga=k[Domain.EFPGA].edge_count,
        cpu_cycles=soc.cpu.state.cycle_count, cpu_instret=soc.cpu.state.instret,
        completion_time_us=t_us, energy_mcu_uJ=e_mcu, energy_efpga_uJ=e_fab, energy_total_uJ=total,
        avg_power_mW=(p_mcu + p_fab) / 1000,
        density_mcu_uW_per_MHz=p_mcu / op.f_mcu,
        density_efpga_uW_per_MHz=p_fab / op.f_efpga if uses_fabric else 0.0,
        density_total_uW_per_MHz=p_mcu / op.f_mcu + (p_fab / op.f_efpga if uses_fabric else 0.0),
        efpga_power_share=e_fab / total if total else 0.0,
        efpga_activity=activity,
        bw_cpu_MBps=bw[0], bw_udma_MBps=bw[1], bw_efpga_MBps=bw[2],
        fcb_apb_writes=fcb_writes, fbb_extrapolated=energy.fbb_extrapolated,
        outputs_ok=chk.ok, check_detail=chk.detail, trace_hash=soc.kernel.trace_hash(),
    )
    return res, soc


def run_scenario(sc: Scenario, model: Optional[PowerModel] = None,
                 trace_sink: Optional[list] = None) -> RunReport:
    """Validate every variant first, then run them in order."""
    model = model or PowerModel()
    ops = validate(sc, model)
    report = RunReport(sc.name, sc.mode)
    for v, op in zip(sc.variants, ops):
        res, soc = run_variant(sc, v, op, model, trace=trace_sink is not None)
        report.runs.append(res)
        if trace_sink is not None:
            trace_sink.extend(f"{v.name},{line}" for line in soc.kernel.trace_lines)
    if sc.mode == "both":
        base, acc = report.run("baseline"), report.run("accelerated")
        if acc.energy_total_uJ > 0:
            report.savings_ratio = base.energy_total_uJ / acc.energy_total_uJ
            r = ratios(base, acc)
            report.time_ratio, report.power_ratio = r["time_ratio"], r["power_ratio"]
    return report
