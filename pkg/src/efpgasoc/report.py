"""Run reports: the per-variant record, CSV/JSON emission and comparison."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional


@dataclass
class RunResult:
    """Everything measured in one variant of a scenario. Units are in the field names."""

    variant: str
    program: str
    design_id: str = ""
    vdd_V: float = 0.0
    f_mcu_MHz: float = 0.0
    f_peri_MHz: float = 0.0
    f_efpga_MHz: float = 0.0
    fbb_mcu_V: float = 0.0
    rbb_efpga_V: float = 0.0
    edges_mcu: int = 0
    edges_peri: int = 0
    edges_efpga: int = 0
    cpu_cycles: int = 0
    cpu_instret: int = 0
    completion_time_us: float = 0.0
    energy_mcu_uJ: float = 0.0
    energy_efpga_uJ: float = 0.0
    energy_total_uJ: float = 0.0
    avg_power_mW: float = 0.0
    density_mcu_uW_per_MHz: float = 0.0
    density_efpga_uW_per_MHz: float = 0.0
    density_total_uW_per_MHz: float = 0.0
    efpga_power_share: float = 0.0
    efpga_activity: float = 1.0
    bw_cpu_MBps: float = 0.0
    bw_udma_MBps: float = 0.0
    bw_efpga_MBps: float = 0.0
    fcb_apb_writes: int = 0
    fbb_extrapolated: bool = False
    outputs_ok: bool = True
    check_detail: str = ""
    trace_hash: str = ""


COLUMNS = [f.name for f in fields(RunResult)] + ["savings_ratio_x"]


@dataclass
class RunReport:
    scenario: str
    mode: str
    runs: list[RunResult] = field(default_factory=list)
    savings_ratio: Optional[float] = None
    time_ratio: Optional[float] = None
    power_ratio: Optional[float] = None

    def run(self, variant: str) -> RunResult:
        for r in self.runs:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    @property
    def ok(self) -> bool:
        return all(r.outputs_ok for r in self.runs)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        runs = [RunResult(**r) for r in d.get("runs", [])]
        return cls(d["scenario"], d["mode"], runs, d.get("savings_ratio"),
                   d.get("time_ratio"), d.get("power_ratio"))


def ratios(a: RunResult, b: RunResult) -> dict[str, float]:
    """E_a/E_b, T_a/T_b and P_a/P_b."""
    def div(x, y):
        return x / y if y else float("nan")

    return {
        "energy_ratio": div(a.energy_total_uJ, b.energy_total_uJ),
        "time_ratio": div(a.completion_time_us, b.completion_time_us),
        "power_ratio": div(a.avg_power_mW, b.avg_power_mW),
    }


def to_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"


def from_json(text: str) -> RunReport:
    return RunReport.from_dict(json.loads(text))


def to_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in report.runs:
        row = asdict(r)
        row["savings_ratio_x"] = (report.savings_ratio
                                  if report.savings_ratio is not None and r.variant == "accelerated"
                                  else "")
        w.writerow(row)
    return buf.getvalue()


def from_csv(text: str, scenario: str = "", mode: str = "") -> RunReport:
    types = {f.name: f.type for f in fields(RunResult)}
    runs, ratio = [], None
    for row in csv.DictReader(io.StringIO(text)):
        s = row.pop("savings_ratio_x", "")
        if s:
            ratio = float(s)
        vals = {}
        for k, v in row.items():
            t = types[k]
            if t in ("int", int):
                vals[k] = int(v)
            elif t in ("float", float):
                vals[k] = float(v)
            elif t in ("bool", bool):
                vals[k] = v == "True"
            else:
                vals[k] = v
        runs.append(RunResult(**vals))
    return RunReport(scenario, mode, runs, ratio)


def emit_report(report: RunReport, path, fmt: Optional[str] = None) -> Path:
    """Write ``report`` as csv or json (format from ``fmt`` or the suffix)."""
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".") or "json").lower()
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown report format {fmt!r}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_csv(report) if fmt == "csv" else to_json(report))
    return path


def load_report(path) -> RunReport:
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".csv":
        return from_csv(text, path.stem)
    return from_json(text)


def compare(a: RunReport, b: RunReport) -> list[dict]:
    """Ratio rows for every variant the two reports share."""
    rows = []
    for ra in a.runs:
        try:
            rb = b.run(ra.variant)
        except KeyError:
            continue
        rows.append({"variant": ra.variant, **ratios(ra, rb)})
    if not rows and len(a.runs) == 1 and len(b.runs) == 1:
        rows.append({"variant": f"{a.runs[0].variant}/{b.runs[0].variant}",
                     **ratios(a.runs[0], b.runs[0])})
    return rows


def format_table(rows: list[dict]) -> str:
    lines = ["variant,E_a/E_b,T_a/T_b,P_a/P_b"]
    for r in rows:
        lines.append(f"{r['variant']},{r['energy_ratio']:.4f},{r['time_ratio']:.4f},"
                     f"{r['power_ratio']:.4f}")
    return "\n".join(lines) + "\n"
