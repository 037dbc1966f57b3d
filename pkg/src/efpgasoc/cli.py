"""Command line: ``run``, ``compare`` and ``sweep``.

Exit codes: 0 ok, 1 run failed (output check or timeout), 2 config error,
3 operating-point invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from .power import InvariantViolation, PowerModel
from .report import RunReport, compare, emit_report, format_table, load_report, to_csv, to_json
from .scenario import ConfigError, load_scenario, run_scenario, validate, with_vdd
from .soc import SimulationTimeout

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2, 3


def vdd_range(text: str) -> list[float]:
    """``lo:hi:step`` (inclusive) or a comma-separated list."""
    if ":" in text:
        try:
            lo, hi, step = (float(x) for x in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad range {text!r}") from None
        if step <= 0 or hi < lo:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 6) for i in range(n)]
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad voltage list {text!r}") from None


def _summary(report: RunReport) -> str:
    lines = []
    for r in report.runs:
        status = "ok" if r.outputs_ok else f"FAILED ({r.check_detail})"
        lines.append(f"{report.scenario} {r.variant} @{r.vdd_V:g}V: {r.completion_time_us:.3f} us, "
                     f"{r.energy_total_uJ:.5f} uJ, {r.avg_power_mW:.3f} mW, outputs {status}")
    if report.savings_ratio is not None:
        lines.append(f"{report.scenario} savings_ratio {report.savings_ratio:.3f}x "
                     f"(time {report.time_ratio:.3f}x, power {report.power_ratio:.3f}x)")
    return "\n".join(lines)


def _write(report: RunReport, path: Optional[str], fmt: Optional[str], sweep: bool = False) -> None:
    if path is None:
        return
    out = emit_report(report, path, fmt)
    from . import plots  # matplotlib only when figures are wanted

    if sweep:
        plots.plot_sweep(report, out.with_name(out.stem + "_sweep.png"))
    plots.plot_energy(report, out.with_name(out.stem + "_energy.png"))


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    trace = [] if args.trace else None
    report = run_scenario(sc, trace_sink=trace)
    if trace is not None:
        Path(args.trace).parent.mkdir(parents=True, exist_ok=True)
        Path(args.trace).write_text("".join(line + "\n" for line in trace))
    _write(report, args.report, args.format)
    print(_summary(report))
    if args.report is None and args.format:
        sys.stdout.write(to_csv(report) if args.format == "csv" else to_json(report))
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_compare(args) -> int:
    rows = compare(load_report(args.a), load_report(args.b))
    sys.stdout.write(format_table(rows))
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    volts = args.vdd or sc.sweep_vdd
    if not volts:
        raise ConfigError("sweep.vdd", "no voltages given (use --vdd or a [sweep] section)")
    model = PowerModel()
    points = [with_vdd(sc, v) for v in volts]
    for p in points:  # every point is checked before any simulation starts
        validate(p, model)
    merged = RunReport(sc.name, sc.mode)
    for p in points:
        merged.runs.extend(run_scenario(p, model).runs)
    _write(merged, args.report, args.format, sweep=True)
    print(_summary(merged))
    return EXIT_OK if merged.ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="efpgasoc", description="MCU + eFPGA SoC simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario")
    r.add_argument("--report")
    r.add_argument("--trace")
    r.add_argument("--format", choices=("csv", "json"))
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", help="ratio table of two reports")
    c.add_argument("a")
    c.add_argument("b")
    c.set_defaults(func=cmd_compare)
    s = sub.add_parser("sweep", help="rerun a scenario across supply voltages")
    s.add_argument("scenario")
    s.add_argument("--vdd", type=vdd_range)
    s.add_argument("--report")
    s.add_argument("--format", choices=("csv", "json"))
    s.set_defaults(func=cmd_sweep)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except (SimulationTimeout, OSError) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
