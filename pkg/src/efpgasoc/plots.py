"""Figures written next to reports (headless matplotlib)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .report import RunReport  # noqa: E402

_META = {"Software": None}


def plot_energy(report: RunReport, path) -> Path:
    """Stacked per-domain energy for each run in the report."""
    path = Path(path)
    labels = [r.variant for r in report.runs]
    mcu = [r.energy_mcu_uJ for r in report.runs]
    fab = [r.energy_efpga_uJ for r in report.runs]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(labels, mcu, label="MCU")
    ax.bar(labels, fab, bottom=mcu, label="eFPGA")
    ax.set_ylabel("energy [uJ]")
    title = report.scenario
    if report.savings_ratio is not None:
        title += f"  (savings {report.savings_ratio:.2f}x)"
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_sweep(report: RunReport, path) -> Path:
    """Average power and total density against supply voltage."""
    path = Path(path)
    runs = sorted(report.runs, key=lambda r: r.vdd_V)
    v = [r.vdd_V for r in runs]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    a1.plot(v, [r.avg_power_mW for r in runs], "o-", label="total")
    a1.plot(v, [r.energy_efpga_uJ / r.completion_time_us * 1e3 if r.completion_time_us else 0
                for r in runs], "s--", label="eFPGA")
    a1.set_xlabel("VDD [V]")
    a1.set_ylabel("power [mW]")
    a1.set_yscale("log")
    a1.legend()
    a2.plot(v, [r.density_total_uW_per_MHz for r in runs], "o-")
    a2.set_xlabel("VDD [V]")
    a2.set_ylabel("density [uW/MHz]")
    fig.suptitle(report.scenario)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path
