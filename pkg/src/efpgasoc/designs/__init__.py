"""Behavioural fabric designs and the catalog that describes them."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..efpga import DESIGN_REGISTRY, ResourceUsage
from . import bnn, crc, ff2soc, gpio_stream, haar  # noqa: F401  (registration)

CATALOG_FILE = Path(__file__).parent / "catalog.csv"


@dataclass(frozen=True)
class DesignCatalogEntry:
    design_id: str
    footprint: ResourceUsage
    paired_baseline: Optional[str]
    accelerated: Optional[str]
    system_mw: Optional[float]
    at_mhz: Optional[float]
    fmax_curve: str


def load_catalog(path=CATALOG_FILE) -> dict[str, DesignCatalogEntry]:
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    out = {}
    for r in csv.DictReader(lines):
        fp = ResourceUsage(int(r["slc"]), int(r["lut"]), int(r["ff"]), int(r["gpio"]),
                           int(r["mem_ports"]), r["uses_dma"] == "1", r["uses_apb"] == "1")
        opt = lambda k: float(r[k]) if r[k] else None  # noqa: E731
        out[r["design_id"]] = DesignCatalogEntry(
            r["design_id"], fp, r["baseline"] or None, r["accelerated"] or None,
            opt("system_mw"), opt("at_mhz"), r["fmax_curve"])
    return out


CATALOG = load_catalog()


def check_catalog() -> list[str]:
    """Mismatches between the manifest and the registered design classes."""
    problems = []
    for did, entry in CATALOG.items():
        cls = DESIGN_REGISTRY.get(did)
        if cls is None:
            problems.append(f"{did}: not registered")
        elif cls.footprint != entry.footprint:
            problems.append(f"{did}: footprint {cls.footprint} != catalog {entry.footprint}")
    return problems


def design_activity(entry: DesignCatalogEntry, model, vdd: float = 0.8,
                    f_mcu: float = 600.0) -> float:
    """Switching activity that makes the modelled system power match ``system_mw``.

    The catalog figure is taken with the fabric running at ``at_mhz`` and
    the core parked in WFI at ``f_mcu``.
    """
    if entry.system_mw is None or not entry.footprint.slc:
        return 1.0
    rest = entry.system_mw * 1000 - model.mcu_idle_power(vdd, 0.0, f_mcu) - model.efpga_leak(vdd)
    return rest / (model.efpga_k(vdd) * entry.at_mhz * entry.footprint.slc)
