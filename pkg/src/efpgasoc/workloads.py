"""Use-case workloads: inputs, memory layout, attached devices and result checks.

A workload prepares a freshly built :class:`~efpgasoc.soc.Soc` for one
variant (``baseline`` or ``accelerated``) and afterwards checks what the
program left in memory against an independent oracle.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .designs import bnn, crc, ff2soc, gpio_stream, haar
from .designs.gpio_stream import AcceleratorStub, StubRow
from .memsys import DEFAULT_MAP
from .udma import SpiDevice

ARGS = DEFAULT_MAP.private1_base
L2 = DEFAULT_MAP.interleaved_base


@dataclass
class CheckResult:
    ok: bool
    detail: str = ""
    values: dict = field(default_factory=dict)


class Workload:
    """Base class. ``params`` holds the typed defaults a scenario may override."""

    name = "abstract"
    design_id: Optional[str] = None
    params: dict[str, Any] = {}

    def __init__(self, seed: int = 1, **overrides):
        unknown = set(overrides) - set(self.params)
        if unknown:
            raise KeyError(f"unknown workload parameter(s): {', '.join(sorted(unknown))}")
        self.seed = seed
        self.p = {k: type(v)(overrides.get(k, v)) for k, v in self.params.items()}
        self.rng = random.Random(seed)
        self.generate()

    def generate(self) -> None:
        pass

    def args(self, variant: str) -> list[int]:
        return []

    def prepare(self, soc, variant: str) -> None:
        soc.mem.write_words(ARGS, self.args(variant))

    def check(self, soc, variant: str) -> CheckResult:
        return CheckResult(True)


WORKLOADS: dict[str, type[Workload]] = {}


def register(cls):
    WORKLOADS[cls.name] = cls
    return cls


def make_workload(name: str, seed: int = 1, **params) -> Workload:
    try:
        cls = WORKLOADS[name]
    except KeyError:
        raise KeyError(f"unknown workload {name!r}; known: {', '.join(sorted(WORKLOADS))}") from None
    return cls(seed, **params)


def _compare_words(soc, base: int, expected: list[int]) -> Optional[str]:
    got = soc.mem.read_words(base, len(expected))
    for i, (g, e) in enumerate(zip(got, expected)):
        if g != e:
            return f"word {i} at {base + 4 * i:#x}: got {g:#010x}, expected {e:#010x}"
    return None


@register
class Minimal(Workload):
    name = "minimal"


@register
class Bnn(Workload):
    name = "bnn"
    design_id = "bnn"
    params = {"rows": 32, "cols": 32, "threshold": 144}
    IN, FILT, OUT = L2, L2 + 0x4000, L2 + 0x6000

    def generate(self):
        r = self.rng
        self.job = bnn.BnnJob(self.IN, self.FILT, self.OUT, self.p["rows"], self.p["cols"],
                              self.p["threshold"])
        self.inputs = [r.getrandbits(32) for _ in range(self.job.rows * self.job.cols)]
        self.filters = [r.getrandbits(32) for _ in range(bnn.N_FILTERS * 9)]
        self.expected = bnn.bnn_reference(self.inputs, self.filters, self.job)

    def args(self, variant):
        j = self.job
        return [j.in_ptr, j.filt_ptr, j.out_ptr, j.rows, j.cols, j.threshold & 0xFFFFFFFF]

    def prepare(self, soc, variant):
        super().prepare(soc, variant)
        soc.mem.write_words(self.IN, self.inputs)
        soc.mem.write_words(self.FILT, self.filters)

    def check(self, soc, variant):
        got = soc.mem.read_bytes(self.OUT, len(self.expected))
        bad = sum(a != b for a, b in zip(got, self.expected))
        return CheckResult(bad == 0, f"{bad} of {len(got)} output bytes differ" if bad else "",
                           {"pixels": len(got)})


@register
class Crc(Workload):
    name = "crc"
    design_id = "crc"
    params = {"length": 1024}
    DATA, RESULT = L2, L2 + 0x10000

    def generate(self):
        self.data = bytes(self.rng.getrandbits(8) for _ in range(self.p["length"]))
        self.expected = crc.crc32(self.data, table=False)

    def args(self, variant):
        return [self.DATA, len(self.data), self.RESULT]

    def prepare(self, soc, variant):
        super().prepare(soc, variant)
        soc.mem.write_bytes(self.DATA, self.data)

    def check(self, soc, variant):
        got = soc.mem.read_word(self.RESULT)
        ok = got == self.expected
        return CheckResult(ok, "" if ok else f"crc {got:#010x}, expected {self.expected:#010x}",
                           {"crc": got})


def stub_response(vector: list[int]) -> int:
    """Deterministic stand-in for the off-chip result of one input vector."""
    acc = 0x9E3779B9
    for w in vector:
        acc = ((acc ^ w) * 0x01000193) & 0xFFFFFFFF
    return acc


@register
class CustomIo(Workload):
    name = "custom_io"
    design_id = "gpio_stream"
    params = {"weights": 256, "vectors": 16, "vec_words": 64}
    DATA, RESULTS = L2, L2 + 0x20000

    def generate(self):
        r = self.rng
        nw, nv, vw = self.p["weights"], self.p["vectors"], self.p["vec_words"]
        self.weights = [r.getrandbits(32) for _ in range(nw)]
        self.vectors = [[r.getrandbits(32) for _ in range(vw)] for _ in range(nv)]
        self.rows = ([StubRow(0, tuple(self.weights))] if nw else []) + [
            StubRow(1, tuple(v), stub_response(v)) for v in self.vectors]
        self.expected = [stub_response(v) for v in self.vectors]

    def args(self, variant):
        return [self.DATA, self.p["weights"], self.p["vectors"], self.p["vec_words"], self.RESULTS]

    def prepare(self, soc, variant):
        super().prepare(soc, variant)
        soc.mem.write_words(self.DATA, self.weights + [w for v in self.vectors for w in v])
        self.stub = AcceleratorStub(self.rows)
        soc.attach_pads(self.stub)

    def check(self, soc, variant):
        msg = _compare_words(soc, self.RESULTS, self.expected)
        if msg is None and self.stub.mismatches:
            msg = f"device saw {self.stub.mismatches} malformed rows"
        if msg is None and not self.stub.done:
            msg = f"device consumed {self.stub.row} of {len(self.rows)} rows"
        return CheckResult(msg is None, msg or "",
                           {"pin_words": self.stub.words, "responses": len(self.expected)})


@register
class Hdwt(Workload):
    """SPI acquisition with Haar or LBP features (``mode``: raw, hdwt, lbp)."""

    name = "hdwt"
    design_id = "hdwt_spi"
    params = {"samples": 256, "mode": "hdwt", "width": 16, "divider": 8}
    RAW, OUT_A, OUT_D = L2, L2 + 0x4000, L2 + 0x8000

    def generate(self):
        self.samples = [self.rng.randrange(-30000, 30000) & 0xFFFF for _ in range(self.p["samples"])]
        mode = haar.HdwtMode[self.p["mode"].upper()]
        self.cfg = haar.HdwtConfig(self.p["samples"], self.OUT_A, self.OUT_D, mode, self.p["width"])

    def args(self, variant):
        return [self.cfg.n_samples, self.OUT_A, self.OUT_D, self.RAW, int(self.cfg.mode),
                self.cfg.coeff_width, self.p["divider"]]

    def prepare(self, soc, variant):
        super().prepare(soc, variant)
        dev = SpiDevice(list(self.samples), divider=self.p["divider"])
        if variant == "baseline":
            soc.udma.attach_spi(dev)
        else:
            soc.attach_pads(dev)

    def check(self, soc, variant):
        cfg = self.cfg
        if variant == "baseline":
            if cfg.coeff_width != 16 or cfg.mode is haar.HdwtMode.RAW:
                return CheckResult(False, "software baseline covers 16-bit hdwt and lbp only")
        for base, words in haar.expected_outputs(cfg, self.samples).items():
            msg = _compare_words(soc, base, words)
            if msg:
                return CheckResult(False, msg)
        return CheckResult(True, values={"samples": cfg.n_samples})


@register
class Ff2socLoad(Workload):
    name = "ff2soc"
    design_id = "ff2soc"
    params = {"words": 256}
    BUF = L2

    def generate(self):
        self.words = [self.rng.getrandbits(32) for _ in range(self.p["words"])]

    def args(self, variant):
        return [self.BUF, len(self.words)]

    def prepare(self, soc, variant):
        super().prepare(soc, variant)
        soc.mem.write_words(self.BUF, self.words)

    def check(self, soc, variant):
        st = soc.efpga.design.state
        seq = self.words * st.passes + self.words[:st.received]
        expect = ff2soc.accumulate_reference(seq)
        ok = expect == st.acc
        return CheckResult(ok, "" if ok else "accumulator signature mismatch",
                           {"passes": st.passes})


@register
class Ff2ffLoad(Workload):
    name = "ff2ff"
    design_id = "ff2ff"

    def check(self, soc, variant):
        edges = soc.efpga.edges_run
        toggles = soc.efpga.design.state.toggles
        ok = toggles == ff2soc.ff2ff_observe(edges)
        return CheckResult(ok, "" if ok else "divider toggles disagree with the counter",
                           {"gpio_toggles": toggles, "fabric_edges": edges})
