import dataclasses
import random
import zlib

import pytest
from hypothesis import given, settings, strategies as st

from efpgasoc.designs import CATALOG, check_catalog
from efpgasoc.designs.bnn import N_FILTERS, BnnJob, bnn_reference, bnn_window
from efpgasoc.designs.crc import crc32, crc32_bitwise, crc32_update
from efpgasoc.designs.ff2soc import accumulate_reference, ff2ff_observe
from efpgasoc.designs.haar import (haar_inverse, haar_pair, hdwt, lbp_pack, lbp_update, lbp_words,
                                   pack_lanes)
from efpgasoc.power import PowerModel
from efpgasoc.scenario import load_scenario, run_variant, validate


def run(name, variant, seed=None, **params):
    sc = load_scenario(name)
    sc = dataclasses.replace(sc, workload_params={**sc.workload_params, **params},
                             seed=sc.seed if seed is None else seed)
    model = PowerModel()
    ops = dict(zip([v.name for v in sc.variants], validate(sc, model)))
    v = next(v for v in sc.variants if v.name == variant)
    return run_variant(sc, v, ops[variant], model)


# -- Haar / LBP ----------------------------------------------------------------

def test_haar_examples():
    assert haar_pair(5, 5) == (5, 0)
    assert haar_pair(7, 3) == (5, 4)
    assert haar_inverse(5, 4) == (7, 3)


def test_haar_reconstruction_1e6_pairs():
    rng = random.Random(0xA5)
    lo, hi = -(1 << 15), (1 << 15) - 1
    for _ in range(1_000_000):
        x0, x1 = rng.randint(lo, hi), rng.randint(lo, hi)
        if haar_inverse(*haar_pair(x0, x1)) != (x0, x1):
            pytest.fail(f"pair {(x0, x1)} not reconstructed")


def test_hdwt_odd_length_rejected():
    with pytest.raises(ValueError):
        hdwt([1, 2, 3])


def test_lbp_examples():
    assert lbp_update(4, 4, 0) == 0
    reg, codes = 0, []
    for prev, s in zip([1, 2, 3], [2, 3, 4]):
        reg = lbp_update(prev, s, reg)
        codes.append(reg)
    assert codes == [0b0001, 0b0011, 0b0111]
    assert lbp_words(list(range(20, 0, -1)))[-1] == 0


def test_lbp_pack_order():
    assert lbp_pack([1, 2, 3, 4]) == 0x1234
    with pytest.raises(ValueError):
        lbp_pack([1])


def test_pack_lanes_negative():
    assert pack_lanes([-1, 1], 16) == [0x0001FFFF]
    assert pack_lanes([-2, 3, 0, -128], 8) == [0x800003FE]


# -- BNN -----------------------------------------------------------------------

def pm1_window(inputs, filt, threshold):
    """Oracle in the +/-1 domain: dot product of sign vectors against 2T - 288."""
    dot = 0
    for a, b in zip(inputs, filt):
        for k in range(32):
            dot += 1 if ((a >> k) & 1) == ((b >> k) & 1) else -1
    return int(dot >= 2 * threshold - 288)


def test_bnn_window_extremes():
    rng = random.Random(1)
    f = [rng.getrandbits(32) for _ in range(9)]
    assert bnn_window(f, f, 288) == 1
    assert bnn_window([~x & 0xFFFFFFFF for x in f], f, 1) == 0


def test_bnn_window_vs_pm1_oracle():
    rng = random.Random(2)
    for _ in range(10_000):
        a = [rng.getrandbits(32) for _ in range(9)]
        # bias the filter toward the input so both outcomes occur
        b = [x ^ (rng.getrandbits(32) & rng.getrandbits(32)) for x in a]
        t = rng.randint(0, 289)
        assert bnn_window(a, b, t) == pm1_window(a, b, t)


def test_bnn_zero_filters():
    rng = random.Random(3)
    job = BnnJob(0, 0, 0, 3, 3, 145)
    for _ in range(200):
        density = rng.random()
        inp = [sum(1 << k for k in range(32) if rng.random() < density) for _ in range(9)]
        pc = sum(bin(x).count("1") for x in inp)
        out = bnn_reference(inp, [0] * (9 * N_FILTERS), job)
        assert out == bytes([0xFF if 288 - pc >= 145 else 0])


def test_bnn_output_shape():
    job = BnnJob(0, 0, 0, 3, 4, 100)
    out = bnn_reference([0] * 12, [0] * 72, job)
    assert len(out) == 2
    with pytest.raises(ValueError):
        BnnJob(0, 0, 0, 2, 8, 1)


@settings(max_examples=6, deadline=None)
@given(st.integers(3, 10), st.integers(3, 10), st.integers(100, 190), st.integers(0, 2**31))
def test_bnn_accelerator_matches_software(rows, cols, threshold, seed):
    params = dict(rows=rows, cols=cols, threshold=threshold)
    sw, soc_sw = run("bnn_both", "baseline", seed, **params)
    hw, soc_hw = run("bnn_both", "accelerated", seed, **params)
    assert sw.outputs_ok and hw.outputs_ok
    n = (rows - 2) * (cols - 2)
    out = 0x1C010000 + 0x6000
    assert soc_sw.mem.read_bytes(out, n) == soc_hw.mem.read_bytes(out, n)


def test_bnn_accelerator_32x32_bit_exact():
    res, soc = run("bnn_both", "accelerated")
    assert res.outputs_ok, res.check_detail


# -- CRC -----------------------------------------------------------------------

def test_crc_check_value():
    assert crc32(b"") == 0
    assert crc32(b"123456789") == 0xCBF43926
    assert crc32(b"123456789", table=False) == 0xCBF43926


def test_crc_table_vs_bitwise_1e4():
    rng = random.Random(4)
    for _ in range(10_000):
        msg = bytes(rng.getrandbits(8) for _ in range(rng.randrange(0, 64)))
        assert crc32(msg) == crc32(msg, table=False) == zlib.crc32(msg)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 255))
def test_crc_step_equivalence(state, byte):
    assert crc32_update(state, byte) == crc32_bitwise(state, byte)


def test_crc_accelerator_in_soc():
    res, _ = run("crc_both", "accelerated", length=97)
    assert res.outputs_ok, res.check_detail


# -- characterisation designs ---------------------------------------------------

def test_accumulate_examples():
    assert accumulate_reference([0] * 16) == [0] * 8
    assert accumulate_reference(list(range(1, 9))) == list(range(1, 9))
    assert accumulate_reference(list(range(1, 9)), passes=2) == [2 * k for k in range(1, 9)]


def test_ff2soc_in_soc():
    res, soc = run("ff2soc_best", "accelerated")
    assert res.outputs_ok
    assert soc.efpga.design.state.passes >= 1


def test_ff2ff_divider():
    assert ff2ff_observe(512) == 2
    assert ff2ff_observe(100) == 0
    assert 475e6 / 512 == pytest.approx(927.7e3, rel=1e-4)


# -- custom I/O -------------------------------------------------------------------

def test_gpio_stream_no_work_no_traffic():
    res, soc = run("custom_io_both", "accelerated", weights=0, vectors=0)
    assert res.outputs_ok
    assert soc.efpga.design.state.events == 0
    assert res.bw_udma_MBps == 0.0


def test_gpio_stream_one_result():
    res, soc = run("custom_io_both", "accelerated", weights=0, vectors=1, vec_words=4)
    assert res.outputs_ok, res.check_detail
    assert soc.efpga.design.state.events == 1


def test_bitbang_needs_seven_cycles_per_pin_word():
    a, _ = run("custom_io_both", "baseline", weights=0, vectors=1, vec_words=64)
    b, _ = run("custom_io_both", "baseline", weights=0, vectors=1, vec_words=128)
    per_word = (b.cpu_cycles - a.cpu_cycles) / 64
    assert per_word == pytest.approx(7, abs=0.05)
    # the shipped baseline clock is what bit-banging needs to match the fabric's pin rate
    sc = load_scenario("custom_io_both")
    ops = {v.name: v.op for v in sc.variants}
    assert ops["baseline"]["f_mcu"] == round(per_word) * ops["accelerated"]["f_efpga"]


# -- smart SPI -----------------------------------------------------------------

@pytest.mark.parametrize("mode", ["hdwt", "lbp"])
def test_features_add_no_acquisition_latency(mode):
    raw, soc_raw = run("hdwt_both", "accelerated", mode="raw")
    feat, soc_feat = run("hdwt_both", "accelerated", mode=mode)
    assert raw.outputs_ok and feat.outputs_ok
    assert soc_raw.efpga.design.state.acq_done_edge == soc_feat.efpga.design.state.acq_done_edge
    assert soc_raw.efpga.design.state.acq_done_edge > 0


def test_hdwt_8bit_saturates():
    res, _ = run("hdwt_both", "accelerated", width=8)
    assert res.outputs_ok, res.check_detail


def test_hdwt_software_matches_peripheral():
    res, _ = run("hdwt_both", "baseline", samples=64)
    assert res.outputs_ok, res.check_detail


# -- catalog -------------------------------------------------------------------

def test_catalog_matches_registered_designs():
    assert check_catalog() == []


@pytest.mark.parametrize("did,gpio,ff,lut", [("gpio_stream", 36, 205, 289), ("bnn", 0, 854, 1229),
                                             ("crc", 0, 20, 47)])
def test_catalog_footprints(did, gpio, ff, lut):
    fp = CATALOG[did].footprint
    assert (fp.gpio, fp.ff, fp.lut) == (gpio, ff, lut)


def test_interface_use():
    crc_fp, bnn_fp = CATALOG["crc"].footprint, CATALOG["bnn"].footprint
    assert crc_fp.uses_dma and not crc_fp.uses_apb and crc_fp.mem_ports_used == 0
    assert bnn_fp.mem_ports_used == 4 and bnn_fp.uses_apb and not bnn_fp.uses_dma
