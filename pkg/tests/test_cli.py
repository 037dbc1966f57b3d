import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from efpgasoc.cli import main, vdd_range
from efpgasoc.efpga import BitstreamImage, ResourceUsage
from efpgasoc.report import (RunReport, RunResult, compare, emit_report, format_table, from_csv,
                             from_json, load_report, to_csv, to_json)
from efpgasoc.scenario import ConfigError, SCENARIO_DIR, load_scenario, parse_scenario

MINIMAL = (SCENARIO_DIR / "minimal.cfg").read_text()


def scenario_file(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_minimal_writes_report_and_figure(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["run", "minimal", "--report", str(out)]) == 0
    rep = load_report(out)
    assert rep.runs[0].outputs_ok
    assert (tmp_path / "r_energy.png").stat().st_size > 0
    assert "minimal baseline" in capsys.readouterr().out


def test_run_csv_to_stdout(capsys):
    assert main(["run", "minimal", "--format", "csv"]) == 0
    text = capsys.readouterr().out
    assert "variant," in text


def test_trace_file(tmp_path):
    tr = tmp_path / "t.log"
    assert main(["run", "minimal", "--trace", str(tr)]) == 0
    assert tr.read_text().startswith("baseline,")


@pytest.mark.parametrize("edit,key", [
    (("vdd = 0.8", "vdd = high"), "operating_point.vdd"),
    (("mode = baseline", "mode = sideways"), "scenario.mode"),
    (("workload = minimal", "workload = nosuch"), "scenario.workload"),
    (("f_efpga = 100", "f_efpga = 100\nvolume = 11"), "operating_point.volume"),
])
def test_config_errors_exit_2(tmp_path, capsys, edit, key):
    path = scenario_file(tmp_path, MINIMAL.replace(*edit))
    with pytest.raises(ConfigError) as e:
        load_scenario(path)
    assert e.value.key == key
    assert main(["run", path]) == 2
    assert key in capsys.readouterr().err


def test_unknown_workload_param_names_key():
    text = (SCENARIO_DIR / "crc_both.cfg").read_text() + "\nwidth = 3\n"
    with pytest.raises(ConfigError) as e:
        parse_scenario(text)
    assert e.value.key == "workload.width"


def test_missing_file_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "absent.cfg")]) == 2


def test_invariant_violation_exit_3(tmp_path, capsys):
    path = scenario_file(tmp_path, MINIMAL.replace("f_mcu = 600", "f_mcu = 700"))
    assert main(["run", path]) == 3
    assert "fmax" in capsys.readouterr().err


def test_sweep_validates_every_point_first(tmp_path):
    out = tmp_path / "sw.json"
    assert main(["sweep", "minimal", "--vdd", "0.8,0.3", "--report", str(out)]) == 3
    assert not out.exists()


def test_sweep_writes_report_and_figures(tmp_path):
    out = tmp_path / "sw.csv"
    path = scenario_file(tmp_path, MINIMAL.replace("f_mcu = 600", "f_mcu = fmax")
                         .replace("f_efpga = 100", "f_efpga = fmax"))
    assert main(["sweep", path, "--vdd", "0.7:0.8:0.05", "--report", str(out)]) == 0
    rep = load_report(out)
    assert [r.vdd_V for r in rep.runs] == [0.7, 0.75, 0.8]
    assert (tmp_path / "sw_sweep.png").exists() and (tmp_path / "sw_energy.png").exists()


def test_sweep_without_voltages_is_config_error():
    assert main(["sweep", "minimal"]) == 2


def test_vdd_range():
    assert vdd_range("0.5:0.6:0.05") == [0.5, 0.55, 0.6]
    assert vdd_range("0.5, 0.8") == [0.5, 0.8]


def bitstream_scenario(tmp_path, footprint, payload=None):
    bs = BitstreamImage.synthesize("crc", footprint)
    if payload is not None:
        bs = BitstreamImage("crc", payload, footprint)
    bs.write(tmp_path / "crc.bit")
    text = (SCENARIO_DIR / "crc_both.cfg").read_text().replace(
        "[scenario]", "[scenario]\nbitstream = crc.bit")
    return scenario_file(tmp_path, text)


def test_overflowing_bitstream_rejected_before_run(tmp_path, capsys):
    path = bitstream_scenario(tmp_path, ResourceUsage(slc=20, lut=47, ff=5000, uses_dma=True))
    assert main(["run", path, "--report", str(tmp_path / "r.json")]) == 2
    err = capsys.readouterr().err
    assert "scenario.bitstream" in err and "ff" in err
    assert not (tmp_path / "r.json").exists()


def test_short_bitstream_rejected_before_run(tmp_path):
    path = bitstream_scenario(tmp_path, ResourceUsage(slc=20, lut=47, ff=20, uses_dma=True),
                              payload=bytes(1000))
    assert main(["run", path]) == 2


# -- report round trips -------------------------------------------------------------

def sample_report():
    def res(variant, e, t):
        return RunResult(
            variant=variant, program="p", design_id="", vdd_V=0.8, f_mcu_MHz=600.0,
            f_peri_MHz=100.0, f_efpga_MHz=125.0, fbb_mcu_V=0.0, rbb_efpga_V=0.0, edges_mcu=10,
            edges_peri=2, edges_efpga=3, cpu_cycles=9, cpu_instret=8, completion_time_us=t,
            energy_mcu_uJ=e, energy_efpga_uJ=0.0, energy_total_uJ=e, avg_power_mW=e / t,
            density_mcu_uW_per_MHz=1.5, density_efpga_uW_per_MHz=0.0,
            density_total_uW_per_MHz=1.5, efpga_power_share=0.0, efpga_activity=1.0,
            bw_cpu_MBps=1.0, bw_udma_MBps=0.0, bw_efpga_MBps=0.0, fcb_apb_writes=0,
            fbb_extrapolated=False, outputs_ok=True, check_detail="", trace_hash="ab")
    return RunReport("demo", "both", [res("baseline", 2.0, 4.0), res("accelerated", 0.5, 2.0)],
                     4.0, 2.0, 2.0)


def test_json_round_trip():
    rep = sample_report()
    assert from_json(to_json(rep)) == rep


def test_csv_round_trip():
    rep = sample_report()
    back = from_csv(to_csv(rep), "demo", "both")
    assert back.runs == rep.runs and back.savings_ratio == 4.0


def test_header_only_csv():
    empty = RunReport("e", "baseline")
    text = to_csv(empty)
    assert text.count("\n") == 1
    assert from_csv(text).runs == []


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_round_trip_property(e, t):
    rep = sample_report()
    rep.runs[0].energy_total_uJ, rep.runs[0].completion_time_us = e, t
    assert from_json(to_json(rep)) == rep
    assert from_csv(to_csv(rep), "demo", "both").runs == rep.runs


def test_compare_identical_is_one(tmp_path, capsys):
    a = emit_report(sample_report(), tmp_path / "a.json")
    rows = compare(load_report(a), load_report(a))
    assert all(r[k] == 1.0 for r in rows for k in ("energy_ratio", "time_ratio", "power_ratio"))
    assert main(["compare", str(a), str(a)]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "baseline,1.0000,1.0000,1.0000"


def test_compare_table_format():
    rows = compare(sample_report(), sample_report())
    assert format_table(rows).splitlines()[0] == "variant,E_a/E_b,T_a/T_b,P_a/P_b"


def test_bad_report_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report(sample_report(), tmp_path / "r.xml")


def test_json_is_sorted_and_stable():
    text = to_json(sample_report())
    assert json.loads(text)["savings_ratio"] == 4.0
    assert text == to_json(from_json(text))
    assert not math.isnan(json.loads(text)["time_ratio"])
