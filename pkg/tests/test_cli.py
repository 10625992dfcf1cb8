import copy
import json
from importlib import resources

import numpy as np
import pytest

from agcsim.cli import ScenarioError, bundled_scenarios, main, parse_scenario, parse_scenario_text
from agcsim.sim import TimeSeries


@pytest.fixture
def kundur_doc():
    text = (resources.files("agcsim") / "scenarios" / "kundur_two_area.json").read_text()
    return json.loads(text)


def _write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return str(p)


def test_bundled_files_present():
    names = bundled_scenarios()
    for n in ("kundur_two_area", "kundur_two_area_overbiased", "kundur_two_area_underbiased",
              "kundur_two_area_matched", "four_area_random_template"):
        assert n in names
        parse_scenario(n)


def test_bundled_kundur_parameters():
    p = parse_scenario("kundur_two_area")
    assert np.allclose(p.model.beta_vec, [40, 40])
    assert np.allclose(p.model.b_vec, [60, 40])
    assert np.allclose(p.model.tau_vec, [60, 60])
    assert [d.dP for d in p.scenario.disturbances] == pytest.approx([50 / 900, 50 / 900])


def test_zero_bias_rejected(kundur_doc, tmp_path):
    kundur_doc["agc"]["b"][0] = 0
    with pytest.raises(ScenarioError, match="frequency_bias must be positive") as exc:
        parse_scenario(_write(tmp_path, kundur_doc))
    assert exc.value.field == "agc.b[0]"
    assert main(["simulate", "--scenario", _write(tmp_path, kundur_doc), "--out", str(tmp_path)]) == 1


def test_participation_sum_rejected_with_path(kundur_doc, tmp_path):
    kundur_doc["agc"]["participation"][1] = [0.6, 0.3]
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(_write(tmp_path, kundur_doc))
    assert exc.value.field == "agc.participation[1]"
    assert "0.9" in str(exc.value)


def test_syntax_error_located():
    with pytest.raises(ScenarioError) as exc:
        parse_scenario_text('{\n  "system": {,\n}', source="bad.json")
    assert "bad.json:2:" in str(exc.value)


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["system"]["areas"][0]["generators"][1].__setitem__("droop", -1),
     "system.areas[0].generators[1].droop"),
    (lambda d: d["system"]["ties"].clear(), "system.ties"),
    (lambda d: d["scenario"]["steps"][0].__setitem__("area", 3), "scenario.steps[0].area"),
    (lambda d: d["agc"].__setitem__("tau", [60.0]), "agc.tau"),
    (lambda d: d["agc"].__setitem__("variant", "fancy"), "agc.variant"),
    (lambda d: d["system"]["areas"][1].pop("generators"), "system.areas[1].generators"),
    (lambda d: d["agc"].__setitem__("tau", [60.0, 0.5]), "agc.tau[1]"),
])
def test_semantic_errors_located(kundur_doc, mutate, field):
    mutate(kundur_doc)
    with pytest.raises(ScenarioError) as exc:
        parse_scenario_text(json.dumps(kundur_doc))
    assert exc.value.field == field


def test_simulate_and_round_trip(tmp_path):
    assert main(["simulate", "--scenario", "kundur_two_area", "--out", str(tmp_path)]) == 0
    ts = TimeSeries.from_csv(tmp_path / "timeseries_full.csv")
    assert ts.time[-1] == pytest.approx(600.0)
    text = (tmp_path / "timeseries_full.csv").read_text()
    header = text.splitlines()[0].split(",")
    assert header[0] == "time_s" and "area1.ace" in header and "gen2.1.u" in header
    # re-emit and compare bytes: 17 significant digits survive the round trip
    ts.to_csv(tmp_path / "again.csv")
    assert (tmp_path / "again.csv").read_text() == text


def test_zero_disturbance_constant_csv(kundur_doc, tmp_path):
    kundur_doc["scenario"]["steps"] = []
    kundur_doc["scenario"]["horizon"] = 30.0
    path = _write(tmp_path, kundur_doc)
    for verb, fname in (("simulate", "timeseries_full.csv"), ("reduce", "timeseries_reduced.csv")):
        assert main([verb, "--scenario", path, "--out", str(tmp_path)]) == 0
        ts = TimeSeries.from_csv(tmp_path / fname)
        for v in ts.channels.values():
            assert np.all(v == v[0])


def test_infeasible_exit_without_csv(kundur_doc, tmp_path):
    kundur_doc["scenario"]["steps"][1]["dP_MW"] = 600.0
    path = _write(tmp_path, kundur_doc)
    out = tmp_path / "out"
    for verb in ("simulate", "reduce", "compare"):
        assert main([verb, "--scenario", path, "--out", str(out)]) == 2
    assert not list(out.glob("*.csv")) and not (out / "compare.json").exists()


def test_numerical_failure_exit(kundur_doc, tmp_path):
    kundur_doc["system"]["ties"][0]["p_max"] = 0.1
    kundur_doc["scenario"]["steps"] = [{"time": 1.0, "area": 1, "dP": 0.45}]
    path = _write(tmp_path, kundur_doc)
    assert main(["analyze", "steady-state", "--scenario", path, "--out", str(tmp_path)]) == 3


def test_usage_errors_exit_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == 1
    assert main(["simulate", "--scenario", str(tmp_path / "missing.json")]) == 1
    assert main(["analyze", "bogus", "--scenario", "kundur_two_area", "--out", str(tmp_path)]) == 1
    assert main(["analyze", "bode", "--channels", "5", "--scenario", "kundur_two_area",
                 "--out", str(tmp_path)]) == 1


def test_compare_report(tmp_path):
    assert main(["compare", "--scenario", "kundur_two_area", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "compare.json").read_text())
    assert rep["pass"] is True
    assert rep["checks"]["eta"]["worst_rms"] <= 0.05 * 50 / 900
    assert rep["exclusion_s"] == 30.0
    assert (tmp_path / "timeseries_reduced.csv").exists()


def test_analyze_reports(tmp_path):
    assert main(["analyze", "eig", "matrices", "peak", "bode", "steady-state",
                 "--scenario", "kundur_two_area", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "analysis.json").read_text())
    assert sorted(rep["eigenvalues"]) == pytest.approx([-1.25 / 60, -1 / 60], abs=1e-15)
    assert rep["lambda_N"] == pytest.approx(-1.25 / 60) and rep["dominant"] == "cluster"
    assert np.allclose(rep["B_ace"], [[1.25, 0.25], [0, 1]])
    assert rep["bode"]["S11"]["sup"] == pytest.approx(1.25, abs=1e-3)
    peak = np.loadtxt(tmp_path / "peak.csv", delimiter=",", skiprows=1)
    assert peak.shape == (21, 3)
    assert peak[0, 0] == -0.5 and peak[-1, 0] == 0.5
    from agcsim.analysis import peak_eta
    assert peak[0, 1] == peak_eta([-0.5]) and peak[-1, 1] == peak_eta([0.5])
    ss = rep["steady_state"]
    assert np.allclose(ss["df_newton"], ss["df_closed_form"], atol=1e-10)


def test_analyze_matched_identity(tmp_path):
    assert main(["analyze", "matrices", "--scenario", "kundur_two_area_matched",
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "analysis.json").read_text())
    assert np.array_equal(rep["B_ace"], np.eye(2))


def test_variant_flag_and_channel_selection(kundur_doc, tmp_path):
    kundur_doc["output"]["channels"] = ["area1.eta", "area2.eta"]
    kundur_doc["scenario"]["horizon"] = 100.0
    kundur_doc["scenario"]["steps"] = kundur_doc["scenario"]["steps"][:1]
    path = _write(tmp_path, kundur_doc)
    assert main(["reduce", "--scenario", path, "--variant", "textbook", "--out", str(tmp_path)]) == 0
    header = (tmp_path / "timeseries_reduced.csv").read_text().splitlines()[0]
    assert header == "time_s,area1.eta,area2.eta"
    bad = copy.deepcopy(kundur_doc)
    bad["output"]["channels"] = ["area9.eta"]
    assert main(["reduce", "--scenario", _write(tmp_path, bad, "b.json"), "--out", str(tmp_path)]) == 1


def test_experiment_paper(tmp_path):
    assert main(["experiment", "paper", "--tuning", "matched", "--out", str(tmp_path)]) == 0
    summ = json.loads((tmp_path / "summary.json").read_text())
    assert summ["matched"]["cross_peak_eta1_reduced"] == 0.0
    assert (tmp_path / "matched_full.csv").exists()


def test_experiment_sweep(tmp_path):
    assert main(["experiment", "sweep", "--count", "2", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "sweep.json").read_text())
    assert len(rep["runs"]) == 2 and rep["all_converged"]
