from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import numpy as np
import pytest

from ellipsoidal_attitude.cli import main
from ellipsoidal_attitude.dynamics import ZeroPotential
from ellipsoidal_attitude.errors import ScenarioError
from ellipsoidal_attitude.sim import (
    RECORD_COLUMNS,
    SUMMARY_KEYS,
    bundled_scenario_path,
    corrupt_measurements,
    load_scenario,
    read_records,
    run_estimation,
    scenario_from_dict,
    simulate_truth,
)
from ellipsoidal_attitude.so3 import exp_so3, log_so3

DOCS = Path(__file__).resolve().parents[1] / "docs"


def baseline_doc() -> dict:
    return json.loads(bundled_scenario_path("pendulum_baseline").read_text())


def with_changes(doc, path, value):
    doc = copy.deepcopy(doc)
    node = doc
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    return doc


def quiet_doc(count=3, eps=1e-20):
    doc = baseline_doc()
    doc["measurement_count"] = count
    doc["noise"]["S_rad2"] = (eps * np.eye(3)).tolist()
    doc["noise"]["T_rad2_s2"] = (eps * np.eye(3)).tolist()
    return doc


def test_fixture_loads():
    s = load_scenario(bundled_scenario_path("pendulum_baseline"))
    assert np.array_equal(s.inertia.J, np.diag([1.0, 2.8, 2.0]))
    assert s.inertia.h == 0.01 and s.l == 10 and s.measurement_count == 100
    assert s.dirs.m == 3 and s.noise_mode == "interior"
    assert load_scenario("contraction_demo").bound_decay == 1e-3


def test_bare_name_resolves_to_bundled_fixture():
    assert load_scenario("pendulum_baseline.json").name == "pendulum_baseline"


def test_non_spd_prior_names_field():
    P = np.eye(6).tolist()
    P[2][2] = -1.0
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(with_changes(baseline_doc(), ["estimate", "P0"], P))
    assert "P0" in str(info.value)


def test_truth_outside_prior_rejected():
    doc = with_changes(baseline_doc(), ["estimate", "omega0_rad_s"], [0.31, -0.2, 0.5])
    with pytest.raises(ScenarioError, match="P0"):
        scenario_from_dict(doc)


@pytest.mark.parametrize(
    "path,value",
    [
        (["h_seconds"], -0.01),
        (["J_kg_m2"], [[1.0, 0, 0], [0, 1.0, 0], [0, 0, 3.0]]),
        (["weights"], [1.0, 1.0]),
        (["noise", "mode"], "edge"),
        (["measurement_count"], 0),
        (["convergence", "c"], 1.5),
    ],
)
def test_invalid_fields_rejected(path, value):
    with pytest.raises(ScenarioError):
        scenario_from_dict(with_changes(baseline_doc(), path, value))


def test_parse_error_reports_line(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "name": "x",\n  "h_seconds": ,\n}\n')
    with pytest.raises(ScenarioError, match="line 3"):
        load_scenario(bad)


def test_simulate_truth_length_and_determinism():
    s = scenario_from_dict(quiet_doc(4))
    a, b = simulate_truth(s), simulate_truth(s)
    assert len(a) == 41
    assert all(np.array_equal(x.C, y.C) and np.array_equal(x.omega, y.omega) for x, y in zip(a, b))


def test_simulate_truth_constant_without_motion():
    doc = quiet_doc(2)
    doc["potential"] = {"type": "zero"}
    doc["truth"]["omega0_rad_s"] = [0.0, 0.0, 0.0]
    doc["estimate"]["omega0_rad_s"] = [0.0, 0.0, 0.0]
    s = scenario_from_dict(doc)
    assert isinstance(s.potential, ZeroPotential)
    traj = simulate_truth(s)
    assert all(np.array_equal(t.C, traj[0].C) for t in traj)


def test_corrupt_measurements_vanishing_noise():
    s = scenario_from_dict(quiet_doc(1))
    truth = simulate_truth(s)[10]
    bundle = corrupt_measurements(truth, s, 1)
    assert np.abs(bundle.B - truth.C.T @ s.dirs.E).max() <= 1e-9
    assert np.abs(bundle.omega - truth.omega).max() <= 1e-9


def test_corrupt_measurements_errors_inside_bounds():
    s = load_scenario("pendulum_baseline")
    truth = simulate_truth(s)[10]
    for k in range(1, 30):
        bundle = corrupt_measurements(truth, s, k)
        for i in range(3):
            # recover the rotation error from the measured and true directions
            nu = log_so3(_rotation_between(bundle.B[:, i], truth.C.T @ s.dirs.E[:, i]))
            assert nu @ np.linalg.solve(bundle.S_list[i], nu) <= 1.0 + 1e-6
        ups = truth.omega - bundle.omega
        assert ups @ np.linalg.solve(bundle.T, ups) <= 1.0 + 1e-9


def _rotation_between(a, b):
    # smallest rotation taking b onto a
    v = np.cross(b, a)
    s, c = np.linalg.norm(v), float(a @ b)
    return exp_so3(v / s * math.atan2(s, c)) if s > 0 else np.eye(3)


def test_corrupt_measurements_round_trip():
    s = load_scenario("pendulum_baseline")
    truth = simulate_truth(s)[20]
    bundle = corrupt_measurements(truth, s, 2)
    assert np.allclose(np.linalg.norm(bundle.B, axis=0), 1.0, atol=1e-12)
    again = corrupt_measurements(truth, s, 2)
    assert np.array_equal(again.B, bundle.B) and np.array_equal(again.omega, bundle.omega)
    assert not np.array_equal(corrupt_measurements(truth, s, 3).B, bundle.B)


def test_boundary_noise_mode_hits_boundary():
    doc = with_changes(baseline_doc(), ["noise", "mode"], "boundary")
    s = scenario_from_dict(doc)
    truth = simulate_truth(s)[10]
    ups = truth.omega - corrupt_measurements(truth, s, 1).omega
    assert ups @ np.linalg.solve(s.T, ups) == pytest.approx(1.0, abs=1e-6)


def test_zero_noise_run_tracks_truth():
    records, summary = run_estimation(scenario_from_dict(quiet_doc(5)))
    assert summary.status == "ok" and summary.completed_instants == 5
    assert summary.final_attitude_error_rad <= 1e-8
    assert summary.final_omega_error_rad_s <= 1e-8
    assert records[-1].trace_P < records[0].trace_P


def test_baseline_containment():
    records, summary = run_estimation(load_scenario("pendulum_baseline"))
    assert summary.status == "ok"
    assert summary.containment_rate >= 0.99


def test_contraction_demo_trace_decreases():
    records, summary = run_estimation(load_scenario("contraction_demo"))
    traces = [r.trace_P for r in records]
    assert all(b < a for a, b in zip(traces, traces[1:]))
    assert all(r.report.satisfied for r in records)


def test_cli_estimate_writes_outputs(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps(quiet_doc(3, 1e-10)))
    assert main(["estimate", "--scenario", str(scen), "--out", str(tmp_path / "a")]) == 0
    header = (tmp_path / "a" / "records.csv").read_text().splitlines()[0]
    assert header.split(",") == list(RECORD_COLUMNS)
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert sorted(summary) == sorted(SUMMARY_KEYS)
    assert summary["status"] == "ok" and summary["completed_instants"] == 3


def test_cli_outputs_are_byte_identical(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps(with_changes(baseline_doc(), ["measurement_count"], 5)))
    for d in ("a", "b"):
        assert main(["estimate", "--scenario", str(scen), "--out", str(tmp_path / d)]) == 0
    for name in ("records.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_seed_override_changes_output(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps(with_changes(baseline_doc(), ["measurement_count"], 2)))
    main(["estimate", "--scenario", str(scen), "--out", str(tmp_path / "a")])
    main(["estimate", "--scenario", str(scen), "--out", str(tmp_path / "b"), "--seed", "7"])
    assert (tmp_path / "a" / "records.csv").read_bytes() != (tmp_path / "b" / "records.csv").read_bytes()
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["seed"] == 7


def test_cli_records_round_trip_covariance(tmp_path):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps(with_changes(baseline_doc(), ["measurement_count"], 3)))
    s = scenario_from_dict(json.loads(scen.read_text()))
    records, _ = run_estimation(s)
    main(["estimate", "--scenario", str(scen), "--out", str(tmp_path)])
    rows = read_records(tmp_path / "records.csv")
    for r, row in zip(records, rows):
        assert np.abs(row["P"] - r.estimate.P).max() <= 1e-12 * np.abs(r.estimate.P).max()
        assert np.all(np.linalg.eigvalsh(row["P"]) > 0)


def test_cli_simulate(tmp_path):
    assert main(["simulate", "--scenario", "contraction_demo", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "truth.csv").read_text().splitlines()
    assert len(lines) == 1 + 51


def test_cli_validation_exit_codes(tmp_path, capsys):
    assert main(["estimate", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1
    assert main(["estimate", "--noise-mode", "sideways"]) == 1
    assert main(["estimate", "--c", "2.0", "--out", str(tmp_path)]) == 1
    assert main(["estimate", "--q", "-1"]) == 1
    assert main([]) == 1


def test_cli_runtime_failure_exit_code(tmp_path, monkeypatch):
    import ellipsoidal_attitude.sim as sim
    from ellipsoidal_attitude.errors import EmptyIntersectionError

    calls = []

    def failing(*args, **kwargs):
        calls.append(1)
        if len(calls) == 2:
            raise EmptyIntersectionError("no overlap")
        return real(*args, **kwargs)

    real = sim.filter_step
    monkeypatch.setattr(sim, "filter_step", failing)
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps(with_changes(baseline_doc(), ["measurement_count"], 3)))
    assert main(["estimate", "--scenario", str(scen), "--out", str(tmp_path)]) == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["status"] == "aborted" and summary["completed_instants"] == 1
    assert "instant 2" in summary["error"]


def test_cli_monte_carlo(tmp_path, capsys):
    scen = tmp_path / "s.json"
    scen.write_text(json.dumps(with_changes(baseline_doc(), ["measurement_count"], 3)))
    assert main(["monte-carlo", "--scenario", str(scen), "--trials", "3", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["trials"] == 3 and out["total_instants"] == 9
    assert [t["seed"] for t in out["per_trial"]] == [20240611, 20240612, 20240613]
    assert json.loads((tmp_path / "monte_carlo.json").read_text()) == out
    assert main(["monte-carlo", "--scenario", str(scen), "--trials", "0"]) == 1


def test_cli_check_convergence(tmp_path, capsys):
    for name, M in (("pm", np.eye(6)), ("pf", np.eye(6)), ("af", 0.1 * np.eye(6))):
        (tmp_path / f"{name}.json").write_text(json.dumps(M.tolist()))
    np.savetxt(tmp_path / "af.txt", 0.01 * np.eye(6))
    args = ["check-convergence", "--pm", str(tmp_path / "pm.json"), "--pf", str(tmp_path / "pf.json"), "--q", "1", "--c", "0.9"]
    assert main(args + ["--af", str(tmp_path / "af.json")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["rhs"] == pytest.approx(0.1581, abs=1e-4) and rep["satisfied"] is False
    assert main(args + ["--af", str(tmp_path / "af.txt")]) == 0
    assert json.loads(capsys.readouterr().out)["satisfied"] is True
    (tmp_path / "bad.json").write_text(json.dumps((-np.eye(6)).tolist()))
    assert main(["check-convergence", "--pm", str(tmp_path / "bad.json"), "--pf", str(tmp_path / "pf.json"), "--af", str(tmp_path / "af.txt")]) == 1


def test_schema_validates_examples():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((DOCS / "scenario.schema.json").read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    for path in (DOCS / "scenario.example.json", bundled_scenario_path("pendulum_baseline"), bundled_scenario_path("contraction_demo")):
        jsonschema.validate(json.loads(path.read_text()), schema)
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(with_changes(baseline_doc(), ["unexpected"], 1), schema)
    load_scenario(DOCS / "scenario.example.json")
