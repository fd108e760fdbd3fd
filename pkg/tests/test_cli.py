import json

import numpy as np
import pytest

from carbonsched import io as cio
from carbonsched.cli import main, sha256_file
from carbonsched.core import aggregate_load


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("init-config", "--fleet", "ci", "--out", root / "setup") == 0
    assert run("gen-data", "--spec", root / "setup/generator.json", "--n", 10, "--out", root / "train") == 0
    assert run("gen-data", "--spec", root / "setup/generator.json", "--n", 15, "--first-id", 1001, "--out", root / "val") == 0
    assert run("plan", "--config", root / "setup/config.json", "--samples", root / "train", "--out", root / "plan") == 0
    return root


def read_json(path):
    return json.loads(path.read_text())


def test_init_and_gen_data(ws):
    samples = cio.load_samples_csv(ws / "train/samples.csv")
    assert len(samples) == 10 and samples.values.shape == (10, 6, 2)
    man = read_json(ws / "train/manifest.json")
    assert man["command"] == "gen-data" and man["seeds"]["generator"] == 0
    assert set(man["outputs"]) == {"samples.csv"}


def test_gen_data_split(ws, tmp_path):
    assert run("gen-data", "--spec", ws / "setup/generator.json", "--n", 75, "--train-fraction", 0.8, "--out", tmp_path) == 0
    assert len(cio.load_samples_csv(tmp_path / "train")) == 60
    assert len(cio.load_samples_csv(tmp_path / "validation")) == 15
    for part in ("train", "validation"):
        assert (tmp_path / part / "manifest.json").exists()
    assert set(read_json(tmp_path / "manifest.json")["outputs"]) == {"samples.csv"}


def test_gen_data_same_seed_identical(ws, tmp_path):
    run("gen-data", "--spec", ws / "setup/generator.json", "--n", 10, "--out", tmp_path)
    assert (tmp_path / "samples.csv").read_bytes() == (ws / "train/samples.csv").read_bytes()


def test_invalid_spec_names_field(ws, tmp_path, capsys):
    spec = read_json(ws / "setup/generator.json")
    spec["noise"] = [-1.0, 0.1]
    (tmp_path / "bad.json").write_text(json.dumps(spec))
    assert run("gen-data", "--spec", tmp_path / "bad.json", "--n", 3, "--out", tmp_path / "o") == 6
    assert "noise" in capsys.readouterr().err


def test_plan_defaults_recorded(ws):
    man = read_json(ws / "plan/manifest.json")
    assert man["args"]["beta"] == 0.2 and man["args"]["epsilon"] == 8e-3
    assert read_json(ws / "plan/verify.json")["certified"] is True
    for name in ("schedule.csv", "vcc.csv", "plan.json", "verify.json"):
        assert name in man["outputs"]
    assert set(man["inputs"]) == {"config", "samples"}


def _objective(path):
    return read_json(path / "plan.json")["objective"]


def test_plan_epsilon_zero_matches_saa(ws, tmp_path):
    base = ("plan", "--config", ws / "setup/config.json", "--samples", ws / "train")
    assert run(*base, "--epsilon", 0, "--out", tmp_path / "e0") == 0
    assert run(*base, "--saa", "--out", tmp_path / "saa") == 0
    assert _objective(tmp_path / "e0") == pytest.approx(_objective(tmp_path / "saa"), rel=1e-6)


def test_plan_conservative_not_below_full(ws, tmp_path):
    base = ("plan", "--config", ws / "setup/config.json", "--samples", ws / "train", "--epsilon", 1e-2)
    assert run(*base, "--out", tmp_path / "full") == 0
    assert run(*base, "--tier", "conservative", "--out", tmp_path / "cons") == 0
    assert _objective(tmp_path / "cons") >= _objective(tmp_path / "full") - 1e-9


def test_simulate_greedy_places_on_submit_hour(ws, tmp_path):
    assert run("simulate", "--plan", ws / "plan", "--scenario", ws / "val", "--policy", "greedy", "--out", tmp_path) == 0
    jobs = {j.id: j for j in cio.load_jobs_csv(tmp_path / "jobs.csv")}
    rows = cio.read_rows(tmp_path / "placements.csv")
    assert rows and all(int(r["t"]) == jobs[int(r["job_id"])].k for r in rows)


def test_simulate_hard_mode_caps(ws, tmp_path):
    assert run("simulate", "--plan", ws / "plan", "--scenario", ws / "val", "--mode", "hard", "--out", tmp_path) == 0
    plan, config = cio.read_plan(ws / "plan")
    executed = cio.read_td_csv(tmp_path / "executed.csv", (config.T, config.D), "load")
    assert (executed <= np.minimum(plan.vcc, config.true_capacity) + 1e-9).all()
    summary = read_json(tmp_path / "summary.json")
    assert summary["mode"] == "hard" and summary["scenario_id"] == 1001
    assert summary["plan_cost"] == plan.objective


def test_simulate_tracking_follows_plan(ws, tmp_path):
    args = ("--plan", ws / "plan", "--scenario", ws / "val", "--scenario-id", 1005, "--jobs-per-cell", 400, "--sigma-rel", 0)
    assert run("simulate", *args, "--out", tmp_path) == 0
    plan, config = cio.read_plan(ws / "plan")
    scenario = cio.load_samples_csv(ws / "val").values[4]
    target = aggregate_load(plan.schedule, scenario)
    executed = cio.read_td_csv(tmp_path / "executed.csv", (config.T, config.D), "load")
    assert np.abs(executed - target).sum() <= 0.02 * target.sum()


def test_simulate_unknown_scenario_is_usage_error(ws, tmp_path):
    assert run("simulate", "--plan", ws / "plan", "--scenario", ws / "val", "--scenario-id", 5, "--out", tmp_path) == 2


def test_compare_schema(ws, tmp_path):
    args = ("--config", ws / "setup/config.json", "--samples", ws / "train", "--validation", ws / "val")
    assert run("compare", *args, "--out", tmp_path) == 0
    header = (tmp_path / "comparison.csv").read_text().splitlines()[0]
    assert header == "scenario_id,oracle_cost,dro_cost,greedy_cost,dro_pct,greedy_pct"
    rows = cio.read_rows(tmp_path / "comparison.csv")
    assert len(rows) == 15
    assert all(float(r["oracle_cost"]) <= float(r["dro_cost"]) + 1e-9 for r in rows)
    assert read_json(tmp_path / "summary.json")["oracle_le_dro_all"] is True


def test_sweep_epsilon(ws, tmp_path):
    args = ("--config", ws / "setup/config.json", "--samples", ws / "train", "--validation", ws / "val")
    assert run("sweep", "--param", "epsilon", "--grid", "0,1e-3,8e-3,5e-2", *args, "--out", tmp_path) == 0
    rows = cio.read_rows(tmp_path / "sweep.csv")
    assert [float(r["value"]) for r in rows] == [0, 1e-3, 8e-3, 5e-2]
    assert read_json(tmp_path / "summary.json")["objective_nondecreasing"] is True


def test_sweep_single_point(ws, tmp_path):
    args = ("--config", ws / "setup/config.json", "--samples", ws / "train")
    assert run("sweep", "--param", "beta", "--grid", "0.3", *args, "--out", tmp_path) == 0
    assert len(cio.read_rows(tmp_path / "sweep.csv")) == 1


def test_calibrate(ws, tmp_path):
    args = ("--config", ws / "setup/config.json", "--train", ws / "train", "--holdout", ws / "val")
    assert run("calibrate", *args, "--grid", "1e-2,0,1e-3", "--target", 1, "--out", tmp_path) == 0
    assert read_json(tmp_path / "result.json") == {"epsilon": 0.0, "qualified": True, "target": 1.0}
    assert len(cio.read_rows(tmp_path / "calibration.csv")) == 3


def test_calibrate_empty_grid(ws, tmp_path):
    args = ("--config", ws / "setup/config.json", "--train", ws / "train", "--holdout", ws / "val")
    assert run("calibrate", *args, "--grid", "", "--target", 0.1, "--out", tmp_path) == 2
    assert run("calibrate", *args, "--grid", "a,b", "--target", 0.1, "--out", tmp_path) == 2


def test_exit_codes(ws, tmp_path):
    assert run("plan", "--config", ws / "setup/config.json") == 2
    assert run("frobnicate") == 2
    assert run("plan", "--config", tmp_path / "nope.json", "--samples", ws / "train", "--out", tmp_path) == 5
    config = read_json(ws / "setup/config.json")
    config["true_capacity"] = [[1e-4] * 2] * len(config["true_capacity"])
    (tmp_path / "tight.json").write_text(json.dumps(config))
    assert run("plan", "--config", tmp_path / "tight.json", "--samples", ws / "train", "--out", tmp_path / "p") == 3
    (tmp_path / "bad.csv").write_text("sample_id,k,c,value\n1,1,1,-1\n")
    assert run("plan", "--config", ws / "setup/config.json", "--samples", tmp_path / "bad.csv", "--out", tmp_path / "q") == 6


def test_inputs_not_mutated(ws, tmp_path):
    inputs = [ws / "setup/config.json", ws / "train/samples.csv", ws / "val/samples.csv", ws / "plan/schedule.csv"]
    before = [sha256_file(p) for p in inputs]
    args = ("--config", ws / "setup/config.json", "--samples", ws / "train", "--validation", ws / "val")
    run("compare", *args, "--out", tmp_path / "c")
    run("simulate", "--plan", ws / "plan", "--scenario", ws / "val", "--out", tmp_path / "s")
    assert [sha256_file(p) for p in inputs] == before


def test_manifest_hashes_match_outputs(ws):
    man = read_json(ws / "plan/manifest.json")
    for rel, digest in man["outputs"].items():
        assert sha256_file(ws / "plan" / rel) == digest
