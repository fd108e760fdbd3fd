import numpy as np
import pytest

from carbonsched import io as cio
from carbonsched.planner import plan_with_tier
from carbonsched.scenarios import SampleSet, generate_job_stream, generate_load_samples
from carbonsched.sim import simulate_day


def test_samples_roundtrip_exact(tmp_path, ci):
    samples = generate_load_samples(ci[1], 6)
    path = tmp_path / "s.csv"
    cio.write_samples_csv(path, samples)
    back = cio.load_samples_csv(path)
    assert back.ids == samples.ids
    assert back.values.tobytes() == samples.values.tobytes()
    cio.write_samples_csv(tmp_path / "again.csv", back)
    assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()


def test_samples_header_whitespace_is_normalized(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text(" sample_id , k, c ,value\n1,1,1,0.5\n")
    assert cio.load_samples_csv(path).values.tolist() == [[[0.5]]]


def _grid_csv(path, rows):
    lines = ["sample_id,k,c,value"] + [",".join(map(str, r)) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _full_rows(K=3, C=2, at=None, value=None):
    rows = [(1, k, c, 0.1) for k in range(1, K + 1) for c in range(1, C + 1)]
    if at is not None:
        rows[at] = (*rows[at][:3], value)
    return rows


def test_negative_value_cites_row(tmp_path):
    path = tmp_path / "s.csv"
    _grid_csv(path, _full_rows(at=5, value=-0.2))  # data row 6 is file line 7
    with pytest.raises(cio.CsvFormatError) as err:
        cio.load_samples_csv(path)
    assert err.value.row == 7
    assert "row 7" in str(err.value)


def test_missing_cell_named(tmp_path):
    path = tmp_path / "s.csv"
    rows = [r for r in _full_rows() if (r[1], r[2]) != (3, 2)]
    rows.append((2, 3, 2, 0.1))
    rows += [(2, k, c, 0.1) for k in range(1, 4) for c in range(1, 3) if (k, c) != (3, 2)]
    _grid_csv(path, rows)
    with pytest.raises(cio.CsvFormatError, match=r"sample 1 is missing cell \(k=3, c=2\)"):
        cio.load_samples_csv(path)


def test_duplicate_and_garbage(tmp_path):
    path = tmp_path / "s.csv"
    _grid_csv(path, _full_rows() + [(1, 1, 1, 0.3)])
    with pytest.raises(cio.CsvFormatError, match="duplicate"):
        cio.load_samples_csv(path)
    _grid_csv(path, [(1, 1, 1, "abc")])
    with pytest.raises(cio.CsvFormatError) as err:
        cio.load_samples_csv(path)
    assert err.value.row == 2
    path.write_text("id,k,c,value\n1,1,1,0.5\n")
    with pytest.raises(cio.CsvFormatError):
        cio.load_samples_csv(path)
    path.write_text("")
    with pytest.raises(cio.CsvFormatError):
        cio.load_samples_csv(path)


def test_inconsistent_grid(tmp_path):
    path = tmp_path / "s.csv"
    _grid_csv(path, _full_rows(K=2, C=2))
    with pytest.raises(cio.CsvFormatError):
        cio.load_samples_csv(path, K=3, C=2)


def test_jobs_roundtrip(tmp_path):
    jobs = generate_job_stream(np.random.default_rng(0).random((3, 2)), 4, 0.3, seed=1)
    cio.write_jobs_csv(tmp_path / "jobs.csv", jobs)
    assert cio.load_jobs_csv(tmp_path / "jobs.csv") == jobs
    (tmp_path / "bad.csv").write_text("id,k,c,volume\n1,1,1,0\n")
    with pytest.raises(cio.CsvFormatError) as err:
        cio.load_jobs_csv(tmp_path / "bad.csv")
    assert err.value.row == 2


def test_plan_roundtrip(tmp_path, ci_config, ci_train):
    plan = plan_with_tier(ci_config, ci_train.values)
    cio.write_plan_csv(tmp_path, plan, ci_config)
    back, config = cio.read_plan(tmp_path)
    assert config.to_dict() == ci_config.to_dict()
    np.testing.assert_array_equal(back.schedule, plan.schedule)
    np.testing.assert_array_equal(back.vcc, plan.vcc)
    np.testing.assert_array_equal(back.certificate.eta, plan.certificate.eta)
    assert back.certificate.lam == plan.certificate.lam
    assert back.objective == plan.objective
    header = (tmp_path / "schedule.csv").read_text().splitlines()[0]
    assert header == "k,c,t,d,fraction"
    rows = len((tmp_path / "schedule.csv").read_text().splitlines()) - 1
    assert rows == ci_config.window_mask.sum()


def test_trace_files(tmp_path, ci_config, ci_train):
    plan = plan_with_tier(ci_config, ci_train.values)
    stream = generate_job_stream(ci_train.values[0], 3, 0.1, seed=0)
    trace = simulate_day(stream, "tracking", "hard", plan.vcc, ci_config, plan.schedule)
    cio.write_trace_csv(tmp_path, trace, {"plan_cost": plan.objective})
    executed = cio.read_td_csv(tmp_path / "executed.csv", (ci_config.T, ci_config.D), "load")
    np.testing.assert_array_equal(executed, trace.executed)
    summary = cio.load_json(tmp_path / "summary.json")
    assert summary["plan_cost"] == plan.objective and summary["mode"] == "hard"
    assert (tmp_path / "placements.csv").read_text().splitlines()[0] == "job_id,d,t"
    assert (tmp_path / "queue.csv").read_text().splitlines()[1].count(".") == 0


def test_td_csv_missing_cell(tmp_path):
    cio.write_td_csv(tmp_path / "v.csv", np.ones((2, 2)), "value")
    lines = (tmp_path / "v.csv").read_text().splitlines()
    (tmp_path / "v.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(cio.CsvFormatError, match=r"missing cell \(t=2, d=2\)"):
        cio.read_td_csv(tmp_path / "v.csv", (2, 2), "value")


def test_config_json_roundtrip(tmp_path, ci_config):
    cio.save_config(tmp_path / "c.json", ci_config)
    assert cio.load_config(tmp_path / "c.json").to_dict() == ci_config.to_dict()


def test_find_samples(tmp_path):
    cio.write_samples_csv(tmp_path / "samples.csv", SampleSet(np.ones((1, 1, 1))))
    assert cio.find_samples(tmp_path) == tmp_path / "samples.csv"
    assert cio.find_samples(tmp_path / "samples.csv") == tmp_path / "samples.csv"
