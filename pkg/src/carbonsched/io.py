"""CSV and JSON interchange for samples, configs, plans, job streams and traces.

All indices in files are 1-based. Floats are written with 17 significant
digits so a write/read round trip is exact.

Schemas::

    samples.csv     sample_id,k,c,value
    jobs.csv        id,k,c,volume
    schedule.csv    k,c,t,d,fraction      (admissible cells only)
    vcc.csv         t,d,value
    executed.csv    t,d,load
    queue.csv       t,d,length
    placements.csv  job_id,d,t
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from carbonsched.core import ProblemConfig
from carbonsched.planner import Certificate, Plan
from carbonsched.scenarios import GeneratorSpec, SampleSet
from carbonsched.sim import Job, SimTrace


class CsvFormatError(ValueError):
    """Malformed CSV input; ``row`` is the 1-based file line (header is line 1)."""

    def __init__(self, path, row: int | None, message: str):
        self.path = str(path)
        self.row = row
        where = f"{path}, row {row}" if row is not None else str(path)
        super().__init__(f"{where}: {message}")


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_table(path, columns, records: list[dict]) -> None:
    """CSV of dict records; floats go through ``fmt``, ints and strings as they are."""

    def cell(x):
        if isinstance(x, (bool, np.bool_)):
            return int(x)
        if isinstance(x, (int, np.integer, str)):
            return x
        return fmt(x)

    write_rows(path, columns, [[cell(r[c]) for c in columns] for r in records])


def _read_rows(path, header):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(path, None, "empty file") from None
        if got != list(header):
            raise CsvFormatError(path, 1, f"expected header {','.join(header)}, got {','.join(got)}")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise CsvFormatError(path, line_no, f"expected {len(header)} fields, got {len(row)}")
            yield line_no, row


def read_rows(path) -> list[dict[str, str]]:
    """Any CSV written here, as a list of ``{column: text}`` dicts."""
    with open(path, newline="") as fh:
        return [{k.strip(): v for k, v in row.items()} for row in csv.DictReader(fh)]


def _parse(path, line_no, kind, text):
    try:
        return kind(text)
    except ValueError:
        raise CsvFormatError(path, line_no, f"cannot parse {text!r}") from None


def write_samples_csv(path, samples: SampleSet) -> None:
    rows = []
    for sid, grid in zip(samples.ids, samples.values):
        K, C = grid.shape
        for k in range(K):
            for c in range(C):
                rows.append((sid, k + 1, c + 1, fmt(grid[k, c])))
    write_rows(path, ("sample_id", "k", "c", "value"), rows)


def load_samples_csv(path, K: int | None = None, C: int | None = None) -> SampleSet:
    """Read a sample set; every sample must cover the full ``K x C`` grid.

    ``path`` may also be a directory holding ``samples.csv``.
    """
    path = find_samples(path)
    cells: dict[int, dict[tuple[int, int], float]] = {}
    for line_no, row in _read_rows(path, ("sample_id", "k", "c", "value")):
        sid, k, c = (_parse(path, line_no, int, x) for x in row[:3])
        value = _parse(path, line_no, float, row[3])
        if not np.isfinite(value) or value < 0:
            raise CsvFormatError(path, line_no, f"value must be finite and >= 0, got {row[3]}")
        if k < 1 or c < 1:
            raise CsvFormatError(path, line_no, f"indices are 1-based, got k={k}, c={c}")
        grid = cells.setdefault(sid, {})
        if (k, c) in grid:
            raise CsvFormatError(path, line_no, f"duplicate cell (k={k}, c={c}) for sample {sid}")
        grid[(k, c)] = value
    if not cells:
        raise CsvFormatError(path, None, "no samples")
    K = K or max(k for grid in cells.values() for k, _ in grid)
    C = C or max(c for grid in cells.values() for _, c in grid)
    ids = sorted(cells)
    values = np.empty((len(ids), K, C))
    for n, sid in enumerate(ids):
        grid = cells[sid]
        for k in range(1, K + 1):
            for c in range(1, C + 1):
                if (k, c) not in grid:
                    raise CsvFormatError(path, None, f"sample {sid} is missing cell (k={k}, c={c})")
                values[n, k - 1, c - 1] = grid[(k, c)]
        extra = [kc for kc in grid if kc[0] > K or kc[1] > C]
        if extra:
            raise CsvFormatError(path, None, f"sample {sid} has cell {extra[0]} outside the {K}x{C} grid")
    return SampleSet(values, tuple(ids))


def find_samples(path) -> Path:
    """Accept either a samples CSV or a directory holding ``samples.csv``."""
    path = Path(path)
    return path / "samples.csv" if path.is_dir() else path


def write_jobs_csv(path, jobs: list[Job]) -> None:
    write_rows(path, ("id", "k", "c", "volume"), [(j.id, j.k, j.c, fmt(j.volume)) for j in jobs])


def load_jobs_csv(path) -> list[Job]:
    jobs = []
    for line_no, row in _read_rows(path, ("id", "k", "c", "volume")):
        jid, k, c = (_parse(path, line_no, int, x) for x in row[:3])
        vol = _parse(path, line_no, float, row[3])
        try:
            jobs.append(Job(id=jid, c=c, k=k, volume=vol))
        except ValueError as err:
            raise CsvFormatError(path, line_no, str(err)) from None
    return jobs


def write_tensor_csv(path, Y: np.ndarray, mask: np.ndarray | None = None, value_name: str = "value") -> None:
    """Write a ``(K, C, T, D)`` tensor; with ``mask`` only the masked cells are listed."""
    idx = np.argwhere(mask) if mask is not None else np.argwhere(np.ones(Y.shape, dtype=bool))
    rows = [(k + 1, c + 1, t + 1, d + 1, fmt(Y[k, c, t, d])) for k, c, t, d in idx]
    write_rows(path, ("k", "c", "t", "d", value_name), rows)


def read_tensor_csv(path, dims, value_name: str = "value") -> np.ndarray:
    Y = np.zeros(dims)
    for line_no, row in _read_rows(path, ("k", "c", "t", "d", value_name)):
        k, c, t, d = (_parse(path, line_no, int, x) for x in row[:4])
        if not all(1 <= i <= n for i, n in zip((k, c, t, d), dims)):
            raise CsvFormatError(path, line_no, f"index {(k, c, t, d)} outside {dims}")
        Y[k - 1, c - 1, t - 1, d - 1] = _parse(path, line_no, float, row[4])
    return Y


def write_td_csv(path, arr: np.ndarray, value_name: str, integer: bool = False) -> None:
    T, D = arr.shape
    rows = [(t + 1, d + 1, int(arr[t, d]) if integer else fmt(arr[t, d])) for t in range(T) for d in range(D)]
    write_rows(path, ("t", "d", value_name), rows)


def read_td_csv(path, shape, value_name: str) -> np.ndarray:
    out = np.full(shape, np.nan)
    for line_no, row in _read_rows(path, ("t", "d", value_name)):
        t, d = (_parse(path, line_no, int, x) for x in row[:2])
        if not (1 <= t <= shape[0] and 1 <= d <= shape[1]):
            raise CsvFormatError(path, line_no, f"cell (t={t}, d={d}) outside {shape}")
        out[t - 1, d - 1] = _parse(path, line_no, float, row[2])
    if np.isnan(out).any():
        t, d = np.argwhere(np.isnan(out))[0]
        raise CsvFormatError(path, None, f"missing cell (t={t + 1}, d={d + 1})")
    return out


def save_json(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_config(path, config: ProblemConfig) -> None:
    save_json(path, config.to_dict())


def load_config(path) -> ProblemConfig:
    return ProblemConfig.from_dict(load_json(path))


def save_generator_spec(path, spec: GeneratorSpec) -> None:
    save_json(path, spec.to_dict())


def load_generator_spec(path) -> GeneratorSpec:
    return GeneratorSpec.from_dict(load_json(path))


def _jsonable(meta: dict) -> dict:
    out = {}
    for key, val in meta.items():
        if isinstance(val, (np.floating, np.integer)):
            val = val.item()
        if isinstance(val, (str, int, float, bool, type(None), list, dict)):
            out[key] = val
    return out


def write_plan_csv(out_dir, plan: Plan, config: ProblemConfig) -> None:
    """Write ``schedule.csv``, ``vcc.csv``, ``plan.json``, ``config.json`` (and ``eta.npy``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor_csv(out / "schedule.csv", plan.schedule, config.window_mask, "fraction")
    write_td_csv(out / "vcc.csv", plan.vcc, "value")
    doc = {"objective": plan.objective, "meta": _jsonable(plan.meta)}
    cert = plan.certificate
    if cert is not None:
        doc["certificate"] = {
            "q": cert.q,
            "lambda": cert.lam,
            "p": [float(x) for x in cert.p],
            "eta_file": "eta.npy" if cert.eta is not None else None,
        }
        if cert.eta is not None:
            np.save(out / "eta.npy", cert.eta)
    save_json(out / "plan.json", doc)
    save_config(out / "config.json", config)


def read_plan(plan_dir) -> tuple[Plan, ProblemConfig]:
    plan_dir = Path(plan_dir)
    config = load_config(plan_dir / "config.json")
    doc = load_json(plan_dir / "plan.json")
    Y = read_tensor_csv(plan_dir / "schedule.csv", config.dims, "fraction")
    v = read_td_csv(plan_dir / "vcc.csv", (config.T, config.D), "value")
    cert = None
    if "certificate" in doc:
        c = doc["certificate"]
        eta = np.load(plan_dir / c["eta_file"]) if c.get("eta_file") else None
        cert = Certificate(q=c["q"], lam=c["lambda"], p=np.asarray(c["p"]), eta=eta)
    return Plan(Y, v, doc["objective"], cert, doc.get("meta", {})), config


def write_trace_csv(out_dir, trace: SimTrace, extra_summary: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_td_csv(out / "executed.csv", trace.executed, "load")
    write_td_csv(out / "queue.csv", trace.queue_length, "length", integer=True)
    write_rows(out / "placements.csv", ("job_id", "d", "t"), trace.placements)
    save_json(out / "summary.json", {**trace.summary(), **(extra_summary or {})})
