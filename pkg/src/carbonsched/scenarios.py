"""Synthetic load samples, job streams and cost signals, plus train/validation splits."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from carbonsched.sim import Job


class SpecError(ValueError):
    """Invalid generator specification; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class SampleSet:
    """``values`` is ``(N, K, C)``; ``ids`` label the samples."""

    values: np.ndarray
    ids: tuple[int, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3:
            raise ValueError(f"samples must be (N, K, C), got shape {values.shape}")
        ids = tuple(int(i) for i in self.ids) if self.ids else tuple(range(1, values.shape[0] + 1))
        if len(ids) != values.shape[0]:
            raise ValueError("one id per sample is required")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return self.values.shape[0]

    def subset(self, positions) -> "SampleSet":
        positions = list(positions)
        return SampleSet(self.values[positions], tuple(self.ids[p] for p in positions))


@dataclass
class GeneratorSpec:
    """Per-class daily shape ``volume * (base + amplitude sin(2 pi (k - phase) / K))``.

    Each sample multiplies the shape by mean-one lognormal noise and is
    normalized to unit daily total. ``jobs_per_cell`` sets the job count of
    every ``(k, c)`` cell for job streams.
    """

    K: int
    base: list[float]
    amplitude: list[float]
    phase: list[float]
    noise: list[float]
    volume: list[float]
    jobs_per_cell: int = 20
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def C(self) -> int:
        return len(self.base)

    def validate(self):
        if int(self.K) != self.K or self.K < 1:
            raise SpecError("K", "must be a positive integer")
        C = len(self.base)
        if C == 0:
            raise SpecError("base", "needs one entry per class")
        for name in ("amplitude", "phase", "noise", "volume"):
            if len(getattr(self, name)) != C:
                raise SpecError(name, f"needs {C} entries, got {len(getattr(self, name))}")
        for c in range(C):
            if not self.base[c] >= self.amplitude[c] >= 0:
                raise SpecError("amplitude", f"class {c + 1}: need base >= amplitude >= 0")
            if self.noise[c] < 0:
                raise SpecError("noise", f"class {c + 1}: must be >= 0")
            if self.volume[c] < 0:
                raise SpecError("volume", f"class {c + 1}: must be >= 0")
        if sum(b * w for b, w in zip(self.base, self.volume)) <= 0:
            raise SpecError("volume", "daily load must be positive")
        if int(self.jobs_per_cell) != self.jobs_per_cell or self.jobs_per_cell < 1:
            raise SpecError("jobs_per_cell", "must be an integer >= 1")

    def shape(self) -> np.ndarray:
        """Deterministic ``(K, C)`` shape before noise and normalization."""
        k = np.arange(1, self.K + 1)[:, None]
        base = np.asarray(self.base)[None, :]
        amp = np.asarray(self.amplitude)[None, :]
        phase = np.asarray(self.phase)[None, :]
        out = np.asarray(self.volume)[None, :] * (base + amp * np.sin(2 * np.pi * (k - phase) / self.K))
        return np.maximum(out, 0.0)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise SpecError(sorted(unknown)[0], "unknown field")
        missing = [f for f in ("K", "base", "amplitude", "phase", "noise", "volume") if f not in data]
        if missing:
            raise SpecError(missing[0], "missing")
        return cls(**data)


def _substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key)]))


def generate_load_samples(spec: GeneratorSpec, N: int, first_id: int = 1) -> SampleSet:
    """``N`` normalized daily load samples; sample ``i`` uses substream ``(seed, id)``."""
    if N < 1:
        raise ValueError("N must be >= 1")
    spec.validate()
    shape = spec.shape()
    noise = np.asarray(spec.noise)[None, :]
    out = np.empty((N, spec.K, spec.C))
    ids = tuple(range(first_id, first_id + N))
    for n, sid in enumerate(ids):
        z = _substream(spec.seed, sid).standard_normal((spec.K, spec.C))
        raw = shape * np.exp(noise * z - noise**2 / 2)
        out[n] = raw / raw.sum()
    return SampleSet(out, ids)


def generate_job_stream(scenario, counts, sigma_rel: float = 0.1, seed: int = 0) -> list[Job]:
    """Discrete jobs whose volumes add up to ``scenario[k, c]`` in every cell.

    Volumes are drawn from ``Normal(mean, sigma_rel * mean)`` with
    ``mean = s[k, c] / count``, floored at ``1e-9`` and rescaled to the cell
    total. Jobs are ordered by hour, then class.
    """
    s = np.asarray(scenario, dtype=float)
    if s.ndim != 2:
        raise ValueError("scenario must be a (K, C) array")
    if (s < 0).any():
        raise ValueError("scenario must be nonnegative")
    K, C = s.shape
    counts = np.broadcast_to(np.asarray(counts), (K, C))
    if sigma_rel < 0:
        raise ValueError("sigma_rel must be >= 0")
    rng = np.random.default_rng(seed)
    jobs: list[Job] = []
    for k in range(K):
        for c in range(C):
            total = s[k, c]
            n = int(counts[k, c])
            if total <= 0:
                continue
            if n < 1:
                raise ValueError(f"cell (k={k + 1}, c={c + 1}) has load {total} but zero jobs")
            mean = total / n
            if n == 1 or sigma_rel == 0:
                vols = np.full(n, mean)
            else:
                vols = np.maximum(rng.normal(mean, sigma_rel * mean, n), 1e-9)
                vols = vols * (total / vols.sum())
            for vol in vols:
                jobs.append(Job(id=len(jobs), c=c + 1, k=k + 1, volume=float(vol)))
    return jobs


def generate_cost_signals(
    T: int,
    D: int,
    base: float = 1.0,
    amplitude: float = 0.5,
    phase=None,
    infra=1.0,
    period: float = 24.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Phase-shifted sinusoidal carbon prices ``(T, D)`` and per-cluster infra prices ``(D,)``.

    The default phase of cluster ``d`` is ``6 (d - 1)`` hours.
    """
    if not base > amplitude >= 0:
        raise ValueError("prices must stay positive: need base > amplitude >= 0")
    phase = 6.0 * np.arange(D) if phase is None else np.asarray(phase, dtype=float)
    infra = np.broadcast_to(np.asarray(infra, dtype=float), (D,)).copy()
    if phase.shape != (D,):
        raise ValueError(f"phase needs {D} entries")
    if (infra < 0).any():
        raise ValueError("infra prices must be >= 0")
    t = np.arange(1, T + 1)[:, None]
    carbon = base + amplitude * np.sin(2 * np.pi * (t - phase[None, :]) / period)
    return carbon, infra


def split_train_validation(samples: SampleSet, train_fraction: float = 0.8, seed: int = 0) -> tuple[SampleSet, SampleSet]:
    """Shuffled disjoint split; the training side holds ``round_half_up(fraction * N)`` samples."""
    N = len(samples)
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    if N < 2:
        raise ValueError("need at least two samples to split")
    n_train = math.floor(train_fraction * N + 0.5)
    if n_train in (0, N):
        raise ValueError(f"split of {N} samples at {train_fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(N)
    return samples.subset(sorted(perm[:n_train])), samples.subset(sorted(perm[n_train:]))
