"""CVaR, type-1 Wasserstein distance, polyhedral support sets and radius calibration.

The ground norm on load vectors defaults to the l1 norm; its dual (the
l-infinity norm) is what the planner's Lipschitz rows bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from carbonsched.core import ProblemConfig, excess, flat_loads
from carbonsched.lp import EQ, LpModel, Status, solve_lp

DUAL_NORM = {1: np.inf, np.inf: 1, 2: 2}


def empirical_cvar(values, beta: float, weights=None) -> float:
    """CVaR of the upper ``beta`` tail of a discrete distribution.

    Evaluates ``inf_q [E[(x + q)_+] / beta - q]`` exactly; the infimum is
    attained at ``q = -x_j`` for some atom, so every candidate is scored and
    the smallest kept.
    """
    x = np.asarray(values, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empirical_cvar needs at least one value")
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    w = np.full(x.size, 1.0 / x.size) if weights is None else np.asarray(weights, dtype=float).ravel()
    if w.shape != x.shape or (w < 0).any():
        raise ValueError("weights must be nonnegative and match values")
    top = x.max()
    # shift by the max so constant inputs come back exact
    order = np.argsort(-x, kind="stable")
    xs, ws = x[order] - top, w[order]
    cum_w = np.cumsum(ws)
    cum_wx = np.cumsum(ws * xs)
    scores = (cum_wx - xs * cum_w) / beta + xs
    return float(scores.min() + top)


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        atoms = atoms.reshape(atoms.shape[0], -1)
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.size != atoms.shape[0]:
            raise ValueError("one weight per atom is required")
        if (weights < 0).any():
            raise ValueError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()!r}, expected 1")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def empirical(cls, samples) -> "DiscreteDistribution":
        """Uniform weights on the given samples (any trailing shape is flattened)."""
        samples = np.asarray(samples, dtype=float)
        n = samples.shape[0]
        return cls(samples.reshape(n, -1), np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, atom) -> "DiscreteDistribution":
        return cls(np.asarray(atom, dtype=float).reshape(1, -1), np.ones(1))

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]


def ground_distances(a: np.ndarray, b: np.ndarray, norm=1) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.linalg.norm(diff, ord=norm, axis=-1)


def wasserstein_discrete(P: DiscreteDistribution, Q: DiscreteDistribution, norm=1) -> float:
    """Type-1 Wasserstein distance between discrete distributions via the transport LP."""
    if P.dim != Q.dim:
        raise ValueError(f"atom dimensions differ: {P.dim} vs {Q.dim}")
    n, m = P.weights.size, Q.weights.size
    cost = ground_distances(P.atoms, Q.atoms, norm).ravel()
    rows_src = sp.kron(sp.identity(n), np.ones((1, m)))
    rows_dst = sp.kron(np.ones((1, n)), sp.identity(m))
    model = LpModel(
        c=cost,
        A=sp.vstack([rows_src, rows_dst]).tocsr(),
        sense=np.full(n + m, EQ),
        rhs=np.concatenate([P.weights, Q.weights]),
        lb=np.zeros(n * m),
        ub=np.full(n * m, np.inf),
        blocks={"plan": slice(0, n * m)},
    )
    sol = solve_lp(model)
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"transport LP failed: {sol.status.value} {sol.message}")
    return max(float(sol.objective), 0.0)


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Polyhedron ``{s : G s <= h}`` over flattened ``(K, C)`` load vectors."""

    G: np.ndarray
    h: np.ndarray
    shape: tuple[int, int]
    kind: str = "custom"

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        h = np.asarray(self.h, dtype=float).ravel()
        K, C = self.shape
        if G.shape != (h.size, K * C):
            raise ValueError(f"G has shape {G.shape}, expected ({h.size}, {K * C})")
        if not (np.isfinite(G).all() and np.isfinite(h).all()):
            raise ValueError("G and h must be finite")
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "h", h)

    @property
    def g(self) -> int:
        return self.h.size

    def slack(self, s) -> np.ndarray:
        """``h - G s`` for ``(K, C)`` or ``(N, K, C)`` samples."""
        return self.h - _rows_times(self.G, flat_loads(s))

    def contains(self, s, tol: float = 0.0) -> bool | np.ndarray:
        ok = (self.slack(s) >= -tol).all(axis=-1)
        return bool(ok) if np.ndim(ok) == 0 else ok


def _rows_times(G: np.ndarray, flat: np.ndarray) -> np.ndarray:
    """``G @ s`` per sample, summed the same way whatever the batch shape (BLAS is not)."""
    return (flat[..., None, :] * G).sum(axis=-1)


def build_support_set(samples, margin: float = 0.5, kind: str = "box") -> SupportSet:
    """Support polyhedron that contains every sample.

    ``kind="box"``: ``s >= 0`` and ``s_kc <= (1 + margin) max_i s^i_kc``
    (``g = 2KC``). ``kind="sum"``: ``s >= 0`` and ``1^T s <= (1 + margin)
    max_i 1^T s^i`` (``g = KC + 1``).
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3 or samples.shape[0] == 0:
        raise ValueError("samples must be a nonempty (N, K, C) array")
    if margin < 0:
        raise ValueError("margin must be >= 0")
    K, C = samples.shape[1:]
    flat = flat_loads(samples)
    n = K * C
    if kind == "box":
        G = np.vstack([-np.eye(n), np.eye(n)])
        h = np.concatenate([np.zeros(n), (1.0 + margin) * flat.max(axis=0)])
    elif kind == "sum":
        G = np.vstack([-np.eye(n), np.ones((1, n))])
        # same arithmetic as slack(), so a zero margin keeps the largest sample inside
        total = _rows_times(G[n:], flat).max()
        h = np.concatenate([np.zeros(n), [(1.0 + margin) * total]])
    else:
        raise ValueError(f"unknown support kind {kind!r}")
    support = SupportSet(G, h, (K, C), kind)
    if not support.contains(samples).all():
        raise ValueError("support set does not contain all samples (negative loads?)")
    return support


@dataclass
class CalibrationResult:
    epsilon: float
    qualified: bool
    table: list[dict] = field(default_factory=list)


def violation_rate(plan, samples, tol: float = 1e-9) -> float:
    """Fraction of samples whose excess under ``plan`` is positive."""
    values = excess(plan.schedule, plan.vcc, np.asarray(samples, dtype=float))
    return float(np.mean(np.atleast_1d(values) > tol))


def calibrate_radius(
    train,
    holdout,
    grid,
    target_violation_rate: float,
    config: ProblemConfig,
    *,
    margin: float = 0.5,
    tier: str = "full",
) -> CalibrationResult:
    """Pick the smallest radius whose plan keeps the holdout violation rate at or below target.

    Falls back to the largest grid value with ``qualified=False`` when no
    radius qualifies. An infeasible plan raises ``InfeasibleError`` with the
    offending radius in ``details["epsilon"]``.
    """
    from carbonsched.planner import InfeasibleError, plan_with_tier

    grid = [float(e) for e in grid]
    if not grid:
        raise ValueError("epsilon grid is empty")
    if grid != sorted(grid):
        raise ValueError("epsilon grid must be sorted ascending")
    if not 0 <= target_violation_rate <= 1:
        raise ValueError("target violation rate must lie in [0, 1]")
    train = np.asarray(train, dtype=float)
    holdout = np.asarray(holdout, dtype=float)

    table = []
    chosen = None
    for eps in grid:
        try:
            plan = plan_with_tier(config.with_risk(epsilon=eps), train, tier=tier, margin=margin)
        except InfeasibleError as err:
            err.details["epsilon"] = eps
            raise
        rate = violation_rate(plan, holdout)
        table.append({"epsilon": eps, "holdout_violation_rate": rate, "objective": plan.objective})
        if chosen is None and rate <= target_violation_rate:
            chosen = eps
    if chosen is None:
        return CalibrationResult(grid[-1], False, table)
    return CalibrationResult(chosen, True, table)
