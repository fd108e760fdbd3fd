"""Deterministic scheduling model shared by the planner and the simulator.

Index conventions
-----------------
The user-facing conventions (``FlexClass``, :func:`flatten_index`,
:func:`feasible_cells`, every CSV file) are 1-based: hours ``k`` and ``t``,
classes ``c`` and clusters ``d`` all start at 1.

Arrays are 0-based numpy arrays with fixed shapes:

* schedule ``Y``: ``(K, C, T, D)``
* VCC ``v``, capacities and carbon prices: ``(T, D)``
* load sample ``s``: ``(K, C)``; a sample set is ``(N, K, C)``

Flat vectors follow the column-major bijection
``r = K(c-1) + k + KC(t-1) + KCT(d-1)``, i.e. ``k`` varies fastest. Load
samples flatten the same way, ``kc = (k-1) + K(c-1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

COVERAGE_TOL = 1e-8
BOUND_TOL = 1e-9


@dataclass(frozen=True)
class FlexClass:
    """A flexibility class: delay tolerance in hours and allowed clusters (1-based)."""

    id: int
    delay_tolerance: int
    allowed_clusters: tuple[int, ...]

    def __post_init__(self):
        if int(self.delay_tolerance) != self.delay_tolerance or self.delay_tolerance < 0:
            raise ValueError(f"class {self.id}: delay_tolerance must be an integer >= 0")
        if not self.allowed_clusters:
            raise ValueError(f"class {self.id}: allowed_clusters must be nonempty")
        object.__setattr__(self, "delay_tolerance", int(self.delay_tolerance))
        object.__setattr__(
            self, "allowed_clusters", tuple(sorted(int(d) for d in set(self.allowed_clusters)))
        )


@dataclass(frozen=True, eq=False)
class ProblemConfig:
    """Fleet topology, flexibility classes, prices and risk parameters.

    ``T`` is derived as ``K + max_c h_c``. Array fields are coerced to float
    arrays of shape ``(T, D)`` (capacity, carbon price) and ``(D,)`` (infra
    price).
    """

    K: int
    D: int
    classes: tuple[FlexClass, ...]
    true_capacity: np.ndarray
    carbon_price: np.ndarray
    infra_price: np.ndarray
    beta: float = 0.2
    epsilon: float = 8e-3
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.K < 1 or self.D < 1:
            raise ValueError("K and D must be positive")
        if not self.classes:
            raise ValueError("at least one class is required")
        ids = [cl.id for cl in self.classes]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError(f"class ids must be 1..C in order, got {ids}")
        for cl in self.classes:
            bad = [d for d in cl.allowed_clusters if not 1 <= d <= self.D]
            if bad:
                raise ValueError(f"class {cl.id}: clusters {bad} outside 1..{self.D}")
        T, D = self.T, self.D
        cap = np.broadcast_to(np.asarray(self.true_capacity, dtype=float), (T, D)).copy()
        carb = np.broadcast_to(np.asarray(self.carbon_price, dtype=float), (T, D)).copy()
        infra = np.broadcast_to(np.asarray(self.infra_price, dtype=float), (D,)).copy()
        if (cap < 0).any() or not np.isfinite(cap).all():
            raise ValueError("true_capacity must be finite and >= 0")
        if not np.isfinite(carb).all():
            raise ValueError("carbon_price must be finite")
        if (infra < 0).any() or not np.isfinite(infra).all():
            raise ValueError("infra_price must be finite and >= 0")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        for arr in (cap, carb, infra):
            arr.setflags(write=False)
        object.__setattr__(self, "true_capacity", cap)
        object.__setattr__(self, "carbon_price", carb)
        object.__setattr__(self, "infra_price", infra)

    @property
    def C(self) -> int:
        return len(self.classes)

    @property
    def T(self) -> int:
        return self.K + max(cl.delay_tolerance for cl in self.classes)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.K, self.C, self.T, self.D)

    def with_risk(self, beta: float | None = None, epsilon: float | None = None) -> "ProblemConfig":
        return replace(
            self,
            beta=self.beta if beta is None else beta,
            epsilon=self.epsilon if epsilon is None else epsilon,
        )

    def with_prices(self, carbon_price=None, infra_price=None) -> "ProblemConfig":
        return replace(
            self,
            carbon_price=self.carbon_price if carbon_price is None else carbon_price,
            infra_price=self.infra_price if infra_price is None else infra_price,
        )

    @cached_property
    def window_mask(self) -> np.ndarray:
        """Boolean ``(K, C, T, D)`` mask of admissible schedule entries."""
        K, C, T, D = self.dims
        mask = np.zeros((K, C, T, D), dtype=bool)
        for c, cl in enumerate(self.classes):
            ds = [d - 1 for d in cl.allowed_clusters]
            for k in range(K):
                mask[k, c, k : k + cl.delay_tolerance + 1, ds] = True
        mask.setflags(write=False)
        return mask

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "K": self.K,
            "D": self.D,
            "classes": [
                {
                    "id": cl.id,
                    "delay_tolerance": cl.delay_tolerance,
                    "allowed_clusters": list(cl.allowed_clusters),
                }
                for cl in self.classes
            ],
            "true_capacity": self.true_capacity.tolist(),
            "carbon_price": self.carbon_price.tolist(),
            "infra_price": self.infra_price.tolist(),
            "beta": self.beta,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        missing = [
            key
            for key in ("K", "D", "classes", "true_capacity", "carbon_price", "infra_price")
            if key not in data
        ]
        if missing:
            raise ValueError(f"config is missing fields: {', '.join(missing)}")
        classes = tuple(
            FlexClass(
                id=int(cl["id"]),
                delay_tolerance=cl["delay_tolerance"],
                allowed_clusters=tuple(cl["allowed_clusters"]),
            )
            for cl in data["classes"]
        )
        return cls(
            K=int(data["K"]),
            D=int(data["D"]),
            classes=classes,
            true_capacity=np.asarray(data["true_capacity"], dtype=float),
            carbon_price=np.asarray(data["carbon_price"], dtype=float),
            infra_price=np.asarray(data["infra_price"], dtype=float),
            beta=float(data.get("beta", 0.2)),
            epsilon=float(data.get("epsilon", 8e-3)),
            name=str(data.get("name", "custom")),
        )


@dataclass(frozen=True)
class Violation:
    """One entry of a diagnostic report.

    ``where`` holds 1-based indices, e.g. ``(k, c)`` for coverage or
    ``(t, d)`` for capacity.
    """

    kind: str
    where: tuple
    amount: float

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.amount:.3g}"


def flatten_index(k: int, c: int, t: int, d: int, dims: tuple[int, int, int, int]) -> int:
    """1-based flat position of ``Y[k, c, t, d]``."""
    K, C, T, D = dims
    for name, val, hi in (("k", k, K), ("c", c, C), ("t", t, T), ("d", d, D)):
        if not 1 <= val <= hi:
            raise ValueError(f"{name}={val} outside 1..{hi}")
    return K * (c - 1) + k + K * C * (t - 1) + K * C * T * (d - 1)


def unflatten_index(r: int, dims: tuple[int, int, int, int]) -> tuple[int, int, int, int]:
    K, C, T, D = dims
    if not 1 <= r <= K * C * T * D:
        raise ValueError(f"r={r} outside 1..{K * C * T * D}")
    k0, c0, t0, d0 = np.unravel_index(r - 1, (K, C, T, D), order="F")
    return int(k0) + 1, int(c0) + 1, int(t0) + 1, int(d0) + 1


def flat_schedule(Y: np.ndarray) -> np.ndarray:
    return np.asarray(Y).reshape(-1, order="F")


def tensor_schedule(y: np.ndarray, dims: tuple[int, int, int, int]) -> np.ndarray:
    return np.asarray(y).reshape(dims, order="F")


def flat_loads(s: np.ndarray) -> np.ndarray:
    """Flatten ``(..., K, C)`` loads to ``(..., K*C)`` with ``k`` fastest."""
    s = np.asarray(s)
    return np.swapaxes(s, -1, -2).reshape(*s.shape[:-2], -1)


def feasible_cells(flex: FlexClass, k: int, config: ProblemConfig) -> set[tuple[int, int]]:
    """Admissible 1-based execution cells ``(t, d)`` for class ``flex`` submitted at hour ``k``."""
    if not 1 <= k <= config.K:
        raise ValueError(f"k={k} outside 1..{config.K}")
    last = min(k + flex.delay_tolerance, config.T)
    return {(t, d) for t in range(k, last + 1) for d in flex.allowed_clusters}


def aggregate_load(Y: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Allocated load ``L[t, d] = sum_{k,c} Y[k,c,t,d] s[k,c]``.

    ``s`` may carry leading batch axes, ``(..., K, C)`` -> ``(..., T, D)``.
    """
    Y = np.asarray(Y, dtype=float)
    s = np.asarray(s, dtype=float)
    if Y.ndim != 4 or s.shape[-2:] != Y.shape[:2]:
        raise ValueError(f"shape mismatch: Y {Y.shape} vs s {s.shape}")
    return np.einsum("kctd,...kc->...td", Y, s)


def excess(y: np.ndarray, v: np.ndarray, s: np.ndarray) -> float | np.ndarray:
    """Excess function ``F(y, v, s) = max_{t,d} (L[t,d] - v[t,d])``.

    ``y`` is either the ``(K, C, T, D)`` tensor or its flat vector. Batched
    ``s`` of shape ``(N, K, C)`` returns an array of ``N`` values.
    """
    v = np.asarray(v, dtype=float)
    s = np.asarray(s, dtype=float)
    y = np.asarray(y, dtype=float)
    if v.ndim != 2 or s.ndim < 2:
        raise ValueError(f"shape mismatch: v {v.shape}, s {s.shape}")
    dims = (*s.shape[-2:], *v.shape)
    if y.ndim == 1:
        if y.size != np.prod(dims):
            raise ValueError(f"flat schedule has {y.size} entries, expected {np.prod(dims)}")
        y = tensor_schedule(y, dims)
    elif y.shape != dims:
        raise ValueError(f"shape mismatch: Y {y.shape} vs expected {dims}")
    gap = aggregate_load(y, s) - v
    out = gap.reshape(*gap.shape[:-2], -1).max(axis=-1)
    return float(out) if out.ndim == 0 else out


def plan_cost(v: np.ndarray, config: ProblemConfig) -> float:
    """Carbon term plus per-cluster peak term of a VCC (or any ``(T, D)`` load)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (config.T, config.D):
        raise ValueError(f"v has shape {v.shape}, expected {(config.T, config.D)}")
    if (v < -BOUND_TOL).any():
        raise ValueError("v must be nonnegative")
    return float(np.sum(config.carbon_price * v) + np.sum(config.infra_price * v.max(axis=0)))


def validate_strategy(Y: np.ndarray, v: np.ndarray, config: ProblemConfig) -> list[Violation]:
    """List every violated deterministic constraint of ``(Y, v)``; empty means feasible."""
    Y = np.asarray(Y, dtype=float)
    v = np.asarray(v, dtype=float)
    report: list[Violation] = []
    if Y.shape != config.dims:
        return [Violation("shape", ("Y",), float("nan"))]
    if v.shape != (config.T, config.D):
        return [Violation("shape", ("v",), float("nan"))]
    mask = config.window_mask
    for k, c, t, d in np.argwhere(~mask & (Y != 0)):
        report.append(Violation("outside_window", (k + 1, c + 1, t + 1, d + 1), float(Y[k, c, t, d])))
    for k, c, t, d in np.argwhere(Y < 0):
        report.append(Violation("negative", (k + 1, c + 1, t + 1, d + 1), float(Y[k, c, t, d])))
    cover = Y.sum(axis=(2, 3))
    for k, c in np.argwhere(cover < 1 - COVERAGE_TOL):
        report.append(Violation("coverage", (k + 1, c + 1), float(1 - cover[k, c])))
    for t, d in np.argwhere(v < -BOUND_TOL):
        report.append(Violation("vcc_negative", (t + 1, d + 1), float(v[t, d])))
    over = v - config.true_capacity
    for t, d in np.argwhere(over > BOUND_TOL):
        report.append(Violation("capacity", (t + 1, d + 1), float(over[t, d])))
    return report


def coverage_sums(Y: np.ndarray) -> np.ndarray:
    """Per ``(k, c)`` totals of the schedule; values above 1 expose over-allocation."""
    return np.asarray(Y).sum(axis=(2, 3))


def reachable_cells(config: ProblemConfig) -> np.ndarray:
    """Boolean ``(T, D)`` mask of execution cells reachable by at least one class."""
    return config.window_mask.any(axis=(0, 1))

