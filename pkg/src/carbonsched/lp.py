"""Backend-neutral sparse LP container and the solver adapter.

Models are stored as ``min c^T x`` subject to ``A x (sense) rhs`` and
``lb <= x <= ub``. The adapter hands the model to HiGHS through
:func:`scipy.optimize.linprog` and re-checks primal feasibility itself, so a
backend switch cannot silently change semantics.

The HiGHS variant is picked with the ``CARBONSCHED_LP_METHOD`` environment
variable (``highs``, ``highs-ds`` or ``highs-ipm``).
"""

from __future__ import annotations

import enum
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

log = logging.getLogger(__name__)

LE, EQ, GE = -1, 0, 1
RESIDUAL_TOL = 1e-6
METHOD_ENV = "CARBONSCHED_LP_METHOD"

DEFAULT_OPTIONS = {
    "primal_feasibility_tolerance": 1e-9,
    "dual_feasibility_tolerance": 1e-9,
}


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"
    INACCURATE = "inaccurate"
    ERROR = "error"


@dataclass
class LpModel:
    """Sparse LP with named variable and row blocks.

    ``blocks`` and ``row_blocks`` map a name (``"y"``, ``"v"``, ``"eta"``,
    ``"budget"``, ...) to the slice it occupies. ``meta`` carries whatever
    layout information the builder needs to decode a solution.
    """

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    blocks: dict[str, slice] = field(default_factory=dict)
    row_blocks: dict[str, slice] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.A = sp.csr_matrix(self.A)
        self.sense = np.asarray(self.sense, dtype=np.int8)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        n, m = self.n_vars, self.n_rows
        if self.A.shape != (m, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {(m, n)}")
        for name, arr, size in (
            ("sense", self.sense, m),
            ("rhs", self.rhs, m),
            ("lb", self.lb, n),
            ("ub", self.ub, n),
        ):
            if arr.shape != (size,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({size},)")
        if (self.lb > self.ub).any():
            j = int(np.flatnonzero(self.lb > self.ub)[0])
            raise ValueError(f"inconsistent bounds on {self.var_name(j)}")
        if not np.isin(self.sense, (LE, EQ, GE)).all():
            raise ValueError("row senses must be LE, EQ or GE")

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size

    def var_name(self, j: int) -> str:
        for name, sl in self.blocks.items():
            if sl.start <= j < sl.stop:
                return f"{name}[{j - sl.start}]"
        return f"x[{j}]"

    def row_name(self, i: int) -> str:
        for name, sl in self.row_blocks.items():
            if sl.start <= i < sl.stop:
                return f"{name}[{i - sl.start}]"
        return f"r[{i}]"

    def block(self, x: np.ndarray, name: str) -> np.ndarray:
        return x[self.blocks[name]]

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row primal violation (0 when satisfied)."""
        ax = self.A @ x
        gap = np.zeros_like(ax)
        le = self.sense == LE
        ge = self.sense == GE
        eq = self.sense == EQ
        gap[le] = np.maximum(ax[le] - self.rhs[le], 0.0)
        gap[ge] = np.maximum(self.rhs[ge] - ax[ge], 0.0)
        gap[eq] = np.abs(ax[eq] - self.rhs[eq])
        return gap

    def max_residual(self, x: np.ndarray) -> float:
        rows = self.residuals(x)
        bounds = np.maximum(np.maximum(self.lb - x, x - self.ub), 0.0)
        return float(max(rows.max(initial=0.0), bounds.max(initial=0.0)))

    def write_lp(self, path) -> None:
        """Export in CPLEX LP text format for cross-checks against external solvers."""
        names = [_lp_name(self.var_name(j)) for j in range(self.n_vars)]
        ops = {LE: "<=", EQ: "=", GE: ">="}
        A = self.A.tocsr()
        with open(path, "w") as fh:
            fh.write("Minimize\n obj:")
            fh.write(_lp_expr(np.flatnonzero(self.c), self.c, names))
            fh.write("\nSubject To\n")
            for i in range(self.n_rows):
                lo, hi = A.indptr[i], A.indptr[i + 1]
                cols, vals = A.indices[lo:hi], A.data[lo:hi]
                expr = _lp_expr(np.arange(cols.size), vals, [names[j] for j in cols]) or f" 0 {names[0]}"
                fh.write(f" {_lp_name(self.row_name(i))}:{expr} {ops[int(self.sense[i])]} {float(self.rhs[i])!r}\n")
            fh.write("Bounds\n")
            for j in range(self.n_vars):
                lo, hi = self.lb[j], self.ub[j]
                lo_s = "-inf" if np.isneginf(lo) else repr(float(lo))
                hi_s = "+inf" if np.isposinf(hi) else repr(float(hi))
                fh.write(f" {lo_s} <= {names[j]} <= {hi_s}\n")
            fh.write("End\n")


def _lp_name(name: str) -> str:
    return name.replace("[", "_").replace("]", "")


def _lp_expr(idx, vals, names) -> str:
    parts = []
    for j in idx:
        val = float(vals[j])
        sign = "-" if val < 0 else "+"
        parts.append(f" {sign} {abs(val)!r} {names[j]}")
    return "".join(parts)


@dataclass
class LpSolution:
    status: Status
    x: np.ndarray | None
    objective: float | None
    residual: float | None
    message: str = ""
    wall_time: float = 0.0


_STATUS_MAP = {
    0: Status.OPTIMAL,
    1: Status.LIMIT,
    2: Status.INFEASIBLE,
    3: Status.UNBOUNDED,
    4: Status.ERROR,
}


def solve_lp(model: LpModel, solver_options: dict | None = None, method: str | None = None) -> LpSolution:
    """Solve ``model`` and verify primal residuals independently of the backend.

    An optimal answer whose residual exceeds ``RESIDUAL_TOL`` is reported as
    ``Status.INACCURATE`` and carries no values.
    """
    method = method or os.environ.get(METHOD_ENV, "highs")
    options = {**DEFAULT_OPTIONS, **(solver_options or {})}
    le = model.sense == LE
    ge = model.sense == GE
    eq = model.sense == EQ
    A = model.A
    A_ub = sp.vstack([A[le], -A[ge]]).tocsr() if (le.any() or ge.any()) else None
    b_ub = np.concatenate([model.rhs[le], -model.rhs[ge]]) if A_ub is not None else None
    A_eq = A[eq] if eq.any() else None
    b_eq = model.rhs[eq] if eq.any() else None
    bounds = np.column_stack([model.lb, model.ub])

    start = time.perf_counter()
    try:
        res = linprog(
            model.c,
            A_ub=A_ub,
            b_ub=b_ub,
            A_eq=A_eq,
            b_eq=b_eq,
            bounds=bounds,
            method=method,
            options=options,
        )
    except (ValueError, MemoryError) as err:
        return LpSolution(Status.ERROR, None, None, None, str(err), time.perf_counter() - start)
    elapsed = time.perf_counter() - start

    status = _STATUS_MAP.get(res.status, Status.ERROR)
    if status is not Status.OPTIMAL:
        log.info("LP finished with status %s: %s", status.value, res.message)
        return LpSolution(status, None, None, None, res.message, elapsed)
    x = np.asarray(res.x, dtype=float)
    residual = model.max_residual(x)
    if residual > RESIDUAL_TOL:
        return LpSolution(
            Status.INACCURATE, None, None, residual, f"primal residual {residual:.3g}", elapsed
        )
    return LpSolution(status, x, float(model.c @ x), residual, res.message, elapsed)
