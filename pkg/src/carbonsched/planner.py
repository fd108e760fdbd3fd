"""Day-ahead planning: the Wasserstein-DRO CVaR LP, its SAA and perfect-forecast variants.

The DRO model keeps a single CVaR threshold ``q``, a Lipschitz multiplier
``lam``, one epigraph variable ``p[i]`` per sample and, for every sample and
reachable execution cell, a multiplier vector ``eta[i, t, d]`` on the support
polyhedron. Schedule entries outside a class's time window or spatial range
are never created as variables.

Tiers
-----
``full``          box support, exact model.
``reduced``       sum-form support (``g = KC + 1``), exact model for that support.
``conservative``  ``eta`` fixed to zero; a restriction of the exact model, so
                  its optimum is an upper bound and its plans stay certified.
``compact``       box support, exact. For ``G = [-I; I]`` the multiplier
                  problem separates per load coordinate and its minimizer
                  ``nu = (Y - lam)_+`` is shared by all samples, so one
                  variable ``w >= Y - lam`` per schedule cell replaces every
                  ``eta[i, t, d]``. The full ``eta`` is rebuilt for the
                  certificate.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from carbonsched.core import (
    ProblemConfig,
    Violation,
    aggregate_load,
    excess,
    flat_loads,
    plan_cost,
    validate_strategy,
)
from carbonsched.lp import GE, LE, LpModel, Status, solve_lp
from carbonsched.risk import SupportSet, build_support_set, empirical_cvar

log = logging.getLogger(__name__)

TIERS = ("full", "reduced", "conservative", "compact")
CERT_TOL = 1e-6


class InfeasibleError(Exception):
    """The planning problem has no feasible point; ``details`` names the cause."""

    def __init__(self, reason: str, **details):
        self.reason = reason
        self.details = details
        extra = ", ".join(f"{k}={v}" for k, v in details.items())
        super().__init__(f"infeasible: {reason}" + (f" ({extra})" if extra else ""))


class SolverError(RuntimeError):
    def __init__(self, status: Status, message: str = ""):
        self.status = status
        super().__init__(f"LP solver returned {status.value}: {message}")


@dataclass
class Certificate:
    q: float
    lam: float
    p: np.ndarray
    eta: np.ndarray | None = None


@dataclass
class Plan:
    """Solved schedule ``(K, C, T, D)``, VCC ``(T, D)``, cost ``f(v)`` and LP certificate."""

    schedule: np.ndarray
    vcc: np.ndarray
    objective: float
    certificate: Certificate | None = None
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class Layout:
    """Index bookkeeping for the admissible schedule cells (all 0-based)."""

    dims: tuple[int, int, int, int]
    cells: np.ndarray
    cell_kc: np.ndarray
    cell_td: np.ndarray
    reach_td: np.ndarray
    unreach_td: np.ndarray
    td_pos: np.ndarray

    @property
    def n_y(self) -> int:
        return self.cells.shape[0]


def schedule_layout(config: ProblemConfig) -> Layout:
    K, C, T, D = config.dims
    mask = config.window_mask
    empty = np.argwhere(~mask.any(axis=(2, 3)))
    if empty.size:
        k, c = empty[0]
        raise InfeasibleError("no admissible execution cell", k=int(k) + 1, c=int(c) + 1)
    # (d, t, c, k) lexicographic order equals the ascending flat index r.
    d, t, c, k = np.nonzero(mask.transpose(3, 2, 1, 0))
    cells = np.column_stack([k, c, t, d])
    cell_td = t * D + d
    reach = np.zeros(T * D, dtype=bool)
    reach[cell_td] = True
    reach_td = np.flatnonzero(reach)
    td_pos = np.full(T * D, -1)
    td_pos[reach_td] = np.arange(reach_td.size)
    return Layout(
        dims=(K, C, T, D),
        cells=cells,
        cell_kc=k + K * c,
        cell_td=cell_td,
        reach_td=reach_td,
        unreach_td=np.flatnonzero(~reach),
        td_pos=td_pos,
    )


class _Rows:
    """Accumulates COO triplets and row metadata."""

    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []
        self.sense, self.rhs = [], []
        self.blocks: dict[str, slice] = {}
        self.n = 0

    def add_block(self, name: str, count: int, sense: int, rhs) -> int:
        start = self.n
        self.n += count
        self.blocks[name] = slice(start, self.n)
        self.sense.append(np.full(count, sense, dtype=np.int8))
        self.rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (count,)))
        return start

    def add(self, rows, cols, vals):
        rows, cols, vals = np.broadcast_arrays(np.asarray(rows), np.asarray(cols), np.asarray(vals, dtype=float))
        self.rows.append(rows.ravel())
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())

    def matrix(self, n_vars: int) -> sp.csr_matrix:
        rows = np.concatenate(self.rows) if self.rows else np.zeros(0, int)
        cols = np.concatenate(self.cols) if self.cols else np.zeros(0, int)
        vals = np.concatenate(self.vals) if self.vals else np.zeros(0)
        return sp.coo_matrix((vals, (rows, cols)), shape=(self.n, n_vars)).tocsr()


def _check_samples(config: ProblemConfig, samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 2:
        samples = samples[None]
    if samples.ndim != 3 or samples.shape[0] == 0:
        raise ValueError("samples must be a nonempty (N, K, C) array")
    if samples.shape[1:] != (config.K, config.C):
        raise ValueError(f"samples have shape {samples.shape[1:]}, expected {(config.K, config.C)}")
    if (samples < 0).any():
        raise ValueError("samples must be nonnegative")
    return samples


def _add_common(rows: _Rows, layout: Layout, oy: int, ov: int, opi: int, config: ProblemConfig):
    K, C, T, D = layout.dims
    start = rows.add_block("coverage", K * C, GE, 1.0)
    rows.add(start + layout.cell_kc, oy + np.arange(layout.n_y), 1.0)
    start = rows.add_block("peak", T * D, LE, 0.0)
    td = np.arange(T * D)
    rows.add(start + td, ov + td, 1.0)
    rows.add(start + td, opi + td % D, -1.0)


def build_dro_lp(
    config: ProblemConfig,
    samples,
    support: SupportSet | None,
    conservative: bool = False,
    compact: bool = False,
) -> LpModel:
    """Assemble the distributionally robust LP for ``config.beta`` and ``config.epsilon``.

    With ``conservative=True`` the support multipliers are fixed at zero and
    ``support`` may be ``None``. ``compact=True`` needs a box support built by
    ``build_support_set`` and replaces the multipliers by one shared ``w`` per
    schedule cell.
    """
    samples = _check_samples(config, samples)
    if conservative and compact:
        raise ValueError("conservative and compact are exclusive")
    if support is None and not conservative:
        raise ValueError("the exact model needs a support set")
    upper = _box_upper(support, config) if compact else None
    if support is not None:
        if support.shape != (config.K, config.C):
            raise ValueError(f"support is over {support.shape}, expected {(config.K, config.C)}")
        inside = support.contains(samples, tol=1e-12)
        if not inside.all():
            raise ValueError(f"sample {int(np.flatnonzero(~inside)[0])} lies outside the support set")

    layout = schedule_layout(config)
    K, C, T, D = layout.dims
    N = samples.shape[0]
    KC, TD = K * C, T * D
    n_y, Tf, Tu = layout.n_y, layout.reach_td.size, layout.unreach_td.size
    g = 0 if conservative or compact else support.g
    B = N * Tf
    S = flat_loads(samples)

    oy = 0
    ov = oy + n_y
    oq = ov + TD
    olam = oq + 1
    op = olam + 1
    opi = op + N
    oeta = opi + D
    n_vars = oeta + (n_y if compact else B * g)
    blocks = {
        "y": slice(oy, ov),
        "v": slice(ov, oq),
        "q": slice(oq, olam),
        "lam": slice(olam, op),
        "p": slice(op, opi),
        "pi": slice(opi, oeta),
        ("w" if compact else "eta"): slice(oeta, n_vars),
    }

    rows = _Rows()
    start = rows.add_block("budget", 1, LE, 0.0)
    rows.add([start] * (N + 2), [olam, oq, *range(op, op + N)], [config.epsilon, -config.beta, *([1.0 / N] * N)])

    # v'b + q + (a - G'eta)'s + eta'h <= p   for sample i and reachable cell j
    start = rows.add_block("pospart", B, LE, 0.0)
    block_id = np.arange(B)
    i_of_b, j_of_b = np.divmod(block_id, Tf)
    rows.add(start + block_id, ov + layout.reach_td[j_of_b], -1.0)
    rows.add(start + block_id, oq, 1.0)
    rows.add(start + block_id, op + i_of_b, -1.0)
    j_m = layout.td_pos[layout.cell_td]
    y_rows = np.arange(N)[:, None] * Tf + j_m[None, :]
    rows.add(start + y_rows, np.broadcast_to(oy + np.arange(n_y), y_rows.shape), S[:, layout.cell_kc])
    if g:
        slack = support.slack(samples)
        eta_cols = oeta + block_id[:, None] * g + np.arange(g)[None, :]
        rows.add(np.broadcast_to(start + block_id[:, None], eta_cols.shape), eta_cols, np.repeat(slack, Tf, axis=0))
    if compact:
        # cheapest multiplier cost sum_kc w (u - s), w >= (Y - lam)_+
        w_vals = upper[layout.cell_kc][None, :] - S[:, layout.cell_kc]
        rows.add(start + y_rows, np.broadcast_to(oeta + np.arange(n_y), y_rows.shape), w_vals)

    # Unreachable cells carry no load, so the cheapest multiplier is zero.
    if Tu:
        start = rows.add_block("pospart_unreached", N * Tu, LE, 0.0)
        uid = np.arange(N * Tu)
        i_of_u, u = np.divmod(uid, Tu)
        rows.add(start + uid, ov + layout.unreach_td[u], -1.0)
        rows.add(start + uid, oq, 1.0)
        rows.add(start + uid, op + i_of_u, -1.0)

    # |a_td - G'eta|_inf <= lam, two one-sided rows per load coordinate
    if g:
        GT = sp.csr_matrix(support.G.T)
        kron = sp.kron(sp.identity(B, format="csr"), GT, format="coo")
        for name, sign in (("dualnorm_plus", 1.0), ("dualnorm_minus", -1.0)):
            start = rows.add_block(name, B * KC, LE, 0.0)
            rows.add(start + kron.row, oeta + kron.col, -sign * kron.data)
            y_norm_rows = y_rows * KC + layout.cell_kc[None, :]
            rows.add(start + y_norm_rows, np.broadcast_to(oy + np.arange(n_y), y_norm_rows.shape), sign)
            rows.add(start + np.arange(B * KC), olam, -1.0)
    else:
        start = rows.add_block("dualnorm", n_y, LE, 0.0)
        rows.add(start + np.arange(n_y), oy + np.arange(n_y), 1.0)
        rows.add(start + np.arange(n_y), olam, -1.0)
        if compact:
            rows.add(start + np.arange(n_y), oeta + np.arange(n_y), -1.0)

    _add_common(rows, layout, oy, ov, opi, config)

    cost = np.zeros(n_vars)
    cost[blocks["v"]] = config.carbon_price.ravel()
    cost[blocks["pi"]] = config.infra_price
    lb = np.zeros(n_vars)
    ub = np.full(n_vars, np.inf)
    ub[blocks["v"]] = config.true_capacity.ravel()
    lb[blocks["q"]] = -np.inf

    return LpModel(
        c=cost,
        A=rows.matrix(n_vars),
        sense=np.concatenate(rows.sense),
        rhs=np.concatenate(rows.rhs),
        lb=lb,
        ub=ub,
        blocks=blocks,
        row_blocks=rows.blocks,
        meta={
            "kind": "dro",
            "layout": layout,
            "N": N,
            "g": g,
            "conservative": conservative,
            "compact": compact,
            "beta": config.beta,
            "epsilon": config.epsilon,
        },
    )


def _box_upper(support: SupportSet | None, config: ProblemConfig) -> np.ndarray:
    """Upper bounds ``u`` of a support ``{0 <= s <= u}`` in the ``[-I; I]`` layout, else ValueError."""
    n = config.K * config.C
    if support is None or support.g != 2 * n:
        raise ValueError("the compact model needs a box support with G = [-I; I]")
    eye = np.eye(n)
    if not (np.array_equal(support.G, np.vstack([-eye, eye])) and not support.h[:n].any()):
        raise ValueError("the compact model needs a box support with G = [-I; I] and zero lower bounds")
    return support.h[n:]


def _solve(model: LpModel, solver_options, what: str) -> "tuple[np.ndarray, float, float, float]":
    sol = solve_lp(model, solver_options)
    if sol.status is Status.INFEASIBLE:
        raise InfeasibleError(f"{what} LP is infeasible (capacities too tight for the load)")
    if sol.status is not Status.OPTIMAL:
        raise SolverError(sol.status, sol.message)
    return sol.x, sol.objective, sol.residual, sol.wall_time


def _decode_schedule(model: LpModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    layout: Layout = model.meta["layout"]
    K, C, T, D = layout.dims
    Y = np.zeros(layout.dims)
    k, c, t, d = layout.cells.T
    Y[k, c, t, d] = model.block(x, "y")
    v = model.block(x, "v").reshape(T, D).copy()
    return Y, v


def plan_day_ahead(
    config: ProblemConfig,
    samples,
    support: SupportSet | None,
    *,
    conservative: bool = False,
    compact: bool = False,
    solver_options: dict | None = None,
    tier: str | None = None,
) -> Plan:
    """Solve the DRO day-ahead problem and return the schedule, VCCs and certificate."""
    samples = _check_samples(config, samples)
    t0 = time.perf_counter()
    model = build_dro_lp(config, samples, support, conservative=conservative, compact=compact)
    build_time = time.perf_counter() - t0
    x, lp_obj, residual, solve_time = _solve(model, solver_options, "DRO")
    Y, v = _decode_schedule(model, x)
    layout: Layout = model.meta["layout"]
    N, g = model.meta["N"], model.meta["g"]
    K, C, T, D = layout.dims
    eta = None
    if g:
        eta = np.zeros((N, T * D, g))
        eta[:, layout.reach_td, :] = model.block(x, "eta").reshape(N, layout.reach_td.size, g)
        eta = eta.reshape(N, T, D, g)
    lam = float(model.block(x, "lam")[0])
    if compact:
        # nu = min(w, Y + lam) on the upper rows, mu = 0; identical for every sample
        KC = K * C
        w = model.block(x, "w")
        nu = np.zeros((T * D, KC))
        nu[layout.cell_td, layout.cell_kc] = np.minimum(np.maximum(w, 0.0), model.block(x, "y") + lam)
        eta = np.zeros((N, T * D, 2 * KC))
        eta[:, :, KC:] = nu[None]
        eta = eta.reshape(N, T, D, 2 * KC)
        g = 2 * KC
    cert = Certificate(
        q=float(model.block(x, "q")[0]),
        lam=lam,
        p=model.block(x, "p").copy(),
        eta=eta,
    )
    excess_values = excess(Y, v, samples)
    meta = {
        "kind": "dro",
        "tier": tier or ("conservative" if conservative else "compact" if compact else "full"),
        "beta": config.beta,
        "epsilon": config.epsilon,
        "N": N,
        "g": g,
        "status": Status.OPTIMAL.value,
        "lp_objective": lp_obj,
        "residual": residual,
        "n_vars": model.n_vars,
        "n_rows": model.n_rows,
        "build_time": build_time,
        "wall_time": build_time + solve_time,
        "excess_cvar": empirical_cvar(excess_values, config.beta),
    }
    log.debug("DRO plan solved: %d vars, %d rows, %.2fs", model.n_vars, model.n_rows, meta["wall_time"])
    return Plan(Y, v, plan_cost(np.maximum(v, 0.0), config), cert, meta)


def plan_saa(config: ProblemConfig, samples, *, solver_options: dict | None = None) -> Plan:
    """Sample average approximation: the DRO problem with radius zero."""
    plan = plan_day_ahead(
        config.with_risk(epsilon=0.0), samples, None, conservative=True, solver_options=solver_options
    )
    plan.meta["kind"] = "saa"
    plan.meta["tier"] = "saa"
    return plan


def support_for_tier(samples, tier: str, margin: float = 0.5) -> SupportSet | None:
    if tier not in TIERS:
        raise ValueError(f"unknown tier {tier!r}; choose from {TIERS}")
    if tier == "conservative":
        return None
    return build_support_set(samples, margin, kind="sum" if tier == "reduced" else "box")


def plan_with_tier(
    config: ProblemConfig,
    samples,
    tier: str = "full",
    margin: float = 0.5,
    solver_options: dict | None = None,
) -> Plan:
    support = support_for_tier(samples, tier, margin)
    return plan_day_ahead(
        config,
        samples,
        support,
        conservative=tier == "conservative",
        compact=tier == "compact",
        solver_options=solver_options,
        tier=tier,
    )


def build_oracle_lp(config: ProblemConfig, scenario) -> LpModel:
    """Deterministic LP for a known load: ``min f(v)`` s.t. ``L(Y, s) <= v``."""
    scenario = _check_samples(config, scenario)[0]
    layout = schedule_layout(config)
    K, C, T, D = layout.dims
    TD = T * D
    oy, ov = 0, layout.n_y
    opi = ov + TD
    n_vars = opi + D
    rows = _Rows()
    Tf = layout.reach_td.size
    start = rows.add_block("capacity", Tf, LE, 0.0)
    j_m = layout.td_pos[layout.cell_td]
    rows.add(start + j_m, oy + np.arange(layout.n_y), flat_loads(scenario)[layout.cell_kc])
    rows.add(start + np.arange(Tf), ov + layout.reach_td, -1.0)
    _add_common(rows, layout, oy, ov, opi, config)
    cost = np.zeros(n_vars)
    cost[ov:opi] = config.carbon_price.ravel()
    cost[opi:] = config.infra_price
    ub = np.full(n_vars, np.inf)
    ub[ov:opi] = config.true_capacity.ravel()
    return LpModel(
        c=cost,
        A=rows.matrix(n_vars),
        sense=np.concatenate(rows.sense),
        rhs=np.concatenate(rows.rhs),
        lb=np.zeros(n_vars),
        ub=ub,
        blocks={"y": slice(oy, ov), "v": slice(ov, opi), "pi": slice(opi, n_vars)},
        row_blocks=rows.blocks,
        meta={"kind": "oracle", "layout": layout},
    )


def plan_perfect_forecast(config: ProblemConfig, scenario, *, solver_options: dict | None = None) -> Plan:
    """Lower-bound plan computed with full knowledge of the realized load."""
    model = build_oracle_lp(config, scenario)
    try:
        x, lp_obj, residual, solve_time = _solve(model, solver_options, "perfect-forecast")
    except InfeasibleError as err:
        raise InfeasibleError("scenario exceeds the true capacity in every admissible arrangement") from err
    Y, v = _decode_schedule(model, x)
    meta = {
        "kind": "oracle",
        "tier": "oracle",
        "status": Status.OPTIMAL.value,
        "lp_objective": lp_obj,
        "residual": residual,
        "wall_time": solve_time,
        "N": 1,
    }
    return Plan(Y, v, plan_cost(np.maximum(v, 0.0), config), None, meta)


def verify_certificate(
    plan: Plan,
    samples,
    support: SupportSet | None,
    config: ProblemConfig,
    tol: float = CERT_TOL,
) -> list[Violation]:
    """Re-check every DRO LP row at the plan's values without touching the solver.

    Uses the plan's own ``beta``/``epsilon`` when recorded. A missing ``eta``
    (SAA or conservative tier) is treated as zero. Empty report means certified.
    """
    samples = _check_samples(config, samples)
    Y, v = np.asarray(plan.schedule, dtype=float), np.asarray(plan.vcc, dtype=float)
    beta = plan.meta.get("beta", config.beta)
    eps = plan.meta.get("epsilon", config.epsilon)
    report = validate_strategy(Y, v, config)
    if report and any(r.kind == "shape" for r in report):
        return report

    if "lp_objective" in plan.meta:
        ref = plan_cost(np.maximum(v, 0.0), config)
        if abs(plan.meta["lp_objective"] - ref) > tol * max(1.0, abs(ref)):
            report.append(Violation("objective", (), plan.meta["lp_objective"] - ref))
    if abs(plan.objective - plan_cost(np.maximum(v, 0.0), config)) > tol * max(1.0, abs(plan.objective)):
        report.append(Violation("objective", (), plan.objective))

    F = excess(Y, v, samples)
    cvar = empirical_cvar(F, beta)
    if cvar > tol:
        report.append(Violation("cvar", (), cvar))

    cert = plan.certificate
    if cert is None:
        return report
    N = samples.shape[0]
    K, C, T, D = config.dims
    p = np.asarray(cert.p, dtype=float)
    if p.shape != (N,):
        report.append(Violation("shape", ("p",), float(p.size)))
        return report
    if cert.lam < -tol:
        report.append(Violation("lambda_negative", (), cert.lam))
    for i in np.flatnonzero(p < -tol):
        report.append(Violation("p_negative", (int(i) + 1,), float(p[i])))

    budget = cert.lam * eps + p.mean() - cert.q * beta
    if budget > tol:
        report.append(Violation("budget", (), float(budget)))

    L = aggregate_load(Y, samples)
    lhs = -v[None] + cert.q + L - p[:, None, None]
    a = flat_loads(Y.transpose(2, 3, 0, 1))
    if cert.eta is not None:
        if support is None:
            raise ValueError("a certificate with support multipliers needs the support set")
        eta = np.asarray(cert.eta, dtype=float)
        for idx in np.argwhere(eta < -tol)[:10]:
            i, t, d, _ = idx
            report.append(Violation("eta_negative", (i + 1, t + 1, d + 1), float(eta[tuple(idx)])))
        lhs = lhs + np.einsum("ntdg,ng->ntd", eta, support.slack(samples))
        dual = np.abs(a[None] - np.einsum("ntdg,gj->ntdj", eta, support.G)).max(axis=-1)
    else:
        dual = np.broadcast_to(np.abs(a).max(axis=-1), (N, T, D))
    for i, t, d in np.argwhere(lhs > tol):
        report.append(Violation("positive_part", (i + 1, t + 1, d + 1), float(lhs[i, t, d])))
    for i, t, d in np.argwhere(dual - cert.lam > tol):
        report.append(Violation("dual_norm", (i + 1, t + 1, d + 1), float(dual[i, t, d] - cert.lam)))
    return report
