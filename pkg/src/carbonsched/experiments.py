"""Experiment drivers shared by the CLI, scripts and the acceptance suite."""

from __future__ import annotations

import numpy as np

from carbonsched.core import ProblemConfig, aggregate_load
from carbonsched.planner import Plan, plan_perfect_forecast, plan_with_tier
from carbonsched.scenarios import SampleSet, generate_job_stream
from carbonsched.sim import simulate_day

COMPARE_COLUMNS = ("scenario_id", "oracle_cost", "dro_cost", "greedy_cost", "dro_pct", "greedy_pct")
SWEEP_COLUMNS = (
    "param",
    "value",
    "objective",
    "validation_violations",
    "scenarios_violated",
    "max_violation",
    "train_violation_rate",
)
VIOLATION_TOL = 1e-9


def stream_seed(seed: int, scenario_id: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(scenario_id)]).generate_state(1)[0])


def compare_policies(
    config: ProblemConfig,
    plan: Plan,
    validation: SampleSet,
    jobs_per_cell: int = 20,
    sigma_rel: float = 0.1,
    seed: int = 0,
) -> list[dict]:
    """Realized cost of tracking and greedy placement against the perfect-forecast oracle.

    Both policies run in soft mode on the same job stream per scenario;
    greedy is checked against the true capacity.
    """
    rows = []
    for sid, scenario in zip(validation.ids, validation.values):
        oracle = plan_perfect_forecast(config, scenario)
        stream = generate_job_stream(scenario, jobs_per_cell, sigma_rel, stream_seed(seed, sid))
        dro = simulate_day(stream, "tracking", "soft", plan.vcc, config, plan.schedule)
        greedy = simulate_day(stream, "greedy", "soft", config.true_capacity, config)
        rows.append(
            {
                "scenario_id": sid,
                "oracle_cost": oracle.objective,
                "dro_cost": dro.realized_cost,
                "greedy_cost": greedy.realized_cost,
                "dro_pct": 100.0 * (dro.realized_cost - oracle.objective) / oracle.objective,
                "greedy_pct": 100.0 * (greedy.realized_cost - oracle.objective) / oracle.objective,
            }
        )
    return rows


def summarize_comparison(rows: list[dict]) -> dict:
    dro = np.array([r["dro_pct"] for r in rows])
    greedy = np.array([r["greedy_pct"] for r in rows])
    return {
        "scenarios": len(rows),
        "dro_pct_mean": float(dro.mean()),
        "dro_pct_std": float(dro.std(ddof=1)) if dro.size > 1 else 0.0,
        "greedy_pct_mean": float(greedy.mean()),
        "greedy_pct_std": float(greedy.std(ddof=1)) if greedy.size > 1 else 0.0,
        "oracle_le_dro_all": bool(all(r["oracle_cost"] <= r["dro_cost"] + 1e-9 for r in rows)),
    }


def vcc_violations(plan: Plan, samples) -> tuple[int, int, float]:
    """Count of ``(scenario, t, d)`` cells where the allocated load tops the VCC.

    Returns ``(cells violated, scenarios with any violation, largest excess)``.
    """
    L = aggregate_load(plan.schedule, np.asarray(samples, dtype=float))
    gap = L - plan.vcc[None]
    hit = gap > VIOLATION_TOL
    return int(hit.sum()), int(hit.any(axis=(1, 2)).sum()), float(max(gap.max(), 0.0))


def sweep(
    config: ProblemConfig,
    train: SampleSet,
    validation: SampleSet | None,
    param: str,
    grid,
    tier: str = "full",
    margin: float = 0.5,
) -> tuple[list[dict], dict[float, Plan]]:
    if param not in ("beta", "epsilon"):
        raise ValueError(f"can only sweep beta or epsilon, not {param!r}")
    grid = [float(x) for x in grid]
    if not grid:
        raise ValueError("sweep grid is empty")
    rows, plans = [], {}
    for value in grid:
        cfg = config.with_risk(**{param: value})
        plan = plan_with_tier(cfg, train.values, tier=tier, margin=margin)
        plans[value] = plan
        train_cells, train_scen, _ = vcc_violations(plan, train.values)
        row = {
            "param": param,
            "value": value,
            "objective": plan.objective,
            "validation_violations": 0,
            "scenarios_violated": 0,
            "max_violation": 0.0,
            "train_violation_rate": train_scen / len(train),
        }
        if validation is not None:
            cells, scen, worst = vcc_violations(plan, validation.values)
            row.update(validation_violations=cells, scenarios_violated=scen, max_violation=worst)
        rows.append(row)
    return rows, plans


def monotonicity(values, increasing: bool, rel_tol: float = 1e-7) -> bool:
    values = list(values)
    for a, b in zip(values, values[1:]):
        slack = rel_tol * max(1.0, abs(a))
        if increasing and b < a - slack:
            return False
        if not increasing and b > a + slack:
            return False
    return True
