"""Tracking vs greedy on the two-data-center fleet, one row per tier.

    python3 scripts/run_policy_comparison.py --tiers conservative compact --out runs/compare
"""

import argparse
import time
from pathlib import Path

from carbonsched import io as cio
from carbonsched.experiments import COMPARE_COLUMNS, compare_policies, summarize_comparison
from carbonsched.fleets import twodc_fleet
from carbonsched.planner import TIERS, plan_with_tier
from carbonsched.scenarios import generate_load_samples, split_train_validation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tiers", nargs="+", choices=TIERS, default=["conservative", "compact"])
    ap.add_argument("--epsilon", type=float, nargs="+", default=[8e-3])
    ap.add_argument("--n", type=int, default=75)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/compare"))
    args = ap.parse_args()

    config, spec = twodc_fleet(seed=args.seed)
    train, val = split_train_validation(generate_load_samples(spec, args.n), 0.8, seed=args.seed)
    table = []
    for tier in args.tiers:
        for eps in args.epsilon:
            cfg = config.with_risk(epsilon=eps)
            t0 = time.perf_counter()
            plan = plan_with_tier(cfg, train.values, tier=tier)
            rows = compare_policies(cfg, plan, val, spec.jobs_per_cell, 0.1, args.seed)
            s = summarize_comparison(rows)
            cio.write_table(args.out / f"{tier}_{eps:g}.csv", COMPARE_COLUMNS, rows)
            table.append({"tier": tier, "epsilon": eps, "plan_cost": plan.objective, **s,
                          "seconds": time.perf_counter() - t0})
            print(f"{tier:12s} eps={eps:<8g} plan {plan.objective:.4f}  DRO +{s['dro_pct_mean']:.2f}% "
                  f"({s['dro_pct_std']:.2f})  greedy +{s['greedy_pct_mean']:.2f}% ({s['greedy_pct_std']:.2f})")
    cols = ("tier", "epsilon", "plan_cost", "dro_pct_mean", "dro_pct_std", "greedy_pct_mean",
            "greedy_pct_std", "oracle_le_dro_all", "seconds")
    cio.write_table(args.out / "summary.csv", cols, [{**r, "oracle_le_dro_all": str(r["oracle_le_dro_all"])} for r in table])


if __name__ == "__main__":
    main()
