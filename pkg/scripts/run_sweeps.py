"""Beta and epsilon sweeps on a chosen fleet; writes sweep CSVs (and plots with --plot)."""

import argparse
from pathlib import Path

from carbonsched import io as cio
from carbonsched.experiments import SWEEP_COLUMNS, sweep
from carbonsched.fleets import FLEETS
from carbonsched.planner import TIERS
from carbonsched.scenarios import generate_load_samples

GRIDS = {"beta": [0.02, 0.1, 0.2, 0.5], "epsilon": [0.0, 1e-3, 8e-3, 5e-2]}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fleet", choices=sorted(FLEETS), default="ci")
    ap.add_argument("--tier", choices=TIERS, default="full")
    ap.add_argument("--train", type=int, default=10)
    ap.add_argument("--validation", type=int, default=15)
    ap.add_argument("--out", type=Path, default=Path("runs/sweeps"))
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    config, spec = FLEETS[args.fleet]()
    train = generate_load_samples(spec, args.train)
    val = generate_load_samples(spec, args.validation, first_id=args.train + 1)
    for param, grid in GRIDS.items():
        rows, _ = sweep(config, train, val, param, grid, tier=args.tier)
        cio.write_table(args.out / f"{param}.csv", SWEEP_COLUMNS, rows)
        if args.plot:
            from carbonsched.plotting import plot_sweep

            plot_sweep(args.out / f"{param}.png", rows)
        for r in rows:
            print(f"{param}={r['value']:<6g} objective {r['objective']:.6f}  "
                  f"violations {r['validation_violations']} ({r['scenarios_violated']} scenarios)")


if __name__ == "__main__":
    main()
