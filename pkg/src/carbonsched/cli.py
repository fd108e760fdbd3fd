"""Command-line entry point: ``carbonsched <command> ...``.

Commands write CSV tables (the source of truth), JSON summaries and a
``manifest.json`` into their output directory. Plots are optional (``--plot``).

Exit codes: 0 ok, 2 usage, 3 infeasible, 4 solver failure, 5 I/O, 6 invalid data.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from carbonsched import __version__
from carbonsched import io as cio
from carbonsched.core import ProblemConfig, aggregate_load
from carbonsched.experiments import (
    COMPARE_COLUMNS,
    SWEEP_COLUMNS,
    compare_policies,
    monotonicity,
    stream_seed,
    summarize_comparison,
    sweep,
)
from carbonsched.fleets import FLEETS
from carbonsched.planner import (
    TIERS,
    InfeasibleError,
    SolverError,
    plan_saa,
    plan_with_tier,
    support_for_tier,
    verify_certificate,
)
from carbonsched.risk import calibrate_radius
from carbonsched.scenarios import (
    SampleSet,
    SpecError,
    generate_job_stream,
    generate_load_samples,
    split_train_validation,
)
from carbonsched.sim import simulate_day

log = logging.getLogger("carbonsched")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_SOLVER = 4
EXIT_IO = 5
EXIT_DATA = 6

DEFAULT_BETA = 0.2
DEFAULT_EPSILON = 8e-3


class UsageError(Exception):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: ProblemConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class RunManifest:
    command: str
    args: dict
    config_hash: str | None = None
    seeds: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    version: str = __version__

    def add_input(self, name: str, path) -> None:
        path = Path(path)
        self.inputs[name] = {"path": str(path), "sha256": sha256_file(path) if path.is_file() else None}

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        self.outputs = {
            str(p.relative_to(out)): sha256_file(p)
            for p in sorted(out.rglob("*"))
            if p.is_file() and p.name != "manifest.json" and not _in_child_run(p, out)
        }
        cio.save_json(out / "manifest.json", asdict(self))
        return out / "manifest.json"


def _in_child_run(path: Path, root: Path) -> bool:
    # files under a subdirectory with its own manifest belong to that run
    for parent in path.parents:
        if parent == root:
            return False
        if (parent / "manifest.json").exists():
            return True
    return False


def _args_dict(args) -> dict:
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}


def parse_grid(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.replace(" ", "").split(",") if x]
    except ValueError:
        raise UsageError(f"cannot parse grid {text!r}; use comma-separated numbers") from None
    if not grid:
        raise UsageError("grid is empty")
    return grid


def _load_samples(path, config: ProblemConfig | None = None) -> SampleSet:
    path = cio.find_samples(path)
    if config is None:
        return cio.load_samples_csv(path)
    return cio.load_samples_csv(path, config.K, config.C)


def _risk_config(config: ProblemConfig, args) -> ProblemConfig:
    return config.with_risk(beta=args.beta, epsilon=args.epsilon)


def _timed(timings: dict, name: str):
    class _T:
        def __enter__(self):
            self.t0 = time.perf_counter()

        def __exit__(self, *exc):
            timings[name] = round(time.perf_counter() - self.t0, 6)

    return _T()


def _plot(args, fn, *a, **kw):
    if not getattr(args, "plot", False):
        return
    try:
        fn(*a, **kw)
    except ImportError:
        log.warning("matplotlib is not installed; skipping plot")


# -- commands -----------------------------------------------------------------


def cmd_init_config(args) -> int:
    kwargs = {"seed": args.seed}
    if args.capacity is not None:
        kwargs["capacity"] = args.capacity
    config, spec = FLEETS[args.fleet](**kwargs)
    out = Path(args.out)
    cio.save_config(out / "config.json", config)
    cio.save_generator_spec(out / "generator.json", spec)
    RunManifest("init-config", _args_dict(args), config_hash(config), {"generator": spec.seed}).write(out)
    print(f"wrote {out / 'config.json'} and {out / 'generator.json'}")
    return EXIT_OK


def cmd_gen_data(args) -> int:
    spec = cio.load_generator_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    out = Path(args.out)
    man = RunManifest("gen-data", _args_dict(args), seeds={"generator": spec.seed})
    man.add_input("spec", args.spec)
    with _timed(man.timings, "generate"):
        samples = generate_load_samples(spec, args.n, first_id=args.first_id)
    cio.write_samples_csv(out / "samples.csv", samples)
    if args.train_fraction is not None:
        train, val = split_train_validation(samples, args.train_fraction, args.split_seed)
        man.seeds["split"] = args.split_seed
        for name, part in (("train", train), ("validation", val)):
            cio.write_samples_csv(out / name / "samples.csv", part)
            sub = RunManifest("gen-data", _args_dict(args), seeds=dict(man.seeds))
            sub.add_input("samples", out / "samples.csv")
            sub.args["part"] = name
            sub.write(out / name)
        print(f"split {len(samples)} samples into {len(train)} train / {len(val)} validation")
    man.write(out)
    print(f"wrote {len(samples)} samples to {out / 'samples.csv'}")
    return EXIT_OK


def cmd_plan(args) -> int:
    config = _risk_config(cio.load_config(args.config), args)
    samples = _load_samples(args.samples, config)
    out = Path(args.out)
    man = RunManifest("plan", _args_dict(args), config_hash(config))
    man.add_input("config", args.config)
    man.add_input("samples", cio.find_samples(args.samples))
    with _timed(man.timings, "solve"):
        if args.saa:
            plan = plan_saa(config, samples.values)
            support = None
        else:
            plan = plan_with_tier(config, samples.values, tier=args.tier, margin=args.margin)
            support = support_for_tier(samples.values, args.tier, args.margin)
    with _timed(man.timings, "verify"):
        report = verify_certificate(plan, samples.values, support, config)
    cio.write_plan_csv(out, plan, config)
    cio.save_json(
        out / "verify.json",
        {
            "certified": not report,
            "violations": [{"kind": r.kind, "where": list(map(int, r.where)), "amount": r.amount} for r in report],
            "residual": plan.meta.get("residual"),
        },
    )
    man.args.update(beta=config.beta, epsilon=config.epsilon)
    from carbonsched import plotting

    loads = aggregate_load(plan.schedule, samples.values)
    _plot(args, plotting.plot_load_vs_vcc, out / "load_vs_vcc.png", plan.vcc, list(loads), config.true_capacity)
    man.write(out)
    status = "certified" if not report else f"{len(report)} certificate violations"
    print(f"objective {plan.objective:.10g} ({status}); wrote {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    plan, config = cio.read_plan(args.plan)
    scenarios = _load_samples(args.scenario, config)
    sid = args.scenario_id if args.scenario_id is not None else scenarios.ids[0]
    if sid not in scenarios.ids:
        raise UsageError(f"scenario id {sid} not in {args.scenario}")
    scenario = scenarios.values[scenarios.ids.index(sid)]
    out = Path(args.out)
    seed = stream_seed(args.seed, sid)
    man = RunManifest("simulate", _args_dict(args), config_hash(config), {"stream": args.seed, "stream_derived": seed})
    man.add_input("plan_schedule", Path(args.plan) / "schedule.csv")
    man.add_input("plan_vcc", Path(args.plan) / "vcc.csv")
    man.add_input("scenario", cio.find_samples(args.scenario))
    stream = generate_job_stream(scenario, args.jobs_per_cell, args.sigma_rel, seed)
    v = plan.vcc if args.policy == "tracking" else config.true_capacity
    with _timed(man.timings, "simulate"):
        trace = simulate_day(stream, args.policy, args.mode, v, config, plan.schedule)
    cio.write_jobs_csv(out / "jobs.csv", stream)
    cio.write_trace_csv(out, trace, {"plan_cost": plan.objective, "scenario_id": sid})
    from carbonsched import plotting

    _plot(args, plotting.plot_load_vs_vcc, out / "executed_vs_vcc.png", plan.vcc, [trace.executed], config.true_capacity, ["executed"])
    man.write(out)
    print(f"realized cost {trace.realized_cost:.10g}, plan cost {plan.objective:.10g}, {len(trace.violations)} violations")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _risk_config(cio.load_config(args.config), args)
    train = _load_samples(args.samples, config)
    val = _load_samples(args.validation, config)
    out = Path(args.out)
    man = RunManifest("compare", _args_dict(args), config_hash(config), {"stream": args.seed})
    man.add_input("config", args.config)
    man.add_input("samples", cio.find_samples(args.samples))
    man.add_input("validation", cio.find_samples(args.validation))
    with _timed(man.timings, "plan"):
        plan = plan_with_tier(config, train.values, tier=args.tier, margin=args.margin)
    with _timed(man.timings, "compare"):
        rows = compare_policies(config, plan, val, args.jobs_per_cell, args.sigma_rel, args.seed)
    cio.write_table(out / "comparison.csv", COMPARE_COLUMNS, rows)
    summary = summarize_comparison(rows)
    summary.update(plan_cost=plan.objective, tier=args.tier, beta=config.beta, epsilon=config.epsilon)
    cio.save_json(out / "summary.json", summary)
    from carbonsched import plotting

    _plot(args, plotting.plot_comparison, out / "comparison.png", rows)
    man.write(out)
    print(
        f"DRO +{summary['dro_pct_mean']:.2f}% ({summary['dro_pct_std']:.2f}), "
        f"greedy +{summary['greedy_pct_mean']:.2f}% ({summary['greedy_pct_std']:.2f}) over the oracle"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = parse_grid(args.grid)
    config = cio.load_config(args.config).with_risk(beta=args.beta, epsilon=args.epsilon)
    train = _load_samples(args.samples, config)
    val = _load_samples(args.validation, config) if args.validation else None
    out = Path(args.out)
    man = RunManifest("sweep", _args_dict(args), config_hash(config))
    man.add_input("config", args.config)
    man.add_input("samples", cio.find_samples(args.samples))
    if val is not None:
        man.add_input("validation", cio.find_samples(args.validation))
    with _timed(man.timings, "sweep"):
        rows, _ = sweep(config, train, val, args.param, grid, tier=args.tier, margin=args.margin)
    cio.write_table(out / "sweep.csv", SWEEP_COLUMNS, rows)
    ordered = sorted(rows, key=lambda r: r["value"])
    objectives = [r["objective"] for r in ordered]
    counts = [r["validation_violations"] for r in ordered]
    summary = {
        "param": args.param,
        "grid": grid,
        "objective_nondecreasing": monotonicity(objectives, increasing=True),
        "objective_nonincreasing": monotonicity(objectives, increasing=False),
        "violations_nondecreasing": monotonicity(counts, increasing=True, rel_tol=0.0) if val is not None else None,
    }
    cio.save_json(out / "summary.json", summary)
    from carbonsched import plotting

    _plot(args, plotting.plot_sweep, out / "sweep.png", rows)
    man.write(out)
    for r in rows:
        print(f"{args.param}={r['value']:g}: objective {r['objective']:.10g}, {r['validation_violations']} violations")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    grid = parse_grid(args.grid)
    config = cio.load_config(args.config).with_risk(beta=args.beta)
    train = _load_samples(args.train, config)
    holdout = _load_samples(args.holdout, config)
    out = Path(args.out)
    man = RunManifest("calibrate", _args_dict(args), config_hash(config))
    man.add_input("config", args.config)
    man.add_input("train", cio.find_samples(args.train))
    man.add_input("holdout", cio.find_samples(args.holdout))
    with _timed(man.timings, "calibrate"):
        result = calibrate_radius(train.values, holdout.values, sorted(grid), args.target, config, margin=args.margin, tier=args.tier)
    cio.write_table(out / "calibration.csv", ("epsilon", "holdout_violation_rate", "objective"), result.table)
    cio.save_json(out / "result.json", {"epsilon": result.epsilon, "qualified": result.qualified, "target": args.target})
    man.write(out)
    tag = "" if result.qualified else " (no radius met the target; largest grid value returned)"
    print(f"epsilon = {result.epsilon:g}{tag}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _risk_args(p, beta=True, epsilon=True):
    if beta:
        p.add_argument("--beta", type=float, default=DEFAULT_BETA, help="CVaR tail level (default 0.2)")
    if epsilon:
        p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="Wasserstein radius (default 8e-3)")


def _tier_args(p, default="full"):
    p.add_argument("--tier", choices=TIERS, default=default)
    p.add_argument("--margin", type=float, default=0.5, help="support set margin over the sample maxima")


def _stream_args(p):
    p.add_argument("--jobs-per-cell", type=int, default=20)
    p.add_argument("--sigma-rel", type=float, default=0.1, help="job volume sd as a fraction of the mean")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="carbonsched", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init-config", help="write a ready-made fleet config and generator spec")
    p.add_argument("--fleet", choices=sorted(FLEETS), default="twodc")
    p.add_argument("--capacity", type=float, default=None, help="per-cluster hourly capacity")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("gen-data", help="generate synthetic load samples")
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--first-id", type=int, default=1)
    p.add_argument("--train-fraction", type=float, default=None)
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("plan", help="solve the day-ahead problem")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--samples", type=Path, required=True)
    _risk_args(p)
    _tier_args(p)
    p.add_argument("--saa", action="store_true", help="sample average approximation (ignores --epsilon)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="place and execute one day of jobs")
    p.add_argument("--plan", type=Path, required=True)
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--scenario-id", type=int, default=None)
    p.add_argument("--policy", choices=("tracking", "greedy"), default="tracking")
    p.add_argument("--mode", choices=("soft", "hard"), default="soft")
    _stream_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="tracking and greedy against the perfect-forecast oracle")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--validation", type=Path, required=True)
    _risk_args(p)
    _tier_args(p)
    _stream_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="sweep beta or epsilon")
    p.add_argument("--param", choices=("beta", "epsilon"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated values")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--samples", type=Path, required=True)
    p.add_argument("--validation", type=Path, default=None)
    _risk_args(p)
    _tier_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="choose the radius on a holdout set")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--holdout", type=Path, required=True)
    p.add_argument("--grid", required=True, help="comma-separated radii")
    p.add_argument("--target", type=float, required=True, help="largest acceptable holdout violation rate")
    _risk_args(p, epsilon=False)
    _tier_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    def fail(code, msg):
        print(f"carbonsched {args.command}: {msg}", file=sys.stderr)
        return code

    try:
        return args.func(args)
    except UsageError as err:
        return fail(EXIT_USAGE, err)
    except InfeasibleError as err:
        return fail(EXIT_INFEASIBLE, err)
    except SolverError as err:
        return fail(EXIT_SOLVER, err)
    except (cio.CsvFormatError, SpecError, json.JSONDecodeError) as err:
        return fail(EXIT_DATA, err)
    except OSError as err:
        return fail(EXIT_IO, err)
    except (ValueError, KeyError, TypeError) as err:
        return fail(EXIT_DATA, err)


if __name__ == "__main__":
    sys.exit(main())
