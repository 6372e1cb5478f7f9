"""Command-line entry point.

Subcommands:
    run       one experiment -> metrics CSV
    sweep     a JSON grid of experiments -> per-cell CSVs + summary
    bounds    convergence-bound report -> CSV
    selftest  built-in property suites
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from . import analysis, harness
from .channel import SCHEDULE_KINDS, schedule_power


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--scheme", choices=harness.SCHEMES)
    parser.add_argument("--devices", type=int, dest="m_devices")
    parser.add_argument("--shard-size", type=int, dest="shard_size")
    parser.add_argument("--rounds", type=int)
    parser.add_argument("--p-bar", type=float, dest="p_bar")
    parser.add_argument("--schedule", choices=SCHEDULE_KINDS, dest="power_schedule")
    parser.add_argument("--noise-variance", type=float, dest="noise_variance")
    parser.add_argument("--s", type=int)
    parser.add_argument("--s-fraction", type=float, dest="s_fraction")
    parser.add_argument("--k", type=int)
    parser.add_argument("--k-fraction", type=float, dest="k_fraction")
    parser.add_argument("--mode", choices=("iid", "non_iid"), dest="data_mode")
    parser.add_argument("--dataset", choices=("auto", "synthetic", "mnist"))
    parser.add_argument("--mnist-dir", dest="mnist_dir")
    parser.add_argument("--n-train", type=int, dest="n_train")
    parser.add_argument("--n-test", type=int, dest="n_test")
    parser.add_argument("--data-seed", type=int, dest="data_seed")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--optimizer", choices=("adam", "sgd"))
    parser.add_argument("--lr", type=float)
    parser.add_argument("--level-bits", type=int, dest="level_bits")
    parser.add_argument("--mean-removal-rounds", type=int, dest="mean_removal_rounds")
    parser.add_argument("--amp-max-iterations", type=int, dest="amp_max_iterations")
    parser.add_argument("--dtype", choices=("float32", "float64"))


def _config_from_args(args: argparse.Namespace) -> harness.ExperimentConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            config = harness.ExperimentConfig.from_json(fh.read())
    else:
        config = harness.ExperimentConfig()
    overrides = {
        name: getattr(args, name)
        for name in harness.ExperimentConfig.__dataclass_fields__
        if getattr(args, name, None) is not None
    }
    return replace(config, **overrides)


def _cmd_run(args) -> int:
    config = _config_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    result = harness.run_experiment(config)
    path = os.path.join(args.out, f"metrics_{config.config_hash()}.csv")
    result.to_csv(path)
    failed = [name for name, ok in result.audits.items() if ok is False]
    print(f"scheme={config.scheme} rounds={config.rounds} final_accuracy={result.final_accuracy:.4f}")
    print(f"metrics: {path}")
    if failed:
        print(f"AUDIT FAILURES: {failed}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    config = _config_from_args(args)
    with open(args.grid, encoding="utf-8") as fh:
        grid = json.load(fh)
    if not isinstance(grid, dict) or not all(isinstance(v, list) for v in grid.values()):
        raise SystemExit("grid file must map config field -> list of values")
    outcomes = harness.run_sweep(config, grid, args.out, parallelism=args.parallelism)
    bad = [o for o in outcomes if o["status"] != "ok"]
    print(f"{len(outcomes) - len(bad)}/{len(outcomes)} cells ok; summary in {args.out}/summary.csv")
    return 1 if bad else 0


def _cmd_bounds(args) -> int:
    params = analysis.BoundParams(
        c=args.c,
        epsilon=args.epsilon,
        grad_bound=args.grad_bound,
        eta=args.eta,
        delta=args.delta,
        noise_std=args.sigma,
        m_devices=args.devices,
        dim=args.d,
        s=args.s,
        k=args.k,
        power=schedule_power(args.schedule, args.p_bar, args.rounds),
    )
    harness.emit_bound_report(params, args.theta_star_norm_sq, args.out)
    print(f"bound report: {args.out}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="airsgd",
        description="Distributed SGD over a bandwidth-limited Gaussian MAC: "
        "digital and analog gradient transmission at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    _add_config_flags(p_run)
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a grid of experiments")
    _add_config_flags(p_sweep)
    p_sweep.add_argument("--grid", required=True, help="JSON file: field -> list of values")
    p_sweep.add_argument("--out", default="sweep", help="output directory")
    p_sweep.add_argument("--parallelism", type=int, default=1)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_bounds = sub.add_parser("bounds", help="emit the convergence-bound report")
    p_bounds.add_argument("--c", type=float, default=0.1, help="strong-convexity constant")
    p_bounds.add_argument("--epsilon", type=float, default=0.01, help="success-region radius^2")
    p_bounds.add_argument("--grad-bound", type=float, default=1.0, dest="grad_bound")
    p_bounds.add_argument("--eta", type=float, default=1e-4)
    p_bounds.add_argument("--delta", type=float, default=0.05)
    p_bounds.add_argument("--sigma", type=float, default=1.0, help="channel noise std")
    p_bounds.add_argument("--devices", type=int, default=25)
    p_bounds.add_argument("--d", type=int, default=7850)
    p_bounds.add_argument("--s", type=int, default=3925)
    p_bounds.add_argument("--k", type=int, default=1962)
    p_bounds.add_argument("--p-bar", type=float, default=500.0, dest="p_bar")
    p_bounds.add_argument("--schedule", choices=SCHEDULE_KINDS, default="constant")
    p_bounds.add_argument("--rounds", type=int, default=300)
    p_bounds.add_argument(
        "--theta-star-norm-sq", type=float, default=1.0, dest="theta_star_norm_sq"
    )
    p_bounds.add_argument("--out", default="bounds.csv")
    p_bounds.set_defaults(fn=_cmd_bounds)

    p_self = sub.add_parser("selftest", help="run the built-in property suites")
    p_self.set_defaults(fn=lambda args: harness.selftest())

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
