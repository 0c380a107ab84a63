"""Command line entry point.

    rank1bandit simulate --env spike:K=8,L=8,pu=0.7,pv=0.7,du=0.2,dv=0.2 \\
        --policy rank1elim --n 2000000 --reps 20 --seed 0 --out runs/anchor
    rank1bandit sweep --preset table1-left --out runs/table1
    rank1bandit compare --K 16 --policies rank1elim,ucb1 --n 200000
    rank1bandit lowerbound --instance instance.json [--gaussian 1.0]

Errors are reported as a JSON object on stderr with a nonzero exit code.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .core import Rank1Instance
from .lowerbound import gaussian_lower_bound, regret_lower_bound


def _print_rows(rows):
    for row in rows:
        rec = row.as_record()
        rec["error"] = row.error
        print(json.dumps(rec))


def cmd_simulate(args):
    if args.config:
        with open(args.config) as fh:
            d = json.load(fh)
        for key in ("env", "policy", "n", "reps", "seed", "checkpoints", "out"):
            val = getattr(args, key)
            if val is not None:
                d[key] = val
        config = harness.ExperimentConfig.from_dict(d)
    else:
        if args.env is None or args.policy is None or args.n is None:
            raise ValueError("simulate needs --env, --policy and --n (or --config)")
        config = harness.ExperimentConfig(
            args.env, args.policy, args.n, args.reps or 1, args.seed or 0,
            args.checkpoints, args.out)
    rows = harness.run_sweep([config], workers=args.workers)
    if rows[0].error:
        raise RuntimeError(rows[0].error)
    if config.out:
        harness.emit(rows, config.out)
        (Path(config.out) / "config.json").write_text(
            json.dumps(config.to_dict(), indent=2))
    _print_rows(rows)


def cmd_sweep(args):
    configs = harness.preset(args.preset, n=args.n, reps=args.reps, seed=args.seed)
    rows = harness.run_sweep(configs, workers=args.workers)
    harness.emit(rows, args.out)
    _print_rows(rows)
    return 1 if any(r.error for r in rows) else 0


def cmd_compare(args):
    env = f"spike:K={args.K},L={args.L or args.K},pu={args.p},pv={args.p},du={args.delta},dv={args.delta}"
    policies = [p for p in args.policies.split(";" if ":" in args.policies else ",") if p]
    configs = [harness.ExperimentConfig(env, p, args.n, args.reps, args.seed) for p in policies]
    rows = harness.run_sweep(configs, workers=args.workers)
    if args.out:
        harness.emit(rows, args.out)
    _print_rows(rows)
    return 1 if any(r.error for r in rows) else 0


def cmd_lowerbound(args):
    instance = Rank1Instance.load(args.instance)
    if args.gaussian is not None:
        report = gaussian_lower_bound(instance, args.gaussian)
    else:
        report = regret_lower_bound(instance)
    print(json.dumps(report.to_dict()))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rank1bandit", description="Rank-1 bandit simulator")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run replications of one configuration")
    s.add_argument("--env")
    s.add_argument("--policy")
    s.add_argument("--n", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--checkpoints", type=int)
    s.add_argument("--out")
    s.add_argument("--config", help="JSON file with ExperimentConfig fields")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="run a preset grid")
    s.add_argument("--preset", required=True, choices=harness.PRESETS)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=2_000_000)
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", help="several policies on one spike instance")
    s.add_argument("--K", type=int, required=True)
    s.add_argument("--L", type=int)
    s.add_argument("--policies", default="rank1elim,ucb1",
                   help="comma separated; use ';' when policy specs carry parameters")
    s.add_argument("--p", type=float, default=0.7)
    s.add_argument("--delta", type=float, default=0.2)
    s.add_argument("--n", type=int, default=2_000_000)
    s.add_argument("--reps", type=int, default=10)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("lowerbound", help="asymptotic regret lower bound of an instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--gaussian", type=float, metavar="SIGMA")
    s.set_defaults(func=cmd_lowerbound)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except Exception as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
