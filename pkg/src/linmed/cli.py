"""Command-line entry point: ``linmed {run,ope,design-check,verify}``."""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, verify
from .design import approx_design, design_cap
from .envs import load_arms_csv
from .errors import LinMedError


def _experiment(args) -> harness.ExperimentConfig:
    if args.config is None:
        raise harness.ConfigError("--config is required")
    cfg = harness.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _experiment(args)
    curves = harness.run_experiment(cfg, threads=args.threads)
    for c in curves:
        print(f"{c.policy}: final mean regret {c.mean_regret[-1]:.3f} +/- {c.stderr[-1]:.3f} over {c.trials} trials")
    print(f"wrote {Path(cfg.out_dir) / 'regret.csv'}")
    return 0


def cmd_ope(args) -> int:
    cfg = _experiment(args)
    if args.mc_samples is not None:
        cfg = replace(cfg, ope={**cfg.ope, "mc_samples": args.mc_samples})
    for s in harness.run_ope(cfg, threads=args.threads):
        print(f"{s.policy}: mean {s.mean:.4f} std {s.std:.4f} oracle {s.oracle:.4f} "
              f"({s.defined.size}/{s.trials} trials defined)")
    print(f"wrote {Path(cfg.out_dir) / 'ope_summary.csv'}")
    return 0


def cmd_design_check(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.csv is not None:
        arm_sets = [load_arms_csv(args.csv, normalize=args.normalize)]
    else:
        if args.d < 1 or args.k < 1:
            raise harness.ConfigError("--d and --k must be positive")
        arm_sets = (verify._unit_ball(np.random.default_rng([seed, s]), args.k, args.d) for s in range(args.seeds))
    worst_tau = 0
    worst_ratio = 0.0
    checked = 0
    failed = 0
    d = None
    for A in arm_sets:
        d = A.shape[1]
        _, report = approx_design(A)
        checked += 1
        worst_tau = max(worst_tau, report.tau)
        worst_ratio = max(worst_ratio, report.max_leverage / report.tau)
        if report.max_leverage > report.tau * (1.0 + verify.CERTIFICATE_RTOL) or report.tau > design_cap(d):
            failed += 1
    norm = d * math.log(d) if d > 1 else float("nan")
    print(f"arm sets checked: {checked} (d={d})")
    print(f"max tau: {worst_tau} (cap {design_cap(d)})")
    print(f"max tau/(d ln d): {worst_tau / norm:.4f}")
    print(f"max g/tau: {worst_ratio!r}")
    print(f"certificate failures: {failed}")
    return 0 if failed == 0 else 1


def cmd_verify(args) -> int:
    results = verify.run_all(quick=not args.full)
    for r in results:
        print(r.line())
        for f in r.failures:
            print(f"  {f}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (TOML)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--threads", type=int, default=None,
                        help=f"worker processes (default: ${harness.THREADS_ENV} or 1)")
    common.add_argument("--out", help="override the output directory")

    parser = argparse.ArgumentParser(prog="linmed", description="Linear bandit experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="regret experiments")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("ope", parents=[common], help="off-policy evaluation")
    p.add_argument("--mc-samples", type=int, help="Monte-Carlo draws for sampling-only policies")
    p.set_defaults(func=cmd_ope)
    p = sub.add_parser("design-check", parents=[common], help="design certificates on random or CSV arm sets")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--csv", help="arm set file, one arm per row")
    p.add_argument("--normalize", action="store_true", help="scale CSV rows with norm > 1 onto the sphere")
    p.set_defaults(func=cmd_design_check)
    p = sub.add_parser("verify", parents=[common], help="built-in invariant suites")
    p.add_argument("--full", action="store_true", help="run at full size (a few minutes)")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (LinMedError, OSError, ValueError, ArithmeticError, NotImplementedError) as exc:
        print(f"linmed {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
