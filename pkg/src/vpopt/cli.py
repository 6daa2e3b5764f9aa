"""Command-line entry point: ``vpopt forward|optimize|scan|grad-check|extend``."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import commands
from .config import ConfigError, parse_config
from .io import read_result

PASS_FRACTION = 0.9


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpopt", description="Vlasov-Poisson control experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-v info, -vv debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True,
                       help="YAML run config, or a bundled preset name (focusing_default, two_stream_default)")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        p.add_argument("--seed", type=int, help="random seed (overrides optimizer.seed)")
        return p

    common(sub.add_parser("forward", help="run the forward solver and write diagnostics"))
    common(sub.add_parser("optimize", help="optimise the control coefficients"))
    common(sub.add_parser("scan", help="evaluate J on a grid of coefficients"))
    gc = common(sub.add_parser("grad-check", help="compare adjoint and finite-difference gradients"))
    gc.add_argument("--eps", type=float, help="finite-difference step")
    gc.add_argument("--n-points", type=int, help="number of random H draws")
    gc.add_argument("--n-coords", type=int, help="coordinates checked per draw")
    gc.add_argument("--rtol", type=float, help="relative tolerance per coordinate")
    ext = common(sub.add_parser("extend", help="rerun a control on a longer horizon"))
    ext.add_argument("--coeffs", help="result file from 'optimize' (default: config's initial coefficients)")
    ext.add_argument("--T-new", dest="T_new", type=float, required=True, help="new final time")
    return parser


def _run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None:
        cfg = cfg.with_output_dir(args.out)

    if args.command == "forward":
        J = commands.cmd_forward(cfg)
        print(f"J = {J:.17g}")
    elif args.command == "optimize":
        rec = commands.cmd_optimize(cfg)
        print(f"{rec.method}: status={rec.status} J={rec.best_J:.17g} cost_units={rec.total_cost}")
    elif args.command == "scan":
        values = commands.cmd_scan(cfg)
        print(f"{values.size} points, min J = {values.min():.17g}")
    elif args.command == "grad-check":
        if args.eps is not None and not args.eps > 0:
            raise ValueError(f"--eps must be positive, got {args.eps}")
        report = commands.cmd_grad_check(cfg, args.eps, args.n_points, args.n_coords, None, args.rtol)
        for d in report.draws():
            checks = [c for c in report.checks if c.draw == d]
            worst = max(c.rel_error for c in checks)
            kinks = sum(c.near_kink for c in checks)
            status = "pass" if report.draw_passed(d) else "FAIL"
            print(f"draw {d:3d}: {status} max_rel_error={worst:.3e} near_kink={kinks}/{len(checks)}")
        print(f"passed {report.pass_fraction:.0%} of draws (need {PASS_FRACTION:.0%})")
        return 0 if report.pass_fraction >= PASS_FRACTION else 1
    elif args.command == "extend":
        coeffs = cfg.initial if args.coeffs is None else np.array(read_result(args.coeffs)["coefficients"])
        J = commands.cmd_extend(cfg, coeffs, args.T_new)
        print(f"J(T={args.T_new:g}) = {J:.17g}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"vpopt: config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, FloatingPointError, OSError) as exc:
        print(f"vpopt: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
