"""Command line entry point ``amp-lab``.

Subcommands: ``run``, ``sweep``, ``se``, ``decomp``, ``hfun``.  Trial-level
commands read a TOML config (see :mod:`amp_lab.config`).  ``--threads``
falls back to the ``AMP_LAB_THREADS`` environment variable.
"""

import argparse
import dataclasses
import os
import sys

from .config import load_config
from .diag import h_curve, parse_grid
from .exceptions import AmpLabError, ConfigError
from .experiment import run_decomp, run_experiment, run_se
from .io import write_csv, write_svg


def _add_common(sp):
    sp.add_argument("--config", required=True, help="TOML experiment config")
    sp.add_argument("--out-dir", default="out", help="output directory")
    sp.add_argument("--seed-override", type=int, default=None, help="replace the config seed")
    sp.add_argument("--threads", type=int, default=None,
                    help="concurrent trials (default: $AMP_LAB_THREADS or 1)")


def build_parser():
    ap = argparse.ArgumentParser(prog="amp-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="multi-trial AMP experiment"))
    _add_common(sub.add_parser("sweep", help="n-scaling study over n_sweep"))
    sp = sub.add_parser("se", help="state evolution to its fixed point")
    _add_common(sp)
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--t-cap", type=int, default=200)
    _add_common(sub.add_parser("decomp", help="Gaussian decomposition tables"))
    sp = sub.add_parser("hfun", help="evaluate an H-function curve")
    sp.add_argument("--family", required=True,
                    choices=["lasso-H1", "lasso-H2", "robust-H1", "robust-H2"])
    sp.add_argument("--grid", required=True, help="start:stop:step, inclusive")
    sp.add_argument("--ratio", type=float, default=2.3, help="p/k for the lasso families")
    sp.add_argument("--out-dir", default="out")
    sp.add_argument("--no-svg", action="store_true")
    sp.add_argument("--config", default=None, help=argparse.SUPPRESS)
    sp.add_argument("--seed-override", type=int, default=None, help=argparse.SUPPRESS)
    sp.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
    return ap


def _config(args):
    cfg = load_config(args.config)
    if args.seed_override is not None:
        if not 0 <= args.seed_override < 2**64:
            raise ConfigError("must lie in [0, 2^64)", "seed")
        cfg = dataclasses.replace(cfg, seed=args.seed_override)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return cfg


def _hfun(args):
    try:
        grid = parse_grid(args.grid)
    except ValueError as err:
        return _usage(str(err))
    curve = h_curve(args.family, grid, ratio=args.ratio)
    os.makedirs(args.out_dir, exist_ok=True)
    stem = os.path.join(args.out_dir, args.family)
    write_csv(stem + ".csv", ("abscissa", "value", "argsup"),
              zip(curve.grid, curve.values, curve.argsup))
    if not args.no_svg:
        write_svg(stem + ".svg", curve.grid, {args.family: curve.values},
                  title=args.family, xlabel="tau" if "robust" in args.family else "omega",
                  ylabel="H")
    print(f"{args.family}: min {curve.values.min():.6g} over {curve.grid.size} points")
    return 0


def _usage(msg):
    print(f"amp-lab: error: {msg}", file=sys.stderr)
    return 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "hfun":
            return _hfun(args)
        cfg = _config(args)
        if args.command == "run":
            return run_experiment(cfg, args.out_dir, args.threads)
        if args.command == "sweep":
            if not cfg.n_sweep:
                return _usage("sweep needs n_sweep in the config")
            return run_experiment(cfg, args.out_dir, args.threads, sweep=True)
        if args.command == "se":
            se = run_se(cfg, args.out_dir, args.trial, args.tol, args.t_cap)
            fp = se.fixed_point
            print(f"gamma* = {fp.gamma:.10g} after {fp.iterations} steps"
                  f" ({'converged' if fp.converged else 'not converged'})")
            return 0 if fp.converged else 1
        if args.command == "decomp":
            run_decomp(cfg, args.out_dir, args.threads)
            return 0
    except ConfigError as err:
        return _usage(f"config: {err}")
    except (AmpLabError, OSError) as err:
        print(f"amp-lab: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
