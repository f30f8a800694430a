"""Command-line entry point.

    noma-ae <recipe> --config <path> [--quick] [--seed-list s1,s2,...] [--out <dir>] [--cache <dir>]
    noma-ae compare <curve_a.csv> <curve_b.csv> [--n-stderr 3] [--column avg|ue1|ue2]

Exit codes: 0 success, 2 config error, 3 numerical divergence, 4 comparison failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from .config import RECIPES, load_config, parse_config
from .curves import compare_curves, read_curve
from .errors import ConfigError, DegenerateEncoderError, StructuralError, TrainingDivergence
from .experiments import run_recipe

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_COMPARISON = 4


def _seed_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from exc


def build_parser():
    p = argparse.ArgumentParser(prog="noma-ae", description="AE-NOMA experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in RECIPES:
        r = sub.add_parser(name, help=f"run the {name} recipe")
        r.add_argument("--config", help="INI config file (defaults are used when omitted)")
        r.add_argument("--quick", action="store_true", help="2000 epochs, 1e5 test samples, 3 seeds")
        r.add_argument("--seed-list", type=_seed_list, help="comma-separated seeds")
        r.add_argument("--out", help="output directory")
        r.add_argument("--cache", help="directory for reusable trained checkpoints")
        r.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    c = sub.add_parser("compare", help="pointwise comparison of two BER curve CSVs")
    c.add_argument("curve_a")
    c.add_argument("curve_b")
    c.add_argument("--n-stderr", type=float, default=3.0)
    c.add_argument("--column", choices=("avg", "ue1", "ue2"), default="avg")
    return p


def run(argv=None, out=sys.stdout, err=sys.stderr):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(message)s")
    if args.command == "compare":
        try:
            a, b = read_curve(args.curve_a), read_curve(args.curve_b)
            cmp = compare_curves(a, b, args.n_stderr, args.column)
        except (StructuralError, OSError) as exc:
            print(f"error: {exc}", file=err)
            return EXIT_CONFIG
        out.write(cmp.report(a.scheme, b.scheme))
        return EXIT_OK if cmp.ok else EXIT_COMPARISON
    try:
        cfg = load_config(args.config, args.command) if args.config else parse_config("", args.command)
        if args.seed_list:
            cfg = cfg.with_seeds(args.seed_list)
        if args.quick:
            cfg = cfg.quick()
        _, manifest = run_recipe(cfg, args.out, args.cache)
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        print(f"training diverged at epoch {exc.epoch} (layer {exc.layer}): {exc}", file=err)
        return EXIT_DIVERGENCE
    except DegenerateEncoderError as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_DIVERGENCE
    out.write(f"{manifest['recipe']}: {len(manifest['files'])} files, fingerprint {manifest['fingerprint']}\n")
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
