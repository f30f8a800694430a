"""Run the four figure recipes back to back, sharing trained checkpoints.

    python scripts/reproduce_figures.py --out runs [--quick] [--figures 3,5]
"""
import argparse
import logging
import os
import time

from noma_ae.config import load_config
from noma_ae.experiments import run_recipe

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs")
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--figures", default="3,4,5,6")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cache = os.path.join(args.out, "cache")
    for n in args.figures.split(","):
        recipe = f"figure{n.strip()}"
        cfg = load_config(os.path.join(HERE, "configs", f"{recipe}.ini"), recipe)
        if args.quick:
            cfg = cfg.quick()
        t0 = time.perf_counter()
        results, _ = run_recipe(cfg, os.path.join(args.out, recipe), cache)
        print(f"== {recipe} ({time.perf_counter() - t0:.0f}s)")
        grid = cfg.eval.snr_grid
        print("snr_db  " + "  ".join(f"{name:>22s}" for name in results))
        for i, s in enumerate(grid):
            print(f"{s:6.1f}  " + "  ".join(f"{c.rows[i].ber_avg:22.5f}" for c in results.values()))


if __name__ == "__main__":
    main()
