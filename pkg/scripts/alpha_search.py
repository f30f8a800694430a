"""Grid search of the UE1 power fraction for a conventional NOMA pair.

    python scripts/alpha_search.py --const1 QPSK --const2 8QAM --snr 6,10,14
"""
import argparse

import numpy as np

from noma_ae import baselines as bl
from noma_ae.channel import FadingConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--const1", default="QPSK")
    ap.add_argument("--const2", default="8QAM")
    ap.add_argument("--snr", default="6,10,14")
    ap.add_argument("--trials", type=int, default=200_000)
    ap.add_argument("--out", default=None, help="optional BER table CSV")
    args = ap.parse_args()
    snrs = [float(v) for v in args.snr.split(",")]
    best, rows = bl.alpha_grid_search(args.const1, args.const2, FadingConfig(), snrs, bl.alpha_grid(),
                                      args.trials, np.random.default_rng(0))
    for r in rows:
        print(f"alpha={r['alpha']:.2f} snr={r['snr_db']:>4g} ber_avg={r['ber_avg']:.5f}")
    print(f"best alpha: {best}")
    if args.out:
        bl.write_ber_table(rows, args.out)


if __name__ == "__main__":
    main()
