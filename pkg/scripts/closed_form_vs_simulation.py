"""Tabulate Monte-Carlo SIC error rates against the closed-form fading SER.

Prints, per SNR, the simulated SER of both users with its standard error,
the closed form, and the gap in standard errors.

    python scripts/closed_form_vs_simulation.py --trials 10000000 --snr 5,10,15
"""
import argparse
import math

import numpy as np

from noma_ae import baselines as bl
from noma_ae.channel import FadingConfig, SnrSpec


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=10**6)
    ap.add_argument("--snr", default="0,5,10,15,20")
    ap.add_argument("--alpha", type=float, default=0.7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    fading = FadingConfig()
    print("snr_db,user,ser_mc,stderr,ser_closed_form,gap_in_se")
    for s in (float(v) for v in args.snr.split(",")):
        res = bl.simulate_noma_sic(bl.NomaBaselineConfig(args.alpha, fading=fading, snr=SnrSpec(s)), args.trials, rng)
        cf = bl.lemma1_ser(args.alpha, 10 ** (s / 10), fading)
        for user, mc, th in ((1, res.ser1, cf[0]), (2, res.ser2, cf[1])):
            se = math.sqrt(mc * (1 - mc) / args.trials)
            print(f"{s:g},{user},{mc:.6f},{se:.2e},{th:.6f},{(mc - th) / se:+.1f}")


if __name__ == "__main__":
    main()
