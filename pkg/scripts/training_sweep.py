"""Compare training budgets (learning rate, batch size, steps per epoch) on one seed.

Each setting is given as lr:batch:steps_per_epoch; the script trains the
perfect-CSI AE with the given bit lengths and prints its average BER, next to
the closed form when both users carry two bits.

    python scripts/training_sweep.py --epochs 2000 --settings 0.002:128:8,0.003:512:4
"""
import argparse
import time
from dataclasses import replace

import numpy as np

from noma_ae import ae
from noma_ae import baselines as bl
from noma_ae import neuralnet as nn
from noma_ae.channel import FadingConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--settings", default="0.002:128:8")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bits", default="2,2", help="l1,l2")
    ap.add_argument("--snr", default="6,8,10,12,14,16,20")
    ap.add_argument("--n-test", type=int, default=100_000)
    args = ap.parse_args()
    grid = [float(v) for v in args.snr.split(",")]
    fading = FadingConfig()
    bits = ae.BitConfig(*(int(v) for v in args.bits.split(",")))
    for spec in args.settings.split(","):
        lr, batch, spe = spec.split(":")
        cfg = replace(ae.TrainConfig(), n_epochs=args.epochs, master_seed=args.seed, batch_size=int(batch),
                      steps_per_epoch=int(spe), schedule=nn.TrainSchedule(float(lr), 0.95, 100))
        sys = ae.build_system(bits, rng=np.random.default_rng(args.seed))
        t0 = time.perf_counter()
        ae.train(sys, cfg, fading)
        dt = time.perf_counter() - t0
        pts = ae.evaluate_ber(sys, grid, args.n_test, fading, np.random.default_rng(1000 + args.seed))
        print(f"== lr {lr} batch {batch} steps/epoch {spe}: {dt:.0f}s")
        for p in pts:
            ref = f" closed form {bl.lemma1_ber_avg(0.7, p.snr_db, fading):.4f}" if (bits.l1, bits.l2) == (2, 2) else ""
            print(f"{p.snr_db:5.1f} ue1 {p.ber_ue1:.4f} ue2 {p.ber_ue2:.4f} avg {p.ber_avg:.4f}{ref}")


if __name__ == "__main__":
    main()
