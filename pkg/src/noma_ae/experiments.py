"""Experiment recipes: train/evaluate AEs over seeds and emit CSVs.

Every recipe writes into one output directory and finishes by writing
``manifest.json`` (config fingerprint, seeds, wall time, file hashes). All
CSVs depend only on the config and seeds, so reruns reproduce them byte for
byte.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import replace

import numpy as np

from . import ae
from . import baselines as bl
from .channel import SnrSpec
from .curves import analytic_curve, average_curves, write_curve
from .errors import ConfigError
from .quantizer import codebook_to_text, design_lloyd_max, design_uniform, msqe, save_codebook

log = logging.getLogger(__name__)

P2P_REFERENCES = (("QPSK", 1), ("16QAM", 2))
MIXED_CASES = (((2, 3), "QPSK", "8QAM"), ((1, 3), "BPSK", "8QAM"))


def seed_streams(seed):
    """Independent generators for (network init, evaluation, power calibration)."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def design_codebooks(kind, M, cfg):
    """One codebook per user, each matched to that user's per-component channel std."""
    q = cfg.quantizer
    out = []
    for k in (1, 2):
        sigma = q.sigma if q.sigma is not None else cfg.fading.sigma(k)
        if kind == "uniform":
            out.append(design_uniform(M, sigma))
        else:
            out.append(design_lloyd_max(M, sigma, q.tol, q.max_iters, n_samples=q.n_samples))
    return tuple(out)


class Runner:
    """Holds the output directory, the optional training cache and the list of written files."""

    def __init__(self, cfg, out_dir, cache_dir=None):
        self.cfg = cfg
        self.out = out_dir
        self.cache = cache_dir
        self.written = []
        os.makedirs(out_dir, exist_ok=True)
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)

    def path(self, *parts):
        p = os.path.join(self.out, *parts)
        os.makedirs(os.path.dirname(p), exist_ok=True)
        self.written.append(os.path.relpath(p, self.out))
        return p

    # -- AE training --------------------------------------------------------------------

    def _train_key(self, bits, quantizers, train_cfg, seed):
        cfg = self.cfg
        blob = json.dumps({
            "bits": [bits.l1, bits.l2], "train": repr(train_cfg), "fading": repr(cfg.fading),
            "loss": repr(cfg.loss), "unit": cfg.snr_unit, "power": cfg.eval.power, "seed": seed,
            "q": None if quantizers is None else [codebook_to_text(c) for c in quantizers],
        }, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:24]

    def trained_system(self, name, seed, bits=None, quantizers=None, mode=None):
        cfg = self.cfg
        bits = cfg.bits if bits is None else bits
        train_cfg = replace(cfg.train, master_seed=seed, mode=mode or cfg.train.mode)
        init_rng, _, cal_rng = seed_streams(seed)
        key = self._train_key(bits, quantizers, train_cfg, seed)
        cached = os.path.join(self.cache, key + ".bin") if self.cache else None
        if cached and os.path.exists(cached):
            sys = ae.load_system_file(cached)
            hist = None
            trace_cached = cached[:-4] + ".trace.csv"
        else:
            log.info("training %s seed %d", name, seed)
            sys = ae.build_system(bits, init_rng, cfg.eval.power, quantizers)
            sys, hist = ae.train(sys, train_cfg, cfg.fading, cfg.loss, cfg.snr_unit)
            ae.calibrate_power_scale(sys, cfg.fading, cal_rng)
            trace_cached = None
            if cached:
                ae.save_system(sys, cached + ".part")
                hist.write_csv(cached[:-4] + ".trace.csv")
                os.replace(cached + ".part", cached)
        ae.save_system(sys, self.path("checkpoints", f"{name}_seed{seed}.bin"))
        trace_path = self.path("traces", f"{name}_seed{seed}.csv")
        if hist is not None:
            hist.write_csv(trace_path)
        else:
            with open(trace_cached) as src, open(trace_path, "w") as dst:
                dst.write(src.read())
        return sys

    def ae_curve(self, name, bits=None, quantizers=None, mode=None, snr_grid=None):
        cfg = self.cfg
        grid = cfg.eval.snr_grid if snr_grid is None else snr_grid
        per_seed = []
        for seed in cfg.eval.seeds:
            sys = self.trained_system(name, seed, bits, quantizers, mode)
            _, eval_rng, _ = seed_streams(seed)
            points = ae.evaluate_ber(sys, grid, cfg.eval.n_test, cfg.fading, eval_rng, seed=seed)
            write_curve(average_curves([points], name, cfg.fingerprint()),
                        self.path("seeds", f"{name}_seed{seed}.csv"))
            per_seed.append(points)
        curve = average_curves(per_seed, name, cfg.fingerprint())
        write_curve(curve, self.path(f"{name}.csv"))
        return curve

    # -- reference curves -----------------------------------------------------------------

    def lemma_curve(self, alpha, name=None):
        grid = self.cfg.eval.snr_grid
        pb = [bl.lemma1_ser(alpha, 10 ** (s / 10), self.cfg.fading)[2:] for s in grid]
        curve = analytic_curve(name or f"lemma1_alpha{alpha:g}", grid, [p[0] for p in pb], [p[1] for p in pb],
                               self.cfg.fingerprint())
        write_curve(curve, self.path(f"{curve.scheme}.csv"))
        return curve

    def p2p_curve(self, const_name, user):
        cfg = self.cfg
        sigma_h = cfg.fading.sigma(user)
        rng = np.random.default_rng([cfg.eval.seeds[0], 101, user])
        rows = [bl.simulate_p2p(const_name, sigma_h, SnrSpec(s, cfg.eval.power), cfg.baseline.n_trials, rng)
                for s in cfg.eval.snr_grid]
        name = f"p2p_{const_name}_ue{user}"
        curve = average_curves([[ae.BerPoint(s, r.ber, r.ber, r.trials)
                                 for s, r in zip(cfg.eval.snr_grid, rows)]], name, cfg.fingerprint())
        write_curve(curve, self.path(f"{name}.csv"))
        if const_name == "QPSK":
            ber = [bl.p2p_qpsk_ber_closed_form(sigma_h, 10 ** (s / 10)) for s in cfg.eval.snr_grid]
            theory = analytic_curve(f"p2p_QPSK_ue{user}_theory", cfg.eval.snr_grid, ber, ber, cfg.fingerprint())
            write_curve(theory, self.path(f"{theory.scheme}.csv"))
        return curve

    def noma_curve(self, alpha, const1, const2):
        cfg = self.cfg
        rng = np.random.default_rng([cfg.eval.seeds[0], 202])
        table, points = [], []
        name = f"noma_{const1}_{const2}_alpha{alpha:g}"
        for s in cfg.eval.snr_grid:
            run = bl.NomaBaselineConfig(alpha, const1, const2, cfg.fading, SnrSpec(s, cfg.eval.power))
            res = bl.simulate_noma_sic(run, cfg.baseline.n_trials, rng)
            table.append(bl.ber_row(s, alpha, name, res))
            points.append(ae.BerPoint(s, res.ber1, res.ber2, res.trials))
        bl.write_ber_table(table, self.path(f"{name}_table.csv"))
        curve = average_curves([points], name, cfg.fingerprint())
        write_curve(curve, self.path(f"{name}.csv"))
        return curve

    def finish(self, recipe, wall_time):
        files = {}
        for rel in sorted(set(self.written)):
            with open(os.path.join(self.out, rel), "rb") as fh:
                files[rel] = hashlib.sha256(fh.read()).hexdigest()
        manifest = {
            "recipe": recipe, "fingerprint": self.cfg.fingerprint(), "seeds": list(self.cfg.eval.seeds),
            "wall_time_s": round(wall_time, 3), "files": files,
        }
        with open(os.path.join(self.out, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return manifest


# -- recipes -------------------------------------------------------------------------------

def recipe_train(r):
    return {"ae": r.ae_curve(f"ae_{r.cfg.train.mode}")}


def recipe_eval(r):
    cfg = r.cfg
    if not cfg.eval.checkpoints:
        raise ConfigError("eval needs at least one checkpoint path", "eval.checkpoints")
    per_ckpt = []
    for i, path in enumerate(cfg.eval.checkpoints):
        sys = ae.load_system_file(path)
        _, eval_rng, cal_rng = seed_streams(cfg.eval.seeds[i % len(cfg.eval.seeds)])
        if sys.power_scale is None:
            ae.calibrate_power_scale(sys, cfg.fading, cal_rng)
        per_ckpt.append(ae.evaluate_ber(sys, cfg.eval.snr_grid, cfg.eval.n_test, cfg.fading, eval_rng))
    curve = average_curves(per_ckpt, "eval", cfg.fingerprint())
    write_curve(curve, r.path("eval.csv"))
    return {"eval": curve}


def recipe_baseline(r):
    b = r.cfg.baseline
    out = {"noma": r.noma_curve(b.alpha, b.const1, b.const2)}
    if (b.const1, b.const2) == ("QPSK", "QPSK"):
        out["lemma1"] = r.lemma_curve(b.alpha)
    out["p2p1"] = r.p2p_curve(b.const1, 1)
    out["p2p2"] = r.p2p_curve(b.const2, 2)
    return out


def recipe_quantizer(r):
    cfg = r.cfg
    rng = np.random.default_rng([cfg.eval.seeds[0], 303])
    lines = ["kind,M,user,sigma,msqe,stderr"]
    out = {}
    for kind in cfg.quantizer.kinds:
        for M in cfg.quantizer.levels:
            cbs = design_codebooks(kind, M, cfg)
            users = (0,) if cfg.quantizer.sigma is not None else (1, 2)
            for user, cb in zip(users, cbs):
                tag = f"{kind}_M{M}" + (f"_ue{user}" if user else "")
                save_codebook(cb, r.path("codebooks", tag + ".txt"))
                est, se = msqe(cb, cb.source_sigma, 10**6, rng, return_stderr=True)
                lines.append(f"{kind},{M},{user},{cb.source_sigma!r},{est!r},{se!r}")
                out[tag] = cb
    with open(r.path("msqe.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return out


def recipe_constellation(r):
    cfg = r.cfg
    out = {}
    for seed in cfg.eval.seeds:
        sys = r.trained_system("ae", seed)
        for i, (h1, h2) in enumerate(cfg.constellation.channels):
            recs = ae.export_constellation(sys, h1, h2, cfg.fading)
            ae.write_constellation_csv(recs, r.path("constellations", f"seed{seed}_ch{i}.csv"))
            out[(seed, i)] = recs
    return out


def recipe_figure3(r):
    out = {"ae": r.ae_curve("ae_perfect_csi", mode="fixed_snr"),
           "lemma1": r.lemma_curve(r.cfg.baseline.alpha)}
    for const_name, user in P2P_REFERENCES:
        out[f"p2p_{const_name}"] = r.p2p_curve(const_name, user)
    return out


def recipe_figure4(r):
    out = {}
    alpha = r.cfg.baseline.mixed_alpha
    for (l1, l2), c1, c2 in MIXED_CASES:
        out[f"ae_{l1}{l2}"] = r.ae_curve(f"ae_bits{l1}{l2}", bits=ae.BitConfig(l1, l2), mode="fixed_snr")
        out[f"noma_{l1}{l2}"] = r.noma_curve(alpha, c1, c2)
    return out


def recipe_figure5(r):
    cfg = r.cfg
    out = {"perfect": r.ae_curve("ae_perfect_csi", mode="fixed_snr")}
    for M in cfg.quantizer.levels:
        for kind in cfg.quantizer.kinds:
            name = f"ae_{kind}_M{M}"
            out[name] = r.ae_curve(name, quantizers=design_codebooks(kind, M, cfg), mode="fixed_snr")
    return out


def recipe_figure6(r):
    return {"fixed": r.ae_curve("ae_perfect_csi", mode="fixed_snr"),
            "multi": r.ae_curve("ae_multi_snr", mode="multi_snr")}


RECIPE_FUNCS = {
    "train": recipe_train, "eval": recipe_eval, "baseline": recipe_baseline, "quantizer": recipe_quantizer,
    "constellation": recipe_constellation, "figure3": recipe_figure3, "figure4": recipe_figure4,
    "figure5": recipe_figure5, "figure6": recipe_figure6,
}


def run_recipe(cfg, out_dir=None, cache_dir=None):
    """Run ``cfg.experiment``; returns ``(results, manifest)``."""
    t0 = time.perf_counter()
    runner = Runner(cfg, out_dir or cfg.output_dir, cache_dir)
    results = RECIPE_FUNCS[cfg.experiment](runner)
    manifest = runner.finish(cfg.experiment, time.perf_counter() - t0)
    return results, manifest
