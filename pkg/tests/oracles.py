"""Independent reference computations used by the tests."""
import math

import numpy as np
from scipy import integrate
from scipy.stats import norm


def _interval_mass(lo, hi, mean, sd):
    return norm.cdf((hi - mean) / sd) - norm.cdf((lo - mean) / sd)


def exact_inphase_errors(alpha, gain, eb_over_sigma_sq, P=1.0):
    """Exact per-dimension QPSK-QPSK error probabilities (UE1 ML, UE2 SIC).

    Works on the derotated in-phase component: levels ``s1*a1 + s2*a2`` with
    unit noise; ``gain`` is |h|. Decision regions are enumerated explicitly.
    """
    sigma = math.sqrt(P / 2 / eb_over_sigma_sq)
    a1 = gain * math.sqrt(alpha * P / 2) / sigma
    a2 = gain * math.sqrt((1 - alpha) * P / 2) / sigma
    pts = [(s1, s2, s1 * a1 + s2 * a2) for s1 in (-1, 1) for s2 in (-1, 1)]
    order = sorted(pts, key=lambda p: p[2])
    levels = [p[2] for p in order]
    cuts = [-np.inf] + [0.5 * (u + v) for u, v in zip(levels[:-1], levels[1:])] + [np.inf]
    regions = [(cuts[i], cuts[i + 1], order[i][0]) for i in range(4)]
    p1 = p2 = 0.0
    for s1, s2, mu in pts:
        ok1 = sum(_interval_mass(lo, hi, mu, 1.0) for lo, hi, lab in regions if lab == s1)
        p1 += 0.25 * (1 - ok1)
        ok2 = 0.0
        for lo, hi, lab in regions:
            # second stage decides s2 = sign(r - lab*a1)
            thr = lab * a1
            lo2, hi2 = (max(lo, thr), hi) if s2 > 0 else (lo, min(hi, thr))
            if hi2 > lo2:
                ok2 += _interval_mass(lo2, hi2, mu, 1.0)
        p2 += 0.25 * (1 - ok2)
    return p1, p2


def exact_fading_ser(alpha, eb_over_sigma_sq, sigma_h1=1.0, sigma_h2=2.0):
    """Fading average of the exact conditional symbol error rates."""
    out = []
    for k, s in ((0, sigma_h1), (1, sigma_h2)):
        mean = 2 * s**2

        def f(t):
            p = exact_inphase_errors(alpha, math.sqrt(mean * t), eb_over_sigma_sq)[k]
            return (1 - (1 - p) ** 2) * math.exp(-t)

        out.append(sum(integrate.quad(f, a, b, epsabs=1e-12, limit=200)[0]
                       for a, b in ((0, 1), (1, 10), (10, np.inf))))
    return tuple(out)
