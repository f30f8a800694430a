"""Analytical and Monte-Carlo references for two-user downlink NOMA.

Superposition: ``x = sqrt(alpha P) x1 + sqrt((1 - alpha) P) x2`` with unit
energy, Gray-labelled constellations; UE1 gets the fraction ``alpha``.
SNR conventions follow :mod:`noma_ae.channel`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc

from .channel import FadingConfig, SnrSpec, complex_normal, noise_sigma_from_snr
from .errors import ConfigError, ConvergenceError

BER_TABLE_FIELDS = ("snr_db", "alpha", "scheme", "ber_ue1", "ber_ue2", "ber_avg", "ser_ue1", "ser_ue2", "trials")


def q_function(x):
    """Gaussian tail probability ``P(N(0,1) > x)``."""
    out = 0.5 * erfc(np.asarray(x, dtype=np.float64) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


# -- constellations ----------------------------------------------------------------

def _gray(n_bits):
    """PAM amplitudes indexed by the integer value of their Gray label."""
    m = 2 ** n_bits
    amps = np.arange(-(m - 1), m, 2, dtype=np.float64)
    out = np.empty(m)
    for pos, a in enumerate(amps):
        out[pos ^ (pos >> 1)] = a
    return out


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit average energy points; ``points[m]`` carries the label ``bits[m]`` (MSB first)."""

    name: str
    points: np.ndarray
    bits: np.ndarray

    @property
    def size(self):
        return self.points.size

    @property
    def bits_per_symbol(self):
        return self.bits.shape[1]


def _labels(n_bits):
    m = np.arange(2 ** n_bits)
    return ((m[:, None] >> np.arange(n_bits - 1, -1, -1)) & 1).astype(np.int8)


def _qam(i_bits, q_bits):
    # first i_bits label the in-phase PAM, the rest the quadrature PAM
    n = i_bits + q_bits
    labels = _labels(n)
    gi = _gray(i_bits) if i_bits else np.zeros(1)
    gq = _gray(q_bits) if q_bits else np.zeros(1)
    idx = np.arange(2 ** n)
    pts = gi[idx >> q_bits] + 1j * gq[idx & (2 ** q_bits - 1)]
    pts = pts / np.sqrt(np.mean(np.abs(pts) ** 2))
    return pts, labels


def constellation(name):
    name = name.upper().replace("-", "")
    if name == "BPSK":
        pts, labels = _qam(1, 0)
    elif name == "QPSK":
        pts, labels = _qam(1, 1)
    elif name == "8QAM":
        pts, labels = _qam(2, 1)
    elif name == "16QAM":
        pts, labels = _qam(2, 2)
    else:
        raise ConfigError(f"unknown constellation {name!r}", "constellation")
    return Constellation(name, pts, labels)


CONSTELLATIONS = ("BPSK", "QPSK", "8QAM", "16QAM")


@dataclass(frozen=True)
class NomaBaselineConfig:
    alpha: float
    const1: str = "QPSK"
    const2: str = "QPSK"
    fading: FadingConfig = FadingConfig()
    snr: SnrSpec = SnrSpec(10.0)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigError("must lie in (0, 1)", "alpha")
        for field_name in ("const1", "const2"):
            constellation(getattr(self, field_name))


# -- closed forms --------------------------------------------------------------------

@dataclass(frozen=True)
class XiTerms:
    xi_11: float
    xi_12: float
    xi_21: float
    xi_22: float


def xi_terms(h1, h2, alpha, eb, sigma1_sq, sigma2_sq):
    """Effective SNR arguments of the QPSK-QPSK AWGN error probabilities."""
    if not 0 < alpha < 1:
        raise ConfigError("must lie in (0, 1)", "alpha")
    g1 = abs(h1) ** 2 * eb / sigma1_sq
    g2 = abs(h2) ** 2 * eb / sigma2_sq
    plus = (math.sqrt(1 - alpha) + math.sqrt(alpha)) ** 2
    minus = (math.sqrt(1 - alpha) - math.sqrt(alpha)) ** 2
    return XiTerms(g1 * plus, g1 * minus, g2 * alpha, g2 * minus)


def awgn_ser_inphase(xi):
    """Per-dimension error probabilities (UE1, UE2), clamped to [0, 1]."""
    p1 = 0.5 * (q_function(math.sqrt(xi.xi_11)) + q_function(math.sqrt(xi.xi_12)))
    p2 = q_function(math.sqrt(xi.xi_21)) + 0.5 * q_function(math.sqrt(xi.xi_22))
    return min(max(p1, 0.0), 1.0), min(max(p2, 0.0), 1.0)


def _composite(p):
    return 1.0 - (1.0 - p) ** 2


def awgn_ser(xi):
    p1, p2 = awgn_ser_inphase(xi)
    return _composite(p1), _composite(p2)


def _mean_channel_power(fading, k):
    return 2.0 * fading.sigma(k) ** 2


def mean_xi_terms(alpha, eb_over_sigma_sq, fading):
    """XiTerms with |h_k|^2 replaced by its mean 2 sigma_hk^2."""
    return xi_terms(math.sqrt(_mean_channel_power(fading, 1)), math.sqrt(_mean_channel_power(fading, 2)),
                    alpha, eb_over_sigma_sq, 1.0, 1.0)


def lemma1_ser(alpha, eb_over_sigma_sq, fading=FadingConfig()):
    """Closed-form fading-averaged QPSK-QPSK NOMA error rates.

    Returns ``(Ps1, Ps2, Pb1, Pb2)``; bit error rates use the Gray relation
    ``Pb = Ps / 2``.
    """
    xi = mean_xi_terms(alpha, eb_over_sigma_sq, fading)

    def r(x):
        return math.sqrt(x / (2.0 + x))

    p1 = 0.25 * (2.0 - r(xi.xi_11) - r(xi.xi_12))
    p2 = 0.5 * (1.0 - r(xi.xi_21)) + 0.25 * (1.0 - r(xi.xi_22))
    ps1, ps2 = _composite(p1), _composite(p2)
    return ps1, ps2, ps1 / 2.0, ps2 / 2.0


def lemma1_ber_avg(alpha, snr_db, fading=FadingConfig()):
    _, _, pb1, pb2 = lemma1_ser(alpha, 10.0 ** (snr_db / 10.0), fading)
    return 0.5 * (pb1 + pb2)


def fading_average_ser(alpha, eb_over_sigma_sq, fading=FadingConfig(), tol=1e-12):
    """Numerically average the per-dimension AWGN error probabilities over Rayleigh fading.

    ``|h_k|^2`` is exponential with mean ``2 sigma_hk^2``; the average of
    each user's in-phase error probability is computed by adaptive quadrature
    and then combined into a symbol error rate with ``1 - (1 - p)^2``.
    """
    if not tol > 0:
        raise ConfigError("must be positive", "tol")

    def averaged(k):
        mean = _mean_channel_power(fading, k)

        def integrand(t):
            # t = |h_k|^2 / mean, so the density is exp(-t)
            h = math.sqrt(mean * t)
            xi = xi_terms(h, h, alpha, eb_over_sigma_sq, 1.0, 1.0)
            return awgn_ser_inphase(xi)[k - 1] * math.exp(-t)

        # the integrand decays like exp(-t); split where most of the mass is
        total, err_total = 0.0, 0.0
        for a, b in ((0.0, 1.0), (1.0, 10.0), (10.0, np.inf)):
            val, err = integrate.quad(integrand, a, b, epsabs=tol / 4, epsrel=0.0, limit=200)
            total += val
            err_total += err
        if err_total > tol:
            raise ConvergenceError(f"quadrature error estimate {err_total:.2e} above tolerance {tol:.2e}",
                                   last=total)
        return total

    return _composite(averaged(1)), _composite(averaged(2))


def p2p_qpsk_ber_closed_form(sigma_h, eb_over_sigma_sq):
    xi = 2.0 * sigma_h ** 2 * eb_over_sigma_sq
    return 0.5 * (1.0 - math.sqrt(xi / (2.0 + xi)))


# -- Monte-Carlo -----------------------------------------------------------------------

@dataclass(frozen=True)
class SimResult:
    ser1: float
    ber1: float
    ser2: float
    ber2: float
    trials: int

    @property
    def ber_avg(self):
        return 0.5 * (self.ber1 + self.ber2)

    def stderr(self, rate, bits=1):
        return math.sqrt(max(rate * (1.0 - rate), 0.0) / (self.trials * bits))


def _nearest(y, h, points):
    """Index of the point in ``h * points`` closest to ``y`` (row-wise)."""
    d = y[:, None] - h[:, None] * points[None, :]
    dist = d.real ** 2 + d.imag ** 2
    return np.argmin(dist, axis=1)


def superposition(alpha, c1, c2, P=1.0):
    """All super-constellation points; entry ``i * |c2| + j`` carries (s1=i, s2=j)."""
    pts = math.sqrt(alpha * P) * c1.points[:, None] + math.sqrt((1 - alpha) * P) * c2.points[None, :]
    return pts.reshape(-1)


def simulate_noma_sic(cfg, n_trials, rng, chunk=200_000):
    """Monte-Carlo SER/BER of conventional NOMA with fixed constellations.

    UE1 decides on the nearest super-constellation point and keeps its s1
    label. UE2 does the same to estimate s1, subtracts that contribution and
    picks the nearest point of its own scaled constellation.
    """
    c1, c2 = constellation(cfg.const1), constellation(cfg.const2)
    P = cfg.snr.total_power
    sigma = noise_sigma_from_snr(cfg.snr)
    sup = superposition(cfg.alpha, c1, c2, P)
    a1 = math.sqrt(cfg.alpha * P)
    a2 = math.sqrt((1 - cfg.alpha) * P)
    err = np.zeros(4)
    done = 0
    while done < n_trials:
        n = min(chunk, n_trials - done)
        s1 = rng.integers(0, c1.size, n)
        s2 = rng.integers(0, c2.size, n)
        x = a1 * c1.points[s1] + a2 * c2.points[s2]
        h1 = complex_normal(rng, cfg.fading.sigma_h1, n)
        h2 = complex_normal(rng, cfg.fading.sigma_h2, n)
        y1 = h1 * x + complex_normal(rng, sigma, n)
        y2 = h2 * x + complex_normal(rng, sigma, n)

        s1_hat = _nearest(y1, h1, sup) // c2.size
        err[0] += np.count_nonzero(s1_hat != s1)
        err[1] += np.count_nonzero(c1.bits[s1_hat] != c1.bits[s1])

        s1_at_2 = _nearest(y2, h2, sup) // c2.size
        residual = y2 - h2 * a1 * c1.points[s1_at_2]
        s2_hat = _nearest(residual, h2, a2 * c2.points)
        err[2] += np.count_nonzero(s2_hat != s2)
        err[3] += np.count_nonzero(c2.bits[s2_hat] != c2.bits[s2])
        done += n
    return SimResult(err[0] / n_trials, err[1] / (n_trials * c1.bits_per_symbol),
                     err[2] / n_trials, err[3] / (n_trials * c2.bits_per_symbol), int(n_trials))


@dataclass(frozen=True)
class P2pResult:
    ser: float
    ber: float
    trials: int
    bits_per_symbol: int

    def ber_stderr(self):
        return math.sqrt(max(self.ber * (1 - self.ber), 0.0) / (self.trials * self.bits_per_symbol))


def simulate_p2p(const_name, sigma_h, snr, n_trials, rng, chunk=200_000):
    """Single-user ML detection over Rayleigh fading with the full power P."""
    c = constellation(const_name)
    snr = snr if isinstance(snr, SnrSpec) else SnrSpec(float(snr))
    sigma = noise_sigma_from_snr(snr)
    pts = math.sqrt(snr.total_power) * c.points
    sym_err = bit_err = 0
    done = 0
    while done < n_trials:
        n = min(chunk, n_trials - done)
        s = rng.integers(0, c.size, n)
        h = complex_normal(rng, sigma_h, n)
        y = h * pts[s] + complex_normal(rng, sigma, n)
        s_hat = _nearest(y, h, pts)
        sym_err += np.count_nonzero(s_hat != s)
        bit_err += np.count_nonzero(c.bits[s_hat] != c.bits[s])
        done += n
    return P2pResult(sym_err / n_trials, bit_err / (n_trials * c.bits_per_symbol), int(n_trials),
                     c.bits_per_symbol)


def alpha_grid(start=0.5, stop=0.95, step=0.05):
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def alpha_grid_search(const1, const2, fading, snr_list, alphas, n_trials, rng, total_power=1.0):
    """Exhaustive search of the UE1 power fraction minimising the mean average BER.

    Returns ``(best_alpha, rows)`` with one BER-table row per (alpha, SNR).
    """
    alphas = list(alphas)
    if not alphas:
        raise ConfigError("alpha grid is empty", "alphas")
    rows = []
    score = {}
    for a in alphas:
        bers = []
        for snr_db in snr_list:
            cfg = NomaBaselineConfig(a, const1, const2, fading, SnrSpec(snr_db, total_power))
            res = simulate_noma_sic(cfg, n_trials, rng)
            rows.append(ber_row(snr_db, a, f"noma-{const1}-{const2}", res))
            bers.append(res.ber_avg)
        score[a] = float(np.mean(bers))
    best = min(alphas, key=lambda a: (score[a], a))
    return best, rows


def ber_row(snr_db, alpha, scheme, res):
    return {
        "snr_db": snr_db, "alpha": alpha, "scheme": scheme,
        "ber_ue1": res.ber1, "ber_ue2": res.ber2, "ber_avg": 0.5 * (res.ber1 + res.ber2),
        "ser_ue1": res.ser1, "ser_ue2": res.ser2, "trials": res.trials,
    }


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def write_ber_table(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BER_TABLE_FIELDS)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in BER_TABLE_FIELDS])


def read_ber_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in BER_TABLE_FIELDS:
            if k == "scheme":
                continue
            r[k] = int(r[k]) if k == "trials" else float(r[k])
    return rows
