"""Scalar quantizers for limited CSI feedback.

Real and imaginary parts of each channel coefficient are quantized
independently with an M-level scalar quantizer. Cell ``i`` (0-based) is
``(b_{i-1}, b_i]`` with ``b_{-1} = -inf`` and ``b_{M-1} = +inf``, so a value
sitting exactly on a boundary belongs to the lower cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .channel import ChannelRealization
from .errors import ConfigError, ConvergenceError

KINDS = ("uniform", "lloyd_max")


@dataclass(frozen=True, eq=False)
class QuantizerCodebook:
    boundaries: np.ndarray
    levels: np.ndarray
    source_sigma: float
    kind: str

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=np.float64).reshape(-1)
        lv = np.asarray(self.levels, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "levels", lv)
        if self.kind not in KINDS:
            raise ConfigError(f"unknown quantizer kind {self.kind!r}", "kind")
        if lv.size < 2:
            raise ConfigError("need at least two levels", "M")
        if b.size != lv.size - 1:
            raise ConfigError("need exactly M-1 boundaries", "boundaries")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(lv))):
            raise ConfigError("boundaries and levels must be finite", "levels")
        if np.any(np.diff(b) <= 0) or np.any(np.diff(lv) <= 0):
            raise ConfigError("boundaries and levels must be strictly increasing", "levels")
        lower = np.concatenate(([-np.inf], b))
        upper = np.concatenate((b, [np.inf]))
        if not np.all((lv > lower) & (lv <= upper)):
            raise ConfigError("each level must lie inside its own cell", "levels")
        if not self.source_sigma > 0:
            raise ConfigError("must be positive", "source_sigma")

    @property
    def M(self):
        return self.levels.size

    def __eq__(self, other):
        return (isinstance(other, QuantizerCodebook) and self.kind == other.kind
                and self.source_sigma == other.source_sigma
                and np.array_equal(self.boundaries, other.boundaries)
                and np.array_equal(self.levels, other.levels))

    def scaled(self, c):
        return QuantizerCodebook(c * self.boundaries, c * self.levels, c * self.source_sigma, self.kind)


def cell_index(x, cb):
    # side="left" puts x == b_i into cell i (the lower one)
    return np.searchsorted(cb.boundaries, x, side="left")


def quantize(x, cb):
    """Reconstruction level of the cell containing each element of ``x``."""
    out = cb.levels[cell_index(x, cb)]
    return float(out) if np.ndim(out) == 0 else out


def quantize_complex(h, cb):
    h = np.asarray(h)
    out = quantize(h.real, cb) + 1j * quantize(h.imag, cb)
    return complex(out) if np.ndim(out) == 0 else out


def levels_for_bits(bits):
    if int(bits) != bits or bits < 1:
        raise ConfigError("bits per component must be a positive integer", "bits")
    return 2 ** int(bits)


def design_uniform(M, sigma, support_multiple=4.0):
    """M equal cells over ``[-support_multiple*sigma, +support_multiple*sigma]``.

    Levels sit at cell midpoints; the two edge cells extend to +-inf but still
    reconstruct at their midpoints.
    """
    if int(M) != M or M < 2:
        raise ConfigError("need at least two levels", "M")
    if not sigma > 0:
        raise ConfigError("must be positive", "sigma")
    if not support_multiple > 0:
        raise ConfigError("must be positive", "support_multiple")
    M = int(M)
    edges = np.linspace(-support_multiple * sigma, support_multiple * sigma, M + 1)
    levels = 0.5 * (edges[:-1] + edges[1:])
    return QuantizerCodebook(edges[1:-1], levels, float(sigma), "uniform")


def stratified_normal(n, rng=None):
    """``n`` sorted N(0,1) draws, one per equal-probability stratum.

    With ``rng=None`` the stratum midpoints are used (fully deterministic).
    """
    jitter = 0.5 if rng is None else rng.random(n)
    return ndtri((np.arange(n) + jitter) / n)


@dataclass
class LloydTrace:
    msqe: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def design_lloyd_max(M, sigma, tol=1e-7, max_iters=1000, rng=None, n_samples=10**6, trace=None):
    """Sample-based Lloyd iteration (1-D k-means) for a N(0, sigma^2) source.

    Starts from the +-4 sigma uniform design and alternates centroid and
    midpoint updates on ``n_samples`` stratified Gaussian draws until the
    relative change in sample MSQE drops below ``tol``. The sample MSQE of each
    iterate is appended to ``trace.msqe`` when a :class:`LloydTrace` is given.
    """
    if int(M) != M or M < 2:
        raise ConfigError("need at least two levels", "M")
    if not sigma > 0:
        raise ConfigError("must be positive", "sigma")
    if not tol > 0:
        raise ConfigError("must be positive", "tol")
    trace = LloydTrace() if trace is None else trace
    # design on the unit source and scale at the end
    x = stratified_normal(int(n_samples), rng)
    n = x.size
    csum = np.concatenate(([0.0], np.cumsum(x)))
    csum2 = np.concatenate(([0.0], np.cumsum(x * x)))

    def cells(boundaries):
        # x is sorted, so cells are contiguous index ranges
        cuts = np.concatenate(([0], np.searchsorted(x, boundaries, side="right"), [n]))
        return cuts[:-1], cuts[1:]

    def sample_msqe(boundaries, levels):
        lo, hi = cells(boundaries)
        cnt = hi - lo
        s1 = csum[hi] - csum[lo]
        s2 = csum2[hi] - csum2[lo]
        return float(np.sum(s2 - 2 * levels * s1 + cnt * levels ** 2) / n)

    start = design_uniform(M, 1.0)
    boundaries, levels = start.boundaries.copy(), start.levels.copy()
    prev = sample_msqe(boundaries, levels)
    trace.msqe.append(prev)
    for it in range(1, int(max_iters) + 1):
        lo, hi = cells(boundaries)
        cnt = hi - lo
        sums = csum[hi] - csum[lo]
        # an empty cell keeps its previous level
        levels = np.where(cnt > 0, sums / np.maximum(cnt, 1), levels)
        boundaries = 0.5 * (levels[:-1] + levels[1:])
        cur = sample_msqe(boundaries, levels)
        trace.msqe.append(cur)
        trace.iterations = it
        if abs(prev - cur) <= tol * prev:
            trace.converged = True
            break
        prev = cur
    cb = QuantizerCodebook(sigma * boundaries, sigma * levels, float(sigma), "lloyd_max")
    if not trace.converged:
        raise ConvergenceError(f"Lloyd iteration did not converge in {max_iters} iterations", last=cb)
    return cb


def msqe(cb, sigma, n_samples, rng, return_stderr=False):
    """Monte-Carlo estimate of ``E[(h - Q(h))^2]`` for ``h ~ N(0, sigma^2)``."""
    if n_samples < 10**4:
        raise ConfigError("use at least 1e4 samples", "n_samples")
    h = sigma * rng.standard_normal(int(n_samples))
    err = (h - quantize(h, cb)) ** 2
    est = float(err.mean())
    if return_stderr:
        return est, float(err.std(ddof=1) / np.sqrt(err.size))
    return est


@dataclass(frozen=True)
class QuantizedCsi:
    h1_hat: complex | np.ndarray
    h2_hat: complex | np.ndarray
    levels_per_dim: int


def quantize_csi(h, cb1, cb2):
    if cb1.M != cb2.M:
        raise ConfigError("both users must use the same number of levels", "M")
    return QuantizedCsi(quantize_complex(h.h1, cb1), quantize_complex(h.h2, cb2), cb1.M)


def as_realization(csi):
    if isinstance(csi, QuantizedCsi):
        return ChannelRealization(csi.h1_hat, csi.h2_hat)
    return csi


# -- text export -----------------------------------------------------------------

def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def codebook_to_text(cb):
    """Header ``kind M sigma``, then a boundaries line, then a levels line."""
    return f"{cb.kind} {cb.M} {float(cb.source_sigma)!r}\n{_fmt(cb.boundaries)}\n{_fmt(cb.levels)}\n"


def codebook_from_text(text):
    lines = text.splitlines()
    if len(lines) < 3:
        raise ConfigError("codebook file needs a header, a boundaries line and a levels line")
    kind, m, sigma = lines[0].split()
    boundaries = [float(v) for v in lines[1].split()]
    levels = [float(v) for v in lines[2].split()]
    cb = QuantizerCodebook(np.array(boundaries), np.array(levels), float(sigma), kind)
    if cb.M != int(m):
        raise ConfigError(f"header says M={m} but {cb.M} levels follow", "M")
    return cb


def save_codebook(cb, path):
    with open(path, "w") as fh:
        fh.write(codebook_to_text(cb))


def load_codebook(path):
    with open(path) as fh:
        return codebook_from_text(fh.read())
