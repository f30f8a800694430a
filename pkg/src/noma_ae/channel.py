"""Rayleigh block-fading channel, AWGN, and the SNR convention.

Complex baseband quantities are numpy complex128 values or arrays.

Conventions used everywhere in the package:

* ``h_k = h_r + i h_i`` with ``h_r, h_i ~ N(0, sigma_hk^2)``, so
  ``E|h_k|^2 = 2 sigma_hk^2``.
* Noise has variance ``sigma^2`` in *each* real dimension.
* ``SNR = E_b / sigma^2`` with ``E_b = P / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class FadingConfig:
    sigma_h1: float = 1.0
    sigma_h2: float = 2.0

    def __post_init__(self):
        for name in ("sigma_h1", "sigma_h2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ConfigError("must be a positive finite number", name)

    def sigma(self, k):
        return {1: self.sigma_h1, 2: self.sigma_h2}[k]


@dataclass(frozen=True)
class SnrSpec:
    snr_db: float
    total_power: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.total_power) and self.total_power > 0):
            raise ConfigError("must be positive", "total_power")

    @property
    def eb(self):
        return self.total_power / 2.0

    @property
    def eb_over_sigma_sq(self):
        return 10.0 ** (self.snr_db / 10.0)


@dataclass(frozen=True)
class ChannelRealization:
    """Fading coefficients of both users; scalars or equal-length arrays."""

    h1: complex | np.ndarray
    h2: complex | np.ndarray

    def __len__(self):
        return np.size(self.h1)


def complex_normal(rng, std, size=None):
    """``std * (N(0,1) + i N(0,1))``: per-real-dimension standard deviation ``std``."""
    re = rng.standard_normal(size)
    im = rng.standard_normal(size)
    return std * (re + 1j * im)


def sample_channel(cfg, rng, size=None):
    h1 = complex_normal(rng, cfg.sigma_h1, size)
    h2 = complex_normal(rng, cfg.sigma_h2, size)
    return ChannelRealization(h1, h2)


def apply_channel(x, h, noise_std, rng):
    """``y = h x + n``; with ``noise_std == 0`` no random numbers are consumed."""
    if noise_std < 0:
        raise ConfigError("noise standard deviation must be non-negative", "noise_std")
    y = np.multiply(h, x)
    if noise_std == 0:
        return y
    return y + complex_normal(rng, noise_std, np.shape(y) or None)


def noise_sigma_from_snr(spec):
    if not spec.total_power > 0:
        raise ConfigError("must be positive", "total_power")
    return float(np.sqrt(spec.eb * 10.0 ** (-spec.snr_db / 10.0)))


def noise_sigma(snr_db, total_power=1.0):
    return noise_sigma_from_snr(SnrSpec(snr_db, total_power))


def make_rng(seed):
    return np.random.default_rng(seed)


def spawn_rngs(seed, n):
    """``n`` independent generators derived from one master seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
