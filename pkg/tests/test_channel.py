import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from noma_ae.channel import (FadingConfig, SnrSpec, apply_channel, noise_sigma, noise_sigma_from_snr,
                             sample_channel, spawn_rngs)
from noma_ae.errors import ConfigError


def test_channel_power_matches_two_sigma_squared():
    rng = np.random.default_rng(1)
    n = 10**6
    h = sample_channel(FadingConfig(1.0, 2.0), rng, n)
    p1, p2 = np.abs(h.h1) ** 2, np.abs(h.h2) ** 2
    assert abs(p1.mean() - 2.0) < 0.02
    assert abs(p2.mean() - 8.0) < 0.08
    # 5 standard errors of the estimator
    assert abs(p1.mean() - 2.0) < 5 * p1.std() / np.sqrt(n)
    assert abs(p2.mean() - 8.0) < 5 * p2.std() / np.sqrt(n)


def test_components_are_independent_gaussians():
    rng = np.random.default_rng(2)
    h = sample_channel(FadingConfig(1.0, 2.0), rng, 200_000)
    comps = np.stack([h.h1.real, h.h1.imag, h.h2.real / 2, h.h2.imag / 2])
    np.testing.assert_allclose(comps.std(axis=1), 1.0, atol=0.01)
    corr = np.corrcoef(comps)
    assert np.max(np.abs(corr - np.eye(4))) < 0.01


def test_gain_is_rayleigh():
    rng = np.random.default_rng(3)
    h = sample_channel(FadingConfig(1.0, 2.0), rng, 10**5)
    assert stats.kstest(np.abs(h.h1), stats.rayleigh(scale=1.0).cdf).pvalue > 0.01


def test_degenerate_variance():
    rng = np.random.default_rng(0)
    h = sample_channel(FadingConfig(1e-300, 2.0), rng, 10)
    assert np.all(np.abs(h.h1) < 1e-290)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
def test_fading_config_rejects(bad):
    with pytest.raises(ConfigError):
        FadingConfig(bad, 2.0)


def test_apply_channel_noiseless():
    rng = np.random.default_rng(0)
    assert apply_channel(1 + 0j, 2 + 0j, 0.0, rng) == 2 + 0j
    assert apply_channel(1j, 1j, 0.0, rng) == -1 + 0j


def test_apply_channel_noise_variance_per_dimension():
    rng = np.random.default_rng(4)
    y = apply_channel(np.zeros(10**6, complex), np.ones(10**6, complex), 1.0, rng)
    assert abs(y.real.var() - 1.0) < 0.01
    assert abs(y.imag.var() - 1.0) < 0.01


@given(st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_noiseless_channel_is_complex_multiplication(x, h):
    y = apply_channel(x, h, 0.0, None)
    assert y == np.multiply(np.complex128(h), np.complex128(x))
    assert y == pytest.approx(h * x, rel=1e-15, abs=1e-12)
    assert apply_channel(x, h, 0.0, None) == y


def test_negative_noise_rejected():
    with pytest.raises(ConfigError):
        apply_channel(1, 1, -0.1, np.random.default_rng(0))


def test_noise_sigma_values():
    assert noise_sigma_from_snr(SnrSpec(10.0, 1.0)) == pytest.approx(0.223607, abs=1e-6)
    assert noise_sigma_from_snr(SnrSpec(0.0, 1.0)) == pytest.approx(0.707107, abs=1e-6)
    assert noise_sigma(300.0) < 1e-14


@given(st.floats(-50, 50), st.floats(0.01, 100))
def test_noise_sigma_ten_db_step(snr_db, power):
    a = noise_sigma(snr_db, power)
    b = noise_sigma(snr_db + 10.0, power)
    assert b == pytest.approx(a / np.sqrt(10.0), rel=1e-12)
    assert noise_sigma(snr_db + 1.0, power) < a


def test_nonpositive_power_rejected():
    with pytest.raises(ConfigError):
        SnrSpec(10.0, 0.0)


def test_spawned_streams_reproducible_and_distinct():
    a = [r.random() for r in spawn_rngs(7, 3)]
    b = [r.random() for r in spawn_rngs(7, 3)]
    assert a == b
    assert len(set(a)) == 3
