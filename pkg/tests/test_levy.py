import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from omlevy.levy import (AlphaStableMeasure, k_alpha, path_rng, sample_jumps, small_jump_mean,
                         tail_mass, truncated_small_mean)

alphas = st.floats(0.05, 0.95)
betas = st.floats(-1.0, 1.0)

# high-precision values, computed once with mpmath and frozen
LAMBDA_HALF = 0.398942280401433     # Lambda(0.5, 0.5) = k(0.5)
TAIL_HALF_001 = 7.97884560802865    # tail mass at delta = 0.01
M_DELTA_HALF_004 = 0.0797884560802865


def mp_k(alpha):
    a = mp.mpf(alpha)
    return a * (1 - a) / (mp.gamma(2 - a) * mp.cos(mp.pi * a / 2))


def test_frozen_constants():
    m = AlphaStableMeasure(0.5, 0.5)
    assert small_jump_mean(m) == pytest.approx(LAMBDA_HALF, abs=1e-14)
    assert m.lambda_mean == pytest.approx(LAMBDA_HALF, abs=1e-14)
    assert k_alpha(0.5) == pytest.approx(LAMBDA_HALF, abs=1e-14)
    assert tail_mass(m, 0.01) == pytest.approx(TAIL_HALF_001, rel=1e-13)
    assert truncated_small_mean(m, 0.04) == pytest.approx(M_DELTA_HALF_004, rel=1e-13)


@pytest.mark.parametrize("alpha", [0.1, 0.25, 0.5, 0.7, 0.9, 0.99])
def test_k_alpha_matches_mpmath(alpha):
    assert k_alpha(alpha) == pytest.approx(float(mp_k(alpha)), rel=1e-13)


def test_k_alpha_at_one_and_domain():
    assert k_alpha(1.0) == 2 / math.pi
    # continuous at alpha = 1
    assert k_alpha(1 - 1e-7) == pytest.approx(2 / math.pi, rel=1e-6)
    for bad in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            k_alpha(bad)


@pytest.mark.parametrize("alpha,beta", [(0.0, 0.5), (1.0, 0.5), (0.5, 1.1), (0.5, -1.5)])
def test_measure_rejects_bad_parameters(alpha, beta):
    with pytest.raises(ValueError):
        AlphaStableMeasure(alpha, beta)


@given(alphas, betas)
def test_density_constants(alpha, beta):
    m = AlphaStableMeasure(alpha, beta)
    assert m.c1 + m.c2 == pytest.approx(m.k_alpha, rel=1e-14)
    assert m.c1 >= 0 and m.c2 >= 0
    assert m.lambda_mean == pytest.approx((m.c1 - m.c2) / (1 - alpha), rel=1e-12, abs=1e-15)
    assert m.positive_fraction == pytest.approx((1 + beta) / 2, abs=1e-14)


@given(alphas, betas)
def test_lambda_is_small_jump_integral(alpha, beta):
    m = AlphaStableMeasure(alpha, beta)
    # int_0^1 xi * xi^(-1-alpha) dxi by quadrature with the singularity handled by quad
    pos = integrate.quad(lambda x: x ** (-alpha), 0, 1)[0]
    assert small_jump_mean(m) == pytest.approx((m.c1 - m.c2) * pos, rel=1e-7, abs=1e-10)


@given(alphas, st.floats(1e-4, 0.9))
def test_tail_mass_is_measure_of_tail(alpha, delta):
    m = AlphaStableMeasure(alpha, 0.3)
    one_side = integrate.quad(lambda x: x ** (-1 - alpha), delta, np.inf)[0]
    assert tail_mass(m, delta) == pytest.approx(m.k_alpha * one_side, rel=1e-7)


@given(alphas, betas)
def test_truncated_mean_reaches_lambda(alpha, beta):
    m = AlphaStableMeasure(alpha, beta)
    assert truncated_small_mean(m, 1.0) == pytest.approx(m.lambda_mean, rel=1e-12, abs=1e-15)


def test_truncation_domain():
    m = AlphaStableMeasure(0.5, 0.5)
    with pytest.raises(ValueError):
        tail_mass(m, 0.0)
    with pytest.raises(ValueError):
        truncated_small_mean(m, 1.5)
    with pytest.raises(ValueError):
        sample_jumps(m, 1.0, 1.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_jumps(m, 0.0, 0.01, np.random.default_rng(0))


def test_sample_jumps_structure():
    m = AlphaStableMeasure(0.5, 0.5)
    jt = sample_jumps(m, 2.0, 0.01, np.random.default_rng(3))
    assert len(jt) == jt.sizes.size
    assert np.all(np.diff(jt.times) >= 0)
    assert np.all((jt.times >= 0) & (jt.times <= 2.0))
    assert np.all(np.abs(jt.sizes) >= 0.01)
    assert jt.compensator_drift == truncated_small_mean(m, 0.01)


@pytest.mark.parametrize("beta,sign", [(1.0, 1.0), (-1.0, -1.0)])
def test_fully_skewed_jumps_have_one_sign(beta, sign):
    jt = sample_jumps(AlphaStableMeasure(0.6, beta), 50.0, 0.01, np.random.default_rng(1))
    assert len(jt) > 0
    assert np.all(np.sign(jt.sizes) == sign)


def test_magnitudes_are_pareto():
    m = AlphaStableMeasure(0.5, 0.0)
    jt = sample_jumps(m, 500.0, 0.01, np.random.default_rng(11))
    mags = np.abs(jt.sizes)
    # |xi| / delta is Pareto with shape alpha
    res = stats.kstest(mags / 0.01, stats.pareto(b=0.5).cdf)
    assert res.pvalue > 1e-3


def test_path_streams():
    a = path_rng(7, 3).standard_normal(5)
    assert np.array_equal(a, path_rng(7, 3).standard_normal(5))
    assert not np.array_equal(a, path_rng(7, 4).standard_normal(5))
    assert not np.array_equal(a, path_rng(8, 3).standard_normal(5))
    with pytest.raises(ValueError):
        path_rng(-1, 0)


def test_stream_is_reproducible_for_jumps():
    m = AlphaStableMeasure(0.5, 0.5)
    a = sample_jumps(m, 2.0, 0.01, path_rng(1, 9))
    b = sample_jumps(m, 2.0, 0.01, path_rng(1, 9))
    assert np.array_equal(a.times, b.times) and np.array_equal(a.sizes, b.sizes)
