import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_spd
from opmc.linalg import (
    DegenerateWeightsError,
    NotSPDError,
    SeededRng,
    SpdMatrix,
    invert_spd,
    log_gaussian_pdf,
    log_gaussian_pdf_matrix,
    logsumexp,
    normalize_log_weights,
    sample_gaussian,
    try_cholesky,
)


# --- try_cholesky -----------------------------------------------------------


def test_cholesky_identity():
    np.testing.assert_array_equal(try_cholesky(np.eye(3)), np.eye(3))


def test_cholesky_2x2_by_hand():
    L = try_cholesky([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)


def test_cholesky_indefinite_is_flagged():
    assert try_cholesky([[1.0, 0.0], [0.0, -1.0]]) is None


def test_cholesky_tiny_pivot_is_flagged():
    assert try_cholesky(np.diag([1.0, 1e-13])) is None
    assert try_cholesky(np.diag([1.0, 1e-11])) is not None


@pytest.mark.parametrize(
    "m",
    [np.ones((2, 3)), [[1.0, 0.5], [0.4, 1.0]], [[np.nan, 0.0], [0.0, 1.0]], np.ones(3)],
)
def test_cholesky_rejects_invalid_input(m):
    with pytest.raises(ValueError):
        try_cholesky(m)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_cholesky_recovers_factor(d, seed):
    gen = np.random.default_rng(seed)
    L = np.tril(gen.uniform(-1.0, 1.0, size=(d, d)), -1) + np.diag(gen.uniform(0.5, 2.0, size=d))
    np.testing.assert_allclose(try_cholesky(L @ L.T), L, atol=1e-10)


# --- SpdMatrix / invert_spd --------------------------------------------------


def test_spd_matrix_rejects_non_spd():
    with pytest.raises(NotSPDError):
        SpdMatrix([[1.0, 2.0], [2.0, 1.0]])


def test_spd_matrix_is_immutable():
    m = SpdMatrix(np.eye(2))
    with pytest.raises(AttributeError):
        m.matrix = np.eye(2)
    with pytest.raises(ValueError):
        m.matrix[0, 0] = 3.0


def test_scaled_reuses_factor():
    m = SpdMatrix([[4.0, 2.0], [2.0, 3.0]])
    s = m.scaled(0.25)
    np.testing.assert_array_equal(s.matrix, 0.25 * m.matrix)
    np.testing.assert_allclose(s.chol @ s.chol.T, s.matrix, atol=1e-15)
    assert s.log_det == pytest.approx(m.log_det + 2 * math.log(0.25))


@pytest.mark.parametrize(
    "m, expected",
    [
        (np.eye(4), np.eye(4)),
        (np.diag([4.0, 9.0]), np.diag([0.25, 1.0 / 9.0])),
        ([[5.0, 2.0], [2.0, 5.0]], np.array([[5.0, -2.0], [-2.0, 5.0]]) / 21.0),
    ],
)
def test_invert_spd_examples(m, expected):
    np.testing.assert_allclose(invert_spd(m).matrix, expected, atol=1e-14)


def test_invert_spd_propagates_not_spd():
    with pytest.raises(NotSPDError):
        invert_spd([[1.0, 0.0], [0.0, -2.0]])


@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_invert_spd_involution(d, seed):
    m = random_spd(np.random.default_rng(seed), d)
    inv = invert_spd(m)
    assert np.max(np.abs(m @ inv.matrix - np.eye(d))) < 1e-8
    np.testing.assert_allclose(invert_spd(inv).matrix, m, atol=1e-8)


# --- SeededRng / sampling ----------------------------------------------------


def test_seeded_rng_reproducible_and_keyed():
    a = SeededRng(7).spawn(3, 1).generator().random(5)
    b = SeededRng(7).spawn(3, 1).generator().random(5)
    c = SeededRng(7).spawn(3, 2).generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("seed", [-1, 2**64])
def test_seeded_rng_range(seed):
    with pytest.raises(ValueError):
        SeededRng(seed)


def test_sample_gaussian_pinned_noise_returns_mean():
    mean = np.array([1.0, -2.0, 0.5])
    np.testing.assert_array_equal(sample_gaussian(mean, SpdMatrix(np.eye(3)), None, z=np.zeros(3)), mean)


def test_sample_gaussian_uses_cholesky_factor():
    scale = SpdMatrix([[4.0, 2.0], [2.0, 3.0]])
    z = np.array([0.3, -1.2])
    np.testing.assert_allclose(sample_gaussian(np.zeros(2), scale, None, z=z), scale.chol @ z)


def test_sample_gaussian_dimension_mismatch():
    with pytest.raises(ValueError):
        sample_gaussian(np.zeros(3), SpdMatrix(np.eye(2)), SeededRng(0))


def test_sample_gaussian_moments():
    n = 100_000
    gen = SeededRng(11).generator()
    cov = np.array([[2.0, 1.0], [1.0, 2.0]])
    scale = SpdMatrix(cov)
    x = np.array([sample_gaussian(np.zeros(2), scale, gen) for _ in range(n)])
    emp = np.cov(x.T)
    # var of a sample covariance entry: (s_ij^2 + s_ii s_jj) / n
    se = np.sqrt((cov**2 + np.outer(np.diag(cov), np.diag(cov))) / n)
    assert np.all(np.abs(emp - cov) < 3 * se)

    eye = SpdMatrix(np.eye(2))
    y = np.array([sample_gaussian(np.array([3.0, -3.0]), eye, gen) for _ in range(n)])
    assert np.all(np.abs(y.mean(axis=0) - [3.0, -3.0]) < 3 / math.sqrt(n))


# --- Gaussian densities -------------------------------------------------------


def test_log_pdf_standard_normal_at_mean():
    assert log_gaussian_pdf([0.0], [0.0], np.eye(1)) == pytest.approx(-0.9189385332046727, abs=1e-15)


def test_log_pdf_at_mode():
    cov = np.array([[4.0, 2.0], [2.0, 3.0]])
    expected = -math.log(2 * math.pi) - 0.5 * math.log(np.linalg.det(cov))
    assert log_gaussian_pdf([1.0, 1.0], [1.0, 1.0], cov) == pytest.approx(expected, abs=1e-14)


def test_log_pdf_scalar_formula():
    assert log_gaussian_pdf([2.0], [0.0], [[4.0]]) == pytest.approx(-0.5 * math.log(8 * math.pi) - 0.5, abs=1e-14)


def test_log_pdf_matches_scipy(gen):
    from scipy.stats import multivariate_normal

    cov = random_spd(gen, 4)
    mean = gen.standard_normal(4)
    x = gen.standard_normal((20, 4))
    np.testing.assert_allclose(
        log_gaussian_pdf(x, mean, cov), multivariate_normal(mean, cov).logpdf(x), rtol=1e-12
    )


@pytest.mark.parametrize("shared", [True, False])
def test_log_pdf_matrix_matches_pointwise(gen, shared):
    d, N, M = 3, 4, 7
    means = gen.standard_normal((N, d))
    scales = [SpdMatrix(random_spd(gen, d))] * N if shared else [SpdMatrix(random_spd(gen, d)) for _ in range(N)]
    x = gen.standard_normal((M, d))
    out = log_gaussian_pdf_matrix(x, means, scales)
    ref = np.array([[log_gaussian_pdf(xm, means[n], scales[n]) for n in range(N)] for xm in x])
    np.testing.assert_allclose(out, ref, rtol=1e-12, atol=1e-12)


# --- log-space normalization ---------------------------------------------------


@pytest.mark.parametrize(
    "logw, w, lse",
    [
        ([0.0, 0.0], [0.5, 0.5], math.log(2)),
        ([-1000.0] * 3, [1 / 3] * 3, -1000 + math.log(3)),
        ([0.0, math.log(3)], [0.25, 0.75], math.log(4)),
    ],
)
def test_normalize_examples(logw, w, lse):
    got_w, got_lse = normalize_log_weights(logw)
    np.testing.assert_allclose(got_w, w, atol=1e-15)
    assert got_lse == pytest.approx(lse, abs=1e-12)


def test_normalize_degenerate():
    with pytest.raises(DegenerateWeightsError):
        normalize_log_weights([-np.inf, -np.inf])


@pytest.mark.parametrize("bad", [[0.0, np.nan], [0.0, np.inf]])
def test_normalize_rejects_nan_and_inf(bad):
    with pytest.raises(ValueError):
        normalize_log_weights(bad)


finite_logw = arrays(np.float64, st.integers(1, 30), elements=st.floats(-700, 700))


@given(finite_logw, st.floats(-1e4, 1e4))
def test_normalize_shift_invariant(logw, c):
    w1, lse1 = normalize_log_weights(logw)
    w2, lse2 = normalize_log_weights(logw + c)
    assert abs(w1.sum() - 1.0) < 1e-12 and np.all(w1 >= 0)
    np.testing.assert_allclose(w1, w2, atol=1e-12)
    assert np.argmax(w1) == np.argmax(w2)
    assert lse2 - lse1 == pytest.approx(c, abs=1e-9 * max(1.0, abs(c)))


@given(finite_logw)
def test_logsumexp_matches_scipy(logw):
    from scipy.special import logsumexp as ref

    assert logsumexp(logw) == pytest.approx(float(ref(logw)), rel=1e-12, abs=1e-12)


def test_logsumexp_axis_and_all_neg_inf():
    a = np.array([[0.0, -np.inf], [-np.inf, -np.inf]])
    out = logsumexp(a, axis=1)
    assert out[0] == 0.0 and out[1] == -np.inf
