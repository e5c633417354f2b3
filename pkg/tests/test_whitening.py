import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamal.whitening import (
    RankDeficiencyError,
    estimate_covariance,
    fit_from_calibration,
    fit_whitener,
    whiten,
)


def random_spd(rng, p):
    A = rng.standard_normal((p, p))
    return A @ A.T + 0.1 * np.eye(p)


def test_covariance_constant_rows_is_zero():
    C = np.tile([1.0, -2.0, 3.0], (10, 1))
    np.testing.assert_array_equal(estimate_covariance(C), np.zeros((3, 3)))


def test_covariance_two_rows_hand_value():
    S = estimate_covariance([[0.0, 0.0], [2.0, 0.0]], strict=False)
    np.testing.assert_allclose(S, [[2.0, 0.0], [0.0, 0.0]])


def test_covariance_rank_deficient_strict():
    with pytest.raises(RankDeficiencyError):
        estimate_covariance(np.ones((3, 3)))


def test_covariance_matches_numpy_and_identity():
    C = np.random.default_rng(1).standard_normal((5000, 20))
    S = estimate_covariance(C)
    np.testing.assert_allclose(S, np.cov(C, rowvar=False), atol=1e-12)
    assert np.linalg.norm(S - np.eye(20)) / np.sqrt(20) < 0.1
    np.testing.assert_array_equal(S, S.T)


def test_identity_whitener_is_orthogonal():
    w = fit_whitener(np.eye(5))
    np.testing.assert_allclose(w.eigenvalues, 1.0)
    x = np.random.default_rng(2).standard_normal(5)
    assert np.linalg.norm(whiten(w, x)) == pytest.approx(np.linalg.norm(x))
    np.testing.assert_array_equal(whiten(w, np.zeros(5)), np.zeros(5))


def test_diagonal_whitener_hand_value():
    w = fit_whitener(np.diag([4.0, 1.0]))
    z = whiten(w, np.array([2.0, 3.0]))
    np.testing.assert_allclose(np.abs(z), [1.0, 3.0])
    # sign convention: first nonzero component of each eigenvector positive
    np.testing.assert_allclose(z, [1.0, 3.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_reconstruction_and_orthogonality(p, seed):
    S = random_spd(np.random.default_rng(seed), p)
    w = fit_whitener(S)
    U, lam = w.eigenvectors, w.eigenvalues
    assert w.n_clamped == 0
    assert np.linalg.norm(U @ U.T - np.eye(p)) < 1e-8
    assert np.linalg.norm(U @ np.diag(lam) @ U.T - S) / np.linalg.norm(S) < 1e-6
    assert np.all(np.diff(lam) <= 0)


def test_deterministic_signs():
    S = random_spd(np.random.default_rng(4), 6)
    a, b = fit_whitener(S), fit_whitener(S.copy())
    np.testing.assert_array_equal(a.eigenvectors, b.eigenvectors)
    for j in range(6):
        col = a.eigenvectors[:, j]
        assert col[np.flatnonzero(col)[0]] > 0


def test_singular_covariance_is_clamped_and_flagged():
    S = np.diag([1.0, 0.0, 0.0])
    w = fit_whitener(S)
    assert w.degenerate and w.n_clamped == 2
    assert np.all(np.isfinite(whiten(w, np.ones(3))))


def test_whitened_calibration_covariance_is_identity():
    rng = np.random.default_rng(5)
    p = 20
    L = np.linalg.cholesky(random_spd(rng, p))
    C = rng.standard_normal((5000, p)) @ L.T
    w = fit_from_calibration(C)
    Z = whiten(w, C)
    assert np.linalg.norm(np.cov(Z, rowvar=False) - np.eye(p)) / np.sqrt(p) < 0.1


def test_whitened_fresh_sample_close_to_identity():
    rng = np.random.default_rng(6)
    p = 20
    S = random_spd(rng, p)
    L = np.linalg.cholesky(S)
    w = fit_whitener(S)
    Z = whiten(w, rng.standard_normal((5000, p)) @ L.T)
    assert np.linalg.norm(np.cov(Z, rowvar=False) - np.eye(p)) / np.sqrt(p) < 0.1


def test_whiten_is_linear():
    rng = np.random.default_rng(8)
    w = fit_whitener(random_spd(rng, 4))
    x, y = rng.standard_normal(4), rng.standard_normal(4)
    np.testing.assert_allclose(whiten(w, 2.5 * x - 0.5 * y), 2.5 * whiten(w, x) - 0.5 * whiten(w, y), atol=1e-12)


def test_centering_flag():
    rng = np.random.default_rng(9)
    C = rng.standard_normal((400, 3)) + np.array([10.0, -4.0, 2.0])
    assert abs(whiten(fit_from_calibration(C, center=True), C).mean(axis=0)).max() < 1e-10
    assert abs(whiten(fit_from_calibration(C), C).mean(axis=0)).max() > 1.0


def test_dimension_mismatch():
    w = fit_whitener(np.eye(3))
    with pytest.raises(ValueError):
        whiten(w, np.ones(4))
