import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minmaxent import pca
from minmaxent.pca import Covariance2D

REF = pca.REFERENCE_COVARIANCE
CONST = math.log(4 * math.pi**2 * math.e**2)


@st.composite
def covariances(draw):
    a = draw(st.floats(0.1, 10))
    b = draw(st.floats(0.1, 10))
    r = draw(st.floats(-0.95, 0.95))
    return Covariance2D(a, b, r * math.sqrt(a * b))


def test_invalid_covariance():
    for args in [(0, 1, 0), (1, -1, 0), (1, 1, 1)]:
        with pytest.raises(ValueError):
            Covariance2D(*args)


def test_rotated_variance_examples():
    assert pca.rotated_variances(REF, 0.0) == (3.0, 2.0)
    a, b = pca.rotated_variances(REF, math.pi / 2)
    assert a == pytest.approx(2.0) and b == pytest.approx(3.0)


@settings(max_examples=50, deadline=None)
@given(cov=covariances(), t=st.floats(-10, 10))
def test_trace_invariance_and_determinant_bound(cov, t):
    a, b = pca.rotated_variances(cov, t)
    assert a + b == pytest.approx(cov.s11 + cov.s22, rel=1e-12)
    assert a * b >= cov.det * (1 - 1e-12)


def test_entropy_examples():
    assert pca.maxent_entropy(REF, 0.0) == pytest.approx(0.5 * (CONST + math.log(6)), abs=1e-12)
    assert pca.maxent_entropy(REF, 0.0) == pytest.approx(3.7337, abs=1e-4)
    t = pca.optimal_angle(REF)
    assert pca.maxent_entropy(REF, t) == pytest.approx(0.5 * (CONST + math.log(5)), abs=1e-12)
    assert pca.maxent_entropy(REF, t) == pytest.approx(3.6426, abs=1e-4)
    iso = Covariance2D(2.0, 2.0, 0.0)
    s = pca.maxent_entropy(iso, np.linspace(0, 3, 17))
    assert np.ptp(s) < 1e-14


def test_entropy_matches_quadrature_of_gaussian():
    # differential entropy of N(0, diag(a, b)) by direct quadrature of -p ln p
    a, b = pca.rotated_variances(REF, 0.0)
    x = np.linspace(-12, 12, 1201)
    X, Y = np.meshgrid(x, x)
    logp = -0.5 * (X**2 / a + Y**2 / b) - 0.5 * math.log(4 * math.pi**2 * a * b)
    dx = x[1] - x[0]
    s = -np.sum(np.exp(logp) * logp) * dx * dx
    assert s == pytest.approx(pca.maxent_entropy(REF, 0.0), abs=1e-6)


def test_optimal_angle_examples():
    assert pca.optimal_angle(Covariance2D(3, 2, 0)) == 0.0
    assert pca.optimal_angle(REF) == pytest.approx(0.5 * math.atan(2), abs=1e-12)
    assert pca.optimal_angle(Covariance2D(2, 2, 0.5)) == pytest.approx(math.pi / 4, abs=1e-15)
    theta, s = pca.entropy_curve(REF, 100_000)
    assert abs(theta[np.argmin(s)] - pca.optimal_angle(REF)) < 1e-4


def test_entropy_curve_periodicity_and_minima():
    theta, s = pca.entropy_curve(REF, 2000)
    np.testing.assert_allclose(pca.maxent_entropy(REF, theta + math.pi), s, atol=1e-12)
    # swapping u and v leaves the product unchanged: quarter-turn symmetry
    np.testing.assert_allclose(pca.maxent_entropy(REF, theta + math.pi / 2), s, atol=1e-12)
    lower = (s < np.roll(s, 1)) & (s < np.roll(s, -1))
    t_star = pca.optimal_angle(REF) % (math.pi / 2)
    np.testing.assert_allclose(theta[lower], [t_star, t_star + math.pi / 2], atol=2e-3)


@settings(max_examples=50, deadline=None)
@given(cov=covariances())
def test_optimum_diagonalizes(cov):
    t = pca.optimal_angle(cov)
    assert abs(pca.verify_diagonalization(cov, t)) < 1e-12 * max(cov.s11, cov.s22)
    a, b = pca.rotated_variances(cov, t)
    assert a * b == pytest.approx(cov.det, rel=1e-10)


def test_diagonalization_residual_examples():
    t = pca.optimal_angle(REF)
    assert abs(pca.verify_diagonalization(REF, t)) < 1e-12
    gap = math.sqrt((REF.s11 - REF.s22) ** 2 + 4 * REF.s12**2)
    assert abs(pca.verify_diagonalization(REF, t + math.pi / 4)) == pytest.approx(gap / 2, rel=1e-12)
    assert pca.verify_diagonalization(Covariance2D(4, 1, 0), 0.0) == 0.0


def test_residual_matches_samples():
    x = np.random.default_rng(0).multivariate_normal([0, 0], REF.matrix(), size=200_000)
    t = 0.3
    u = math.cos(t) * x[:, 0] + math.sin(t) * x[:, 1]
    v = math.cos(t) * x[:, 1] - math.sin(t) * x[:, 0]
    assert np.mean(u * v) == pytest.approx(pca.verify_diagonalization(REF, t), abs=0.03)


def test_jacobi_oracle_agrees_with_lapack():
    a = np.random.default_rng(1).normal(size=(3, 3))
    m = a @ a.T + 0.1 * np.eye(3)
    w, v = pca.jacobi_eigh(m)
    np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(m), rtol=1e-12)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, m, atol=1e-12)


def test_3d_diagonal_input_gives_signed_permutation():
    r = pca.numeric_minmaxent_3d(np.diag([3.0, 2.0, 1.0]), seed=4)
    np.testing.assert_allclose(np.abs(r), np.round(np.abs(r)), atol=1e-6)
    np.testing.assert_allclose(np.abs(r).sum(axis=0), 1.0, atol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_3d_random_spd(seed):
    rng = np.random.default_rng(100 + seed)
    a = rng.normal(size=(3, 3))
    m = a @ a.T + 0.2 * np.eye(3)
    r = pca.numeric_minmaxent_3d(m, seed=seed)
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    d = r @ m @ r.T
    off = d - np.diag(np.diag(d))
    assert np.abs(off).max() < 1e-6
    w, _ = pca.jacobi_eigh(m)
    np.testing.assert_allclose(np.sort(np.diag(d)), np.sort(w), atol=1e-6)
    target = 0.5 * (3 * math.log(2 * math.pi * math.e) + math.log(np.linalg.det(m)))
    assert pca.entropy_3d(m, r) == pytest.approx(target, abs=1e-9)


def test_3d_rejects_non_spd():
    with pytest.raises(ValueError):
        pca.numeric_minmaxent_3d(np.diag([1.0, -1.0, 2.0]))
    with pytest.raises(ValueError):
        pca.numeric_minmaxent_3d(np.array([[1.0, 2.0, 0], [0, 1.0, 0], [0, 0, 1.0]]))
