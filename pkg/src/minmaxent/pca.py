"""Closed-form Min-MaxEnt for rotated quadratic observables (PCA).

For ``f1 = u^2``, ``f2 = v^2`` with ``(u, v)`` the data rotated by ``theta``,
the MaxEnt fit is a product of centered Gaussians with the rotated
variances, so its entropy is ``1/2 ln(4 pi^2 e^2 S11(theta) S22(theta))``.
Minimizing over ``theta`` selects the rotation that diagonalizes the
covariance.  :func:`numeric_minmaxent_3d` checks the same statement in three
dimensions by direct minimization over rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Covariance2D",
    "REFERENCE_COVARIANCE",
    "rotated_variances",
    "maxent_entropy",
    "optimal_angle",
    "verify_diagonalization",
    "entropy_curve",
    "rotation_3d",
    "jacobi_eigh",
    "entropy_3d",
    "numeric_minmaxent_3d",
]

LOG_2PI_E = math.log(2 * math.pi * math.e)


@dataclass(frozen=True)
class Covariance2D:
    s11: float
    s22: float
    s12: float

    def __post_init__(self):
        if not (self.s11 > 0 and self.s22 > 0 and self.s11 * self.s22 - self.s12**2 > 0):
            raise ValueError(f"not a positive definite covariance: {self}")

    @property
    def det(self) -> float:
        return self.s11 * self.s22 - self.s12**2

    def matrix(self) -> np.ndarray:
        return np.array([[self.s11, self.s12], [self.s12, self.s22]])

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "Covariance2D":
        """Second moments ``<x_i x_j>`` about the origin."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 2)
        m = x.T @ x / x.shape[0]
        return cls(float(m[0, 0]), float(m[1, 1]), float(m[0, 1]))


REFERENCE_COVARIANCE = Covariance2D(3.0, 2.0, 1.0)


def rotated_variances(cov: Covariance2D, theta):
    """Variances of ``u = cos x + sin y`` and ``v = cos y - sin x``."""
    c, s = np.cos(theta), np.sin(theta)
    s2 = np.sin(2 * theta)
    a = cov.s11 * c * c + cov.s22 * s * s + cov.s12 * s2
    b = cov.s11 * s * s + cov.s22 * c * c - cov.s12 * s2
    return a, b


def maxent_entropy(cov: Covariance2D, theta):
    """Entropy of the Gaussian MaxEnt fit at angle ``theta`` (scalar or array)."""
    a, b = rotated_variances(cov, theta)
    prod = np.asarray(a * b)
    if np.any(prod <= 0):
        raise ValueError("rotated variances must be positive")
    out = 0.5 * (2 * LOG_2PI_E + np.log(prod))
    return float(out) if out.ndim == 0 else out


def optimal_angle(cov: Covariance2D) -> float:
    """Entropy-minimizing angle, in ``(-pi/2, pi/2]``.

    ``atan2`` keeps the answer continuous through ``s11 == s22``, where the
    plain ``arctan(2 s12 / (s11 - s22))`` form is singular.
    """
    return 0.5 * math.atan2(2 * cov.s12, cov.s11 - cov.s22)


def verify_diagonalization(cov: Covariance2D, theta: float) -> float:
    """``<u v>`` under the rotation ``theta``; zero at the optimum."""
    c, s = math.cos(theta), math.sin(theta)
    # <(c x + s y)(c y - s x)> = c s (s22 - s11) + (c^2 - s^2) s12
    return c * s * (cov.s22 - cov.s11) + (c * c - s * s) * cov.s12


def entropy_curve(cov: Covariance2D, n_points: int = 1001, period: float = math.pi):
    """``(theta, S(theta))`` on ``[0, period)``."""
    theta = np.linspace(0.0, period, n_points, endpoint=False)
    return theta, maxent_entropy(cov, theta)


def rotation_3d(angles) -> np.ndarray:
    """``Rz(a) @ Ry(b) @ Rx(c)``."""
    a, b, c = angles
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    rz = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rx = np.array([[1, 0, 0], [0, cc, -sc], [0, sc, cc]])
    return rz @ ry @ rx


def _check_spd(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (3, 3) or not np.allclose(m, m.T, atol=1e-12):
        raise ValueError("need a symmetric 3x3 matrix")
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError("matrix is not positive definite") from None
    return m


def jacobi_eigh(m: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi eigenvalue iteration; returns ``(values, vectors)``."""
    a = np.array(m, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0:
                    continue
                phi = 0.5 * math.atan2(2 * a[p, q], a[q, q] - a[p, p])
                c, s = math.cos(phi), math.sin(phi)
                j = np.eye(n)
                j[p, p] = c
                j[q, q] = c
                j[p, q] = s
                j[q, p] = -s
                a = j.T @ a @ j
                v = v @ j
    return np.diag(a).copy(), v


def entropy_3d(m: np.ndarray, r: np.ndarray) -> float:
    """Gaussian MaxEnt entropy with the diagonal of ``R M R^T`` constrained."""
    d = np.einsum("ij,jk,ik->i", r, m, r)
    return 0.5 * (3 * LOG_2PI_E + float(np.sum(np.log(d))))


_PLANES = ((1, 2), (0, 2), (0, 1))


def _plane_gradient(mr: np.ndarray) -> np.ndarray:
    # d S / d phi for R <- G_pq(phi) R, with G_pq rotating e_p toward e_q:
    # m_pq (1/m_qq - 1/m_pp)
    return np.array([mr[p, q] * (1.0 / mr[q, q] - 1.0 / mr[p, p]) for p, q in _PLANES])


def _plane_curvature(mr: np.ndarray) -> np.ndarray:
    # second derivative at m_pq = 0: (m_pp - m_qq)^2 / (m_pp m_qq)
    return np.array([(mr[p, p] - mr[q, q]) ** 2 / (mr[p, p] * mr[q, q]) for p, q in _PLANES])


def _plane_rotation(angles) -> np.ndarray:
    r = np.eye(3)
    for phi, (p, q) in zip(angles, _PLANES):
        g = np.eye(3)
        c, s = math.cos(phi), math.sin(phi)
        g[p, p] = c
        g[q, q] = c
        g[q, p] = s
        g[p, q] = -s
        r = g @ r
    return r


def numeric_minmaxent_3d(
    cov: np.ndarray, seed: int = 0, tol: float = 1e-15, max_iter: int = 10000
) -> np.ndarray:
    """Rotation minimizing ``1/2 ln((2 pi e)^3 prod_i (R S R^T)_ii)``.

    Starts from a random rotation and descends along three plane-rotation
    angles.  The exact gradient is scaled by the per-plane curvature (floored
    so that near-degenerate planes still move) and the step backtracks until
    the entropy decreases.  Returns ``R``.
    """
    m = _check_spd(cov)
    rng = np.random.default_rng(seed)
    r = rotation_3d(rng.uniform(-math.pi, math.pi, 3))
    s_old = entropy_3d(m, r)
    for _ in range(max_iter):
        mr = r @ m @ r.T
        g = _plane_gradient(mr)
        if np.max(np.abs(g)) < tol:
            break
        d = g / np.maximum(_plane_curvature(mr), 0.1)
        step = 1.0
        while True:
            trial = _plane_rotation(-step * d) @ r
            s_new = entropy_3d(m, trial)
            if s_new <= s_old or step < 1e-14:
                break
            step *= 0.5
        if s_new >= s_old and step < 1e-14:
            break
        r = trial
        s_old = s_new
    return r
