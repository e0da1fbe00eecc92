"""Observable families f_i[theta](x) whose averages are constrained.

Four families share one interface:

``moments``
    1D data, ``f = (x, x**2)``; no trainable parameters.
``rotated-quadratic``
    2D data, squared projections on a basis rotated by a single angle.
``mlp``
    outputs of a tanh multilayer perceptron.
``cnn``
    outputs of a two-layer convolutional net for square images.

Inputs are always batches of shape ``(N, input_dim)``; values come back as
``(N, n_obs)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import nets

__all__ = [
    "ObservableSet",
    "ObservableEval",
    "MomentObservables",
    "RotatedQuadratic",
    "NeuralObservables",
    "evaluate",
    "parameter_gradients",
    "build_mlp_observables",
    "build_cnn_observables",
    "from_arch",
]


@dataclass
class ObservableEval:
    values: np.ndarray
    jacobian: np.ndarray | None = None
    param_grads: np.ndarray | None = None


def _check_input(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, dim) if dim > 1 else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected inputs with {dim} columns, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("observable input contains non-finite values")
    return x


class ObservableSet:
    """Common interface; concrete families override the three kernels."""

    family: str = ""
    n_obs: int
    input_dim: int
    theta: np.ndarray

    def values(self, x: np.ndarray) -> np.ndarray:
        return self._values(_check_input(x, self.input_dim))

    def parameter_gradients(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. ``theta`` of ``sum_n sum_j w[n, j] f_j(x_n)``.

        ``w`` is either one weight per observable or one row per sample.
        """
        x = _check_input(x, self.input_dim)
        w = np.asarray(w, dtype=np.float64)
        if w.shape not in ((self.n_obs,), (x.shape[0], self.n_obs)):
            raise ValueError(f"weights must have length {self.n_obs}, got shape {w.shape}")
        w = np.broadcast_to(w, (x.shape[0], self.n_obs))
        return self._param_grad(x, w)

    def input_jacobian(self, x: np.ndarray) -> np.ndarray:
        """``(N, n_obs, input_dim)`` derivatives of every output w.r.t. the input."""
        return self._jacobian(_check_input(x, self.input_dim))

    def with_theta(self, theta: np.ndarray) -> "ObservableSet":
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return int(self.theta.size)

    def arch(self) -> dict:
        raise NotImplementedError

    def _values(self, x):
        raise NotImplementedError

    def _param_grad(self, x, w):
        raise NotImplementedError

    def _jacobian(self, x):
        raise NotImplementedError


class MomentObservables(ObservableSet):
    family = "moments"

    def __init__(self):
        self.n_obs = 2
        self.input_dim = 1
        self.theta = np.zeros(0)

    def _values(self, x):
        return np.hstack([x, x * x])

    def _param_grad(self, x, w):
        return np.zeros(0)

    def _jacobian(self, x):
        return np.stack([np.ones_like(x), 2.0 * x], axis=1)

    def with_theta(self, theta):
        if np.asarray(theta).size:
            raise ValueError("moments family has no parameters")
        return MomentObservables()

    def arch(self):
        return {"kind": "moments", "input_dim": 1, "n_out": 2}


class RotatedQuadratic(ObservableSet):
    """``f1 = (cos t x + sin t y)^2``, ``f2 = (-sin t x + cos t y)^2``."""

    family = "rotated-quadratic"

    def __init__(self, angle: float = 0.0):
        self.n_obs = 2
        self.input_dim = 2
        self.theta = np.array([float(angle)])

    @property
    def angle(self) -> float:
        return float(self.theta[0])

    def _proj(self, x):
        c, s = np.cos(self.angle), np.sin(self.angle)
        u = c * x[:, 0] + s * x[:, 1]
        v = -s * x[:, 0] + c * x[:, 1]
        return u, v

    def _values(self, x):
        u, v = self._proj(x)
        return np.column_stack([u * u, v * v])

    def _param_grad(self, x, w):
        u, v = self._proj(x)
        # du/dt = v, dv/dt = -u
        d = 2.0 * u * v
        return np.array([np.sum(w[:, 0] * d - w[:, 1] * d)])

    def _jacobian(self, x):
        c, s = np.cos(self.angle), np.sin(self.angle)
        u, v = self._proj(x)
        jac = np.empty((x.shape[0], 2, 2))
        jac[:, 0, 0] = 2 * u * c
        jac[:, 0, 1] = 2 * u * s
        jac[:, 1, 0] = -2 * v * s
        jac[:, 1, 1] = 2 * v * c
        return jac

    def with_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.shape != (1,):
            raise ValueError("rotated-quadratic takes exactly one angle")
        return RotatedQuadratic(theta[0])

    def arch(self):
        return {"kind": "rotated-quadratic", "input_dim": 2, "n_out": 2}


class NeuralObservables(ObservableSet):
    """Observables given by the outputs of an MLP or CNN."""

    def __init__(self, network: nets.Network):
        self.network = network
        self.family = network.arch["kind"]
        self.n_obs = network.n_out
        self.input_dim = network.input_dim

    @property
    def theta(self) -> np.ndarray:  # type: ignore[override]
        return self.network.theta

    def _values(self, x):
        return self.network(x)

    def _param_grad(self, x, w):
        return self.network.weighted_gradients(x, w)[0]

    def _jacobian(self, x):
        jac = np.empty((x.shape[0], self.n_obs, self.input_dim))
        for j in range(self.n_obs):
            w = np.zeros(self.n_obs)
            w[j] = 1.0
            jac[:, j, :] = self.network.weighted_gradients(x, w)[1]
        return jac

    def with_theta(self, theta):
        return NeuralObservables(self.network.with_theta(theta))

    def arch(self):
        return dict(self.network.arch)


def evaluate(obs: ObservableSet, x: np.ndarray, jacobian: bool = False) -> ObservableEval:
    values = obs.values(x)
    jac = obs.input_jacobian(x) if jacobian else None
    return ObservableEval(values=values, jacobian=jac)


def parameter_gradients(obs: ObservableSet, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    return obs.parameter_gradients(x, w)


def build_mlp_observables(
    input_dim: int,
    hidden_layout: Sequence[int] = (32, 32),
    n_obs: int = 2,
    seed: int = 0,
) -> NeuralObservables:
    return NeuralObservables(nets.build_mlp(input_dim, hidden_layout, n_obs, seed=seed))


def build_cnn_observables(image_side: int = 8, n_obs: int = 16, seed: int = 0) -> NeuralObservables:
    return NeuralObservables(nets.build_cnn(image_side, n_obs, seed=seed))


def from_arch(arch: dict, theta: np.ndarray | None = None) -> ObservableSet:
    """Rebuild an observable set from its ``arch()`` description."""
    kind = arch["kind"]
    if kind == "moments":
        return MomentObservables()
    if kind == "rotated-quadratic":
        return RotatedQuadratic(0.0 if theta is None else float(np.asarray(theta).reshape(-1)[0]))
    return NeuralObservables(nets.build_from_arch(arch, theta))
