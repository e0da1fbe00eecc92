"""ADAM with bias correction, operating on flat float64 vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Return the updated parameters; moments advance in place."""
        grad = np.asarray(grad, dtype=np.float64)
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class LagrangeState:
    """Lagrange multipliers plus the ADAM moments that drive them."""

    lam: np.ndarray
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]
    t: int = 0

    def __post_init__(self):
        self.lam = np.array(self.lam, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(self.lam)):
            raise ValueError("Lagrange multipliers must be finite")
        if self.m is None:
            self.m = np.zeros_like(self.lam)
        if self.v is None:
            self.v = np.zeros_like(self.lam)

    @classmethod
    def zeros(cls, n: int) -> "LagrangeState":
        return cls(np.zeros(n))

    def adam_step(self, grad: np.ndarray, lr: float, beta1=0.9, beta2=0.999, eps=1e-8) -> "LagrangeState":
        opt = Adam(lr, beta1, beta2, eps, self.m.copy(), self.v.copy(), self.t)
        lam = opt.step(self.lam, grad)
        return LagrangeState(lam, opt.m, opt.v, opt.t)
