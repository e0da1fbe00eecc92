"""Effective energy H(x) = sum_i lam_i f_i(x) plus external bias fields.

The unnormalized model density is ``exp(-H(x))``.  Bias fields are built
from independently trained networks and steer sampling without touching the
observables or the multipliers:

* discriminator bias: ``+alpha * g(x)`` with ``g`` = P(generated | x)
* classifier bias:    ``-alpha * h_j(x) + alpha * sum_{i != j} h_i(x)``
* constant bias:      ``+c`` (changes nothing but the energy offset)

Hamiltonians are immutable; the ``add_*`` helpers return new objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .nets import Network
from .observables import ObservableSet
from .optim import LagrangeState

__all__ = [
    "BiasField",
    "EffectiveHamiltonian",
    "NonFiniteEnergyError",
    "energy",
    "add_discriminator_bias",
    "add_classifier_bias",
    "add_constant_bias",
    "detach_base",
    "network_scores",
]


class NonFiniteEnergyError(FloatingPointError):
    pass


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def network_scores(network, x: np.ndarray) -> np.ndarray:
    """Probabilities produced by a bias network.

    ``Network`` objects are interpreted through ``arch["head"]``: ``sigmoid``
    gives one score per sample, ``softmax`` one probability row per sample.
    Plain callables are assumed to return scores already.
    """
    if not isinstance(network, Network):
        return np.asarray(network(x), dtype=np.float64)
    out = network(x)
    head = network.arch.get("head", "linear")
    if head == "sigmoid":
        return _sigmoid(out[:, 0])
    if head == "softmax":
        z = out - out.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    return out


def _snapshot(network):
    return network.copy() if isinstance(network, Network) else network


@dataclass(frozen=True)
class BiasField:
    kind: str
    alpha: float
    network: Network | Callable | None = None
    target: int | None = None

    def contribution(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        if self.kind == "constant":
            return np.full(n, self.alpha)
        scores = network_scores(self.network, x)
        if self.kind == "discriminator":
            return self.alpha * np.asarray(scores, dtype=np.float64).reshape(n)
        if self.kind == "classifier":
            h = np.asarray(scores, dtype=np.float64).reshape(n, -1)
            on = h[:, self.target]
            off = h.sum(axis=1) - on
            return -self.alpha * on + self.alpha * off
        raise ValueError(f"unknown bias kind {self.kind!r}")

    def describe(self) -> str:
        if self.kind == "classifier":
            return f"classifier(target={self.target}, alpha={self.alpha:g})"
        return f"{self.kind}(alpha={self.alpha:g})"


class EffectiveHamiltonian:
    def __init__(
        self,
        observables: ObservableSet,
        lagrange: LagrangeState | Sequence[float] | np.ndarray,
        biases: Sequence[BiasField] = (),
        include_base: bool = True,
        bounds: tuple | None = None,
    ):
        if not isinstance(lagrange, LagrangeState):
            lagrange = LagrangeState(np.asarray(lagrange, dtype=np.float64))
        if lagrange.lam.shape != (observables.n_obs,):
            raise ValueError(
                f"need {observables.n_obs} multipliers, got {lagrange.lam.shape[0]}"
            )
        self.observables = observables
        self.lagrange = lagrange
        self.biases = tuple(biases)
        self.include_base = include_base
        if bounds is not None:
            lo, hi = bounds
            lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (observables.input_dim,)).copy()
            hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (observables.input_dim,)).copy()
            if not np.all(hi > lo):
                raise ValueError("bounds must satisfy hi > lo")
            bounds = (lo, hi)
        self.bounds = bounds

    @property
    def lam(self) -> np.ndarray:
        return self.lagrange.lam

    @property
    def dim(self) -> int:
        return self.observables.input_dim

    def _replace(self, **kw) -> "EffectiveHamiltonian":
        args = dict(
            observables=self.observables,
            lagrange=self.lagrange,
            biases=self.biases,
            include_base=self.include_base,
            bounds=self.bounds,
        )
        args.update(kw)
        return EffectiveHamiltonian(**args)

    def with_lagrange(self, lagrange) -> "EffectiveHamiltonian":
        return self._replace(lagrange=lagrange)

    def with_observables(self, observables: ObservableSet) -> "EffectiveHamiltonian":
        return self._replace(observables=observables)

    def base_energy(self, x: np.ndarray) -> np.ndarray:
        """``sum_i lam_i f_i(x)``, ignoring bias fields and bounds."""
        return self.observables.values(x) @ self.lam

    def in_bounds(self, x: np.ndarray) -> np.ndarray:
        if self.bounds is None:
            return np.ones(x.shape[0], dtype=bool)
        lo, hi = self.bounds
        return np.all((x >= lo) & (x <= hi), axis=1)

    def terms(self, x: np.ndarray) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        out = {}
        if self.include_base:
            out["base"] = self.base_energy(x)
        for k, b in enumerate(self.biases):
            out[f"bias[{k}] {b.describe()}"] = b.contribution(x)
        return out

    def energy(self, x: np.ndarray, check: bool = True) -> np.ndarray:
        """Energies for a batch.

        Points outside ``bounds`` get ``+inf``.  With ``check`` set, a
        non-finite term at an in-bounds point raises and names the term;
        otherwise it is reported as ``+inf`` so the sampler can reject it.
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.dim)
        if not np.all(np.isfinite(x)):
            raise ValueError("energy evaluated at a non-finite configuration")
        inside = self.in_bounds(x)
        total = np.zeros(x.shape[0])
        with np.errstate(all="ignore"):
            for name, t in self.terms(x).items():
                bad = ~np.isfinite(t) & inside
                if check and np.any(bad):
                    raise NonFiniteEnergyError(f"non-finite energy term {name!r}")
                total = total + t
        total[~np.isfinite(total)] = np.inf
        total[~inside] = np.inf
        return total

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.energy(x)


def energy(H: EffectiveHamiltonian, x: np.ndarray) -> np.ndarray:
    return H.energy(x)


def add_discriminator_bias(H: EffectiveHamiltonian, g, alpha: float) -> EffectiveHamiltonian:
    """``H + alpha * g(x)``; g scores 1 for generated, 0 for real."""
    if alpha < 0:
        raise ValueError("discriminator bias strength must be non-negative")
    return H._replace(biases=H.biases + (BiasField("discriminator", float(alpha), _snapshot(g)),))


def add_classifier_bias(
    H: EffectiveHamiltonian, h, target: int, alpha: float, n_labels: int = 10
) -> EffectiveHamiltonian:
    """Favor configurations the classifier ``h`` assigns to label ``target``."""
    if not 0 <= int(target) < n_labels:
        raise ValueError(f"target label {target} outside 0..{n_labels - 1}")
    b = BiasField("classifier", float(alpha), _snapshot(h), int(target))
    return H._replace(biases=H.biases + (b,))


def add_constant_bias(H: EffectiveHamiltonian, c: float) -> EffectiveHamiltonian:
    return H._replace(biases=H.biases + (BiasField("constant", float(c)),))


def detach_base(H: EffectiveHamiltonian) -> EffectiveHamiltonian:
    """Keep only the bias fields (generation driven by the bias networks alone)."""
    if not H.biases:
        raise ValueError("Hamiltonian has no bias fields; nothing would remain")
    return H._replace(include_base=False)
