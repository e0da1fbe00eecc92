"""Metropolis sampling of exp(-H(x)) with persistent chains, plus 1D grid densities.

Chains are stored as one vectorized batch (:class:`Chains`): row ``c`` of
every array is the state of chain ``c``.  Random numbers come from a single
counter-based Philox generator and are drawn in fixed-size blocks per sweep,
so the compiled kernels, the numpy kernels and the generic path all consume
exactly the same stream.

Proposals
---------
``full``
    ``x' = x + step * N(0, I)`` on the whole vector; one proposal per chain per
    sweep.  Points outside the Hamiltonian's bounds have infinite energy and
    are rejected.
``pixel``
    one uniformly chosen coordinate gets ``+ step * N(0, 1)`` and is clamped
    to ``[0, 1]``; a sweep is ``dim`` such proposals per chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .hamiltonian import EffectiveHamiltonian
from .observables import ObservableSet

__all__ = [
    "Chains",
    "Ensemble",
    "GridDensity",
    "init_chains",
    "metropolis_step",
    "sweep",
    "burn_in",
    "run_ensemble",
    "adapt_step_size",
    "grid_density",
    "MIN_ADAPT_PROPOSALS",
]

MIN_ADAPT_PROPOSALS = 100
ADAPT_GAIN = 2.0


@dataclass
class Chains:
    x: np.ndarray
    energy: np.ndarray
    step: np.ndarray
    accepted: np.ndarray
    proposed: np.ndarray
    rng: np.random.Generator
    proposal: str = "full"
    nonfinite: int = 0
    hamiltonian: EffectiveHamiltonian | None = field(default=None, repr=False)
    _acc_mark: np.ndarray | None = field(default=None, repr=False)
    _prop_mark: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self._acc_mark is None:
            self._acc_mark = self.accepted.copy()
            self._prop_mark = self.proposed.copy()

    @property
    def n_chains(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def steps_per_sweep(self) -> int:
        return self.dim if self.proposal == "pixel" else 1

    def acceptance(self) -> float:
        p = self.proposed.sum()
        return float(self.accepted.sum() / p) if p else float("nan")

    def window(self) -> tuple[np.ndarray, np.ndarray]:
        """Accepted and proposed counts since the last step-size adaptation."""
        return self.accepted - self._acc_mark, self.proposed - self._prop_mark

    def copy(self) -> "Chains":
        rng = np.random.Generator(type(self.rng.bit_generator)())
        rng.bit_generator.state = self.rng.bit_generator.state
        return Chains(
            self.x.copy(), self.energy.copy(), self.step.copy(), self.accepted.copy(),
            self.proposed.copy(), rng, self.proposal, self.nonfinite, self.hamiltonian,
            self._acc_mark.copy(), self._prop_mark.copy(),
        )


def init_chains(
    H: EffectiveHamiltonian,
    n_chains: int = 64,
    seed: int = 0,
    x0: np.ndarray | None = None,
    step: float = 0.5,
    proposal: str = "full",
    init_scale: float = 1.0,
) -> Chains:
    """Start ``n_chains`` chains.

    Without ``x0``, starting points are uniform inside the Hamiltonian's
    bounds (pixel chains: uniform in [0, 1]) or ``N(0, init_scale^2)`` when
    unbounded.  ``x0`` rows are reused cyclically if fewer than ``n_chains``.
    """
    if n_chains < 1:
        raise ValueError("need at least one chain")
    if proposal not in ("full", "pixel"):
        raise ValueError(f"unknown proposal scheme {proposal!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    d = H.dim
    if x0 is not None:
        x0 = np.asarray(x0, dtype=np.float64).reshape(-1, d)
        x = x0[np.arange(n_chains) % x0.shape[0]].copy()
    elif proposal == "pixel":
        x = rng.random((n_chains, d))
    elif H.bounds is not None:
        lo, hi = H.bounds
        x = lo + (hi - lo) * rng.random((n_chains, d))
    else:
        x = init_scale * rng.standard_normal((n_chains, d))
    x = np.ascontiguousarray(x)
    chains = Chains(
        x=x,
        energy=H.energy(x, check=False),
        step=np.full(n_chains, float(step)),
        accepted=np.zeros(n_chains, dtype=np.int64),
        proposed=np.zeros(n_chains, dtype=np.int64),
        rng=rng,
        proposal=proposal,
        hamiltonian=H,
    )
    return chains


def _sync(chains: Chains, H: EffectiveHamiltonian) -> None:
    if chains.hamiltonian is not H:
        chains.energy = H.energy(chains.x, check=False)
        chains.hamiltonian = H


def _draw(chains: Chains, n_steps: int):
    C, d = chains.x.shape
    rng = chains.rng
    if chains.proposal == "pixel":
        idx = rng.integers(0, d, size=(n_steps, C), dtype=np.int64)
        normals = rng.standard_normal((n_steps, C))
        u = rng.random((n_steps, C))
        with np.errstate(divide="ignore"):
            return idx, normals, np.log(u)
    normals = rng.standard_normal((n_steps, C, d))
    u = rng.random((n_steps, C))
    with np.errstate(divide="ignore"):
        return normals, np.log(u)


def _generic_steps(chains: Chains, H: EffectiveHamiltonian, draws) -> int:
    x, e = chains.x, chains.energy
    rows = np.arange(chains.n_chains)
    nonfinite = 0
    if chains.proposal == "pixel":
        idx, normals, logu = draws
    else:
        normals, logu = draws
    for s in range(logu.shape[0]):
        if chains.proposal == "pixel":
            xp = x.copy()
            cols = idx[s]
            xp[rows, cols] = np.clip(x[rows, cols] + chains.step * normals[s], 0.0, 1.0)
        else:
            xp = x + chains.step[:, None] * normals[s]
        inside = H.in_bounds(xp)
        enew = H.energy(xp, check=False)
        bad = inside & ~np.isfinite(enew)
        nonfinite += int(bad.sum())
        ok = np.isfinite(enew)
        acc = ok & (logu[s] < e - np.where(ok, enew, 0.0))
        x[acc] = xp[acc]
        e[acc] = enew[acc]
        chains.accepted[acc] += 1
    return nonfinite


def sweep(
    chains: Chains,
    H: EffectiveHamiltonian,
    n_sweeps: int = 1,
    backend: str | None = "auto",
) -> Chains:
    """Advance every chain by ``n_sweeps`` sweeps (in place; returns ``chains``).

    ``backend`` is ``"auto"`` (compiled kernel if possible), ``"cython"``,
    ``"python"`` (numpy kernel) or ``"generic"`` (per-step ``H.energy``).
    """
    _sync(chains, H)
    n_steps = n_sweeps * chains.steps_per_sweep
    if n_steps <= 0:
        return chains
    draws = _draw(chains, n_steps)
    plan = None if backend == "generic" else kernels.plan_for(H, chains.proposal)
    if plan is None:
        if backend in ("cython", "python"):
            raise ValueError("no kernel supports this Hamiltonian/proposal combination")
        nf = _generic_steps(chains, H, draws)
    else:
        mod = kernels.backend_module(None if backend == "auto" else backend)
        nf = plan.run(mod, chains, draws)
    chains.nonfinite += int(nf)
    chains.proposed += n_steps
    return chains


def metropolis_step(chains: Chains, H: EffectiveHamiltonian) -> Chains:
    """One proposal per chain (a single coordinate for pixel chains)."""
    _sync(chains, H)
    draws = _draw(chains, 1)
    nf = _generic_steps(chains, H, draws)
    chains.nonfinite += nf
    chains.proposed += 1
    return chains


def adapt_step_size(chains: Chains, target_acceptance: float = 0.4) -> Chains:
    """Multiplicative step update toward the target acceptance rate.

    Only chains with at least ``MIN_ADAPT_PROPOSALS`` proposals since their
    last adaptation are touched; their windows are then reset.
    """
    acc, prop = chains.window()
    ready = prop >= MIN_ADAPT_PROPOSALS
    if not np.any(ready):
        return chains
    rate = acc[ready] / prop[ready]
    chains.step[ready] *= np.exp(ADAPT_GAIN * (rate - target_acceptance))
    chains._acc_mark[ready] = chains.accepted[ready]
    chains._prop_mark[ready] = chains.proposed[ready]
    return chains


def burn_in(
    chains: Chains,
    H: EffectiveHamiltonian,
    n_sweeps: int,
    adapt: bool = True,
    target_acceptance: float = 0.4,
    backend: str | None = "auto",
) -> Chains:
    """Equilibration sweeps; the step size adapts whenever a window fills."""
    per = max(1, math.ceil(MIN_ADAPT_PROPOSALS / chains.steps_per_sweep))
    done = 0
    while done < n_sweeps:
        k = min(per, n_sweeps - done)
        sweep(chains, H, k, backend=backend)
        done += k
        if adapt:
            adapt_step_size(chains, target_acceptance)
    return chains


@dataclass
class Ensemble:
    """Samples collected from the chains with their observable values."""

    samples: np.ndarray
    values: np.ndarray
    energies: np.ndarray
    means: np.ndarray
    observables: ObservableSet | None = field(default=None, repr=False)
    _grad_cache: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_samples(cls, samples: np.ndarray, H: EffectiveHamiltonian) -> "Ensemble":
        samples = np.asarray(samples, dtype=np.float64).reshape(-1, H.dim)
        values = H.observables.values(samples)
        energies = H.energy(samples, check=False)
        return cls(samples, values, energies, values.mean(axis=0), H.observables)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def covariance(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.values, rowvar=False, bias=True))

    def mean_parameter_gradients(self) -> np.ndarray:
        """``(n_obs, n_params)`` ensemble means of each observable's parameter gradient."""
        if self._grad_cache is None:
            obs = self.observables
            rows = []
            for j in range(obs.n_obs):
                w = np.zeros(obs.n_obs)
                w[j] = 1.0 / self.n
                rows.append(obs.parameter_gradients(self.samples, w))
            self._grad_cache = np.array(rows).reshape(obs.n_obs, obs.n_params)
        return self._grad_cache


def run_ensemble(
    chains: Chains,
    H: EffectiveHamiltonian,
    n_sweeps: int,
    thinning: int = 5,
    backend: str | None = "auto",
) -> Ensemble:
    """Sweep the chains and record one sample per chain every ``thinning`` sweeps.

    The step size is left untouched.  Samples are ordered record-major
    (all chains at the first record time, then the second, ...).
    """
    if n_sweeps < 1 or thinning < 1:
        raise ValueError("n_sweeps and thinning must be >= 1")
    if chains.n_chains < 1:
        raise ValueError("need at least one chain")
    records = []
    done = 0
    while done + thinning <= n_sweeps:
        sweep(chains, H, thinning, backend=backend)
        done += thinning
        records.append(chains.x.copy())
    if done < n_sweeps:
        sweep(chains, H, n_sweeps - done, backend=backend)
    if not records:
        raise ValueError("n_sweeps smaller than thinning: no sample recorded")
    return Ensemble.from_samples(np.concatenate(records), H)


@dataclass
class GridDensity:
    """A density normalized by the trapezoidal rule on a uniform grid."""

    lo: float
    hi: float
    x: np.ndarray
    p: np.ndarray

    @property
    def n_points(self) -> int:
        return self.x.size

    @property
    def dx(self) -> float:
        return (self.hi - self.lo) / (self.n_points - 1)

    def integral(self) -> float:
        return float(np.trapezoid(self.p, self.x))

    def pdf(self, x) -> np.ndarray:
        return np.interp(x, self.x, self.p, left=0.0, right=0.0)

    def cdf(self) -> np.ndarray:
        c = np.concatenate([[0.0], np.cumsum(0.5 * (self.p[1:] + self.p[:-1]) * np.diff(self.x))])
        return c / c[-1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws from the piecewise-linear CDF."""
        return np.interp(rng.random(n), self.cdf(), self.x)

    @classmethod
    def from_values(cls, x: np.ndarray, values: np.ndarray) -> "GridDensity":
        x = np.asarray(x, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and non-negative")
        z = np.trapezoid(values, x)
        if not z > 0:
            raise ValueError("density has zero mass on the grid")
        return cls(float(x[0]), float(x[-1]), x, values / z)


def grid_density(H, bounds: tuple[float, float], n_points: int = 3001) -> GridDensity:
    """Normalized ``exp(-H)`` on a uniform grid for a 1D Hamiltonian.

    ``H`` may be an :class:`EffectiveHamiltonian` or any vectorized callable.
    The minimum energy is subtracted before exponentiating.
    """
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
        raise ValueError("grid bounds must be finite with hi > lo")
    if n_points < 2:
        raise ValueError("need at least two grid points")
    x = np.linspace(lo, hi, n_points)
    if isinstance(H, EffectiveHamiltonian):
        if H.dim != 1:
            raise ValueError("grid densities need a 1D Hamiltonian")
        e = H.energy(x[:, None], check=False)
    else:
        e = np.asarray(H(x), dtype=np.float64)
    e = np.where(np.isnan(e), np.inf, e)
    finite = np.isfinite(e)
    if not np.any(finite):
        raise ValueError("energy is infinite on the whole grid")
    p = np.zeros_like(x)
    p[finite] = np.exp(-(e[finite] - e[finite].min()))
    return GridDensity.from_values(x, p)
