"""Dual optimization of multipliers and observable parameters.

Each epoch:

1. constraint statistics (means and variances of every observable on the
   training set) are recomputed under the current parameters;
2. the persistent chains are refreshed with a few sweeps;
3. ``inner_steps`` ADAM steps on ``lam`` against chi^2, each using a fresh
   ensemble drawn from the current Hamiltonian;
4. one gradient-descent step on ``theta`` using the last ensemble together
   with the multipliers that generated it.

The entropy gradient is obtained by backpropagating the auxiliary cost

    S_aux = mean_train(lam . f) - mean_gen(lam . f)

with both ensembles held fixed.  Only ensemble averages enter: generated
and training samples are never compared individually.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .hamiltonian import EffectiveHamiltonian
from .observables import ObservableSet
from .optim import LagrangeState
from .sampler import Chains, Ensemble, burn_in, init_chains, run_ensemble

__all__ = [
    "EPS_VAR",
    "CHI2_GUARD",
    "ConstraintStats",
    "TrainConfig",
    "EpochRecord",
    "TrainReport",
    "TrainingDiverged",
    "compute_constraints",
    "chi_squared",
    "chi_squared_terms",
    "chi_squared_gradient",
    "lambda_step",
    "entropy_gradient",
    "auxiliary_cost",
    "theta_step",
    "gaussian_entropy",
    "train",
    "refine_multipliers",
]

EPS_VAR = 1e-8
CHI2_GUARD = 1e6


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ConstraintStats:
    mu: np.ndarray
    var: np.ndarray
    n: int

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.var)


def _as_data(data, dim: int) -> np.ndarray:
    x = np.asarray(getattr(data, "x", data), dtype=np.float64)
    return x.reshape(-1, dim)


def compute_constraints(obs: ObservableSet, data) -> ConstraintStats:
    """Training-set means and (floored) variances of every observable."""
    x = _as_data(data, obs.input_dim)
    if x.shape[0] == 0:
        raise ValueError("training data is empty")
    f = obs.values(x)
    var = np.maximum(f.var(axis=0), EPS_VAR)
    return ConstraintStats(f.mean(axis=0), var, x.shape[0])


def _means(ensemble) -> np.ndarray:
    return np.asarray(getattr(ensemble, "means", ensemble), dtype=np.float64).reshape(-1)


def chi_squared_terms(ensemble, stats: ConstraintStats) -> np.ndarray:
    """Per-observable contributions ``(<f_i> - mu_i)^2 / sigma_i^2``."""
    m = _means(ensemble)
    if m.shape != stats.mu.shape:
        raise ValueError(f"ensemble has {m.size} observables, constraints have {stats.mu.size}")
    return (m - stats.mu) ** 2 / stats.var


def chi_squared(ensemble, stats: ConstraintStats) -> float:
    return float(chi_squared_terms(ensemble, stats).sum())


def chi_squared_gradient(ensemble: Ensemble, stats: ConstraintStats) -> np.ndarray:
    """d chi^2 / d lam through ``d<f_i>/d lam_j = -Cov(f_i, f_j)``."""
    r = (_means(ensemble) - stats.mu) / stats.var
    if r.shape != stats.mu.shape:
        raise ValueError("ensemble and constraint dimensions differ")
    return -2.0 * ensemble.covariance() @ r


def lambda_step(
    state: LagrangeState, ensemble: Ensemble, stats: ConstraintStats, lr: float
) -> LagrangeState:
    """One ADAM step on the multipliers."""
    return state.adam_step(chi_squared_gradient(ensemble, stats), lr)


def _gen_samples(ensemble) -> np.ndarray:
    return np.asarray(getattr(ensemble, "samples", ensemble), dtype=np.float64)


def auxiliary_cost(obs: ObservableSet, lam, generated, data) -> float:
    """``mean_train(lam . f) - mean_gen(lam . f)`` for fixed sample sets."""
    lam = np.asarray(lam, dtype=np.float64)
    xt = _as_data(data, obs.input_dim)
    xg = _gen_samples(generated).reshape(-1, obs.input_dim)
    return float(obs.values(xt).mean(axis=0) @ lam - obs.values(xg).mean(axis=0) @ lam)


def entropy_gradient(obs: ObservableSet, lam, generated, data) -> np.ndarray:
    """Gradient of the maximum entropy w.r.t. the observable parameters.

    Equal to ``sum_j lam_j (<df_j/dtheta>_train - <df_j/dtheta>_gen)``;
    computed as one weighted backward pass over both sample sets.
    """
    lam = np.asarray(lam, dtype=np.float64).reshape(-1)
    if lam.shape != (obs.n_obs,):
        raise ValueError(f"need {obs.n_obs} multipliers, got {lam.size}")
    xt = _as_data(data, obs.input_dim)
    xg = _gen_samples(generated).reshape(-1, obs.input_dim)
    if xg.shape[0] == 0:
        raise ValueError("generated ensemble is empty")
    if xt.shape[0] == 0:
        raise ValueError("training data is empty")
    if obs.n_params == 0:
        return np.zeros(0)
    w = np.concatenate(
        [np.tile(lam / xt.shape[0], (xt.shape[0], 1)), np.tile(-lam / xg.shape[0], (xg.shape[0], 1))]
    )
    return obs.parameter_gradients(np.concatenate([xt, xg]), w)


def theta_step(obs: ObservableSet, grad: np.ndarray, lr: float) -> ObservableSet:
    """Plain gradient descent ``theta <- theta - lr * grad``."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != obs.theta.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match parameters {obs.theta.shape}")
    if not np.all(np.isfinite(grad)):
        bad = np.flatnonzero(~np.isfinite(grad))
        raise TrainingDiverged(
            f"non-finite entropy gradient in {bad.size} components (first index {bad[0]})"
        )
    if lr == 0 or not np.any(grad):
        return obs
    return obs.with_theta(obs.theta - lr * grad)


def gaussian_entropy(values: np.ndarray) -> tuple[float, float]:
    """Entropy of the Gaussian MaxEnt fit for rotated-quadratic observables.

    With ``f = (u^2, v^2)`` the fit is a product of centered Gaussians with
    variances ``<u^2>``, ``<v^2>``; returns the entropy and its delta-method
    standard error.
    """
    n = values.shape[0]
    m = values.mean(axis=0)
    s = 0.5 * math.log(4 * math.pi**2 * math.e**2 * m[0] * m[1])
    g = 0.5 / m
    cov = np.atleast_2d(np.cov(values, rowvar=False)) if n > 1 else np.zeros((2, 2))
    se = math.sqrt(max(float(g @ cov @ g) / n, 0.0))
    return s, se


@dataclass
class TrainConfig:
    lr_lambda: float = 1e-2
    lr_theta: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    inner_steps: int = 5
    epochs: int = 1000
    n_chains: int = 64
    proposal: str = "full"
    init_step: float = 0.5
    burn_in: int = 500
    refresh_sweeps: int = 10
    ensemble_sweeps: int = 50
    thinning: int = 5
    target_acceptance: float = 0.4
    chains_from_data: bool = False
    bounds: tuple | None = None
    seed: int = 0
    freeze_theta: bool = False
    tol_chi2: float = 0.0
    tol_grad: float = 0.0
    patience: int = 10
    chi2_guard: float = CHI2_GUARD
    backend: str = "auto"

    def validate(self) -> "TrainConfig":
        if self.lr_lambda <= 0 or self.lr_theta < 0:
            raise ValueError("learning rates must be positive")
        if self.lr_theta == 0 and not self.freeze_theta:
            raise ValueError("lr_theta must be positive unless theta is frozen")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")
        if self.n_chains < 1 or self.ensemble_sweeps < self.thinning or self.thinning < 1:
            raise ValueError("ensemble needs >= 1 chain and ensemble_sweeps >= thinning >= 1")
        if self.proposal not in ("full", "pixel"):
            raise ValueError(f"unknown proposal {self.proposal!r}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["bounds"] is not None:
            d["bounds"] = [np.asarray(b).tolist() for b in d["bounds"]]
        return d


@dataclass
class EpochRecord:
    epoch: int
    chi2: float
    mean_energy: float
    grad_theta: float
    grad_lambda: float
    lam: np.ndarray
    chi2_terms: np.ndarray
    acceptance: float
    entropy: float = float("nan")
    entropy_se: float = float("nan")
    wall: float = 0.0


@dataclass
class TrainReport:
    records: list[EpochRecord] = field(default_factory=list)
    wall_clock: float = 0.0
    stopped: str = "budget"
    stats: ConstraintStats | None = None
    chains: Chains | None = field(default=None, repr=False)
    lagrange: LagrangeState | None = None
    last_ensemble: Ensemble | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def mean_lambda(self, last: int = 1) -> np.ndarray:
        """Multipliers averaged over the last ``last`` epochs (noise reduction)."""
        return self.column("lam")[-last:].mean(axis=0)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n_obs = self.records[0].lam.size if self.records else 0
        w.writerow(
            ["epoch", "chi2", "mean_energy", "grad_theta", "grad_lambda", "acceptance", "entropy"]
            + [f"lam{i}" for i in range(n_obs)]
        )
        for r in self.records:
            w.writerow(
                [r.epoch, repr(r.chi2), repr(r.mean_energy), repr(r.grad_theta),
                 repr(r.grad_lambda), repr(r.acceptance), repr(r.entropy)]
                + [repr(float(v)) for v in r.lam]
            )
        return buf.getvalue()


def _start_chains(H, data, config, chains):
    if chains is not None:
        return chains, False
    x0 = None
    if config.chains_from_data:
        rng = np.random.default_rng(config.seed)
        x = _as_data(data, H.dim)
        x0 = x[rng.integers(0, x.shape[0], size=config.n_chains)]
    ch = init_chains(
        H, config.n_chains, seed=config.seed, x0=x0, step=config.init_step, proposal=config.proposal
    )
    return ch, True


def train(
    obs: ObservableSet,
    data,
    config: TrainConfig | None = None,
    lagrange: LagrangeState | None = None,
    chains: Chains | None = None,
    callback: Callable[[int, EffectiveHamiltonian, TrainReport], None] | None = None,
) -> tuple[EffectiveHamiltonian, TrainReport]:
    """Run the dual optimization; returns the final Hamiltonian and report.

    ``lagrange`` and ``chains`` resume a previous run.  ``callback`` is called
    after every epoch with the current Hamiltonian.
    """
    config = (config or TrainConfig()).validate()
    x = _as_data(data, obs.input_dim)
    if x.shape[0] == 0:
        raise ValueError("training data is empty")
    lagrange = lagrange or LagrangeState.zeros(obs.n_obs)
    H = EffectiveHamiltonian(obs, lagrange, bounds=config.bounds)
    chains, fresh = _start_chains(H, x, config, chains)
    if fresh and config.burn_in > 0:
        burn_in(chains, H, config.burn_in, target_acceptance=config.target_acceptance,
                backend=config.backend)

    report = TrainReport()
    t0 = time.perf_counter()
    quiet = 0
    for epoch in range(config.epochs):
        stats = compute_constraints(H.observables, x)
        if config.refresh_sweeps > 0:
            burn_in(chains, H, config.refresh_sweeps, target_acceptance=config.target_acceptance,
                    backend=config.backend)
        for _ in range(config.inner_steps):
            ens = run_ensemble(chains, H, config.ensemble_sweeps, config.thinning,
                               backend=config.backend)
            gen_lam = H.lam
            terms = chi_squared_terms(ens, stats)
            chi2 = float(terms.sum())
            if not math.isfinite(chi2) or chi2 > config.chi2_guard:
                raise TrainingDiverged(
                    f"epoch {epoch}: chi^2 = {chi2:.4g} exceeds the guard {config.chi2_guard:g}; "
                    f"lam = {np.array2string(H.lam, precision=4)}"
                )
            g_lam = chi_squared_gradient(ens, stats)
            H = H.with_lagrange(
                H.lagrange.adam_step(g_lam, config.lr_lambda, config.adam_beta1, config.adam_beta2)
            )

        if config.freeze_theta or H.observables.n_params == 0:
            g_theta = np.zeros(H.observables.n_params)
        else:
            g_theta = entropy_gradient(H.observables, gen_lam, ens, x)
            H = H.with_observables(theta_step(H.observables, g_theta, config.lr_theta))

        rec = EpochRecord(
            epoch=epoch,
            chi2=chi2,
            mean_energy=float(np.mean(ens.values @ gen_lam)),
            grad_theta=float(np.linalg.norm(g_theta)),
            grad_lambda=float(np.linalg.norm(g_lam)),
            lam=gen_lam.copy(),
            chi2_terms=terms,
            acceptance=float(chains.acceptance()),
            wall=time.perf_counter() - t0,
        )
        if obs.family == "rotated-quadratic":
            rec.entropy, rec.entropy_se = gaussian_entropy(H.observables.values(x))
        report.records.append(rec)
        report.last_ensemble = ens
        if callback is not None:
            callback(epoch, H, report)

        if config.tol_chi2 > 0 or config.tol_grad > 0:
            if chi2 < config.tol_chi2 and rec.grad_theta < config.tol_grad:
                quiet += 1
            else:
                quiet = 0
            if quiet >= config.patience:
                report.stopped = "tolerance"
                break

    report.wall_clock = time.perf_counter() - t0
    report.stats = compute_constraints(H.observables, x)
    report.chains = chains
    report.lagrange = H.lagrange
    return H, report



def refine_multipliers(
    H: EffectiveHamiltonian,
    data,
    config: TrainConfig,
    epochs: int = 200,
    lr_lambda: float | None = None,
    chains: Chains | None = None,
    average_last: int | None = None,
) -> tuple[EffectiveHamiltonian, TrainReport]:
    """Continue with ``theta`` frozen so the constraints settle.

    The returned Hamiltonian carries the multipliers averaged over the last
    ``average_last`` epochs (default: the second half), which removes most
    of the ADAM jitter.
    """
    cfg = replace(
        config,
        epochs=int(epochs),
        freeze_theta=True,
        lr_lambda=config.lr_lambda if lr_lambda is None else lr_lambda,
        tol_chi2=0.0,
        tol_grad=0.0,
        bounds=H.bounds,
    )
    H2, rep = train(H.observables, data, cfg, lagrange=H.lagrange, chains=chains)
    k = average_last or max(1, epochs // 2)
    lam = rep.mean_lambda(k)
    return H2.with_lagrange(LagrangeState(lam)), rep
