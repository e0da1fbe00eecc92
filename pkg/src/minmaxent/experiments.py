"""End-to-end pipelines shared by the CLI and the benchmark tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from . import metrics
from .data import Dataset
from .hamiltonian import EffectiveHamiltonian
from .observables import ObservableSet, build_cnn_observables, build_mlp_observables
from .sampler import GridDensity, burn_in, grid_density, init_chains, run_ensemble
from .trainer import (
    TrainConfig, TrainReport, chi_squared_terms, compute_constraints, refine_multipliers, train,
)

__all__ = [
    "GRID",
    "ONE_D_CONFIG",
    "IMAGE_CONFIG",
    "OneDResult",
    "ImageResult",
    "model_density",
    "kl_to_truth",
    "train_1d",
    "sample_kl",
    "train_images",
    "proposal_for",
    "generate",
    "final_chi2_terms",
    "window_means",
]

GRID = (-15.0, 15.0, 3001)

ONE_D_CONFIG = TrainConfig(
    lr_theta=0.1,
    epochs=1000,
    bounds=(GRID[0], GRID[1]),
    ensemble_sweeps=100,
    thinning=5,
)

IMAGE_CONFIG = TrainConfig(
    proposal="pixel",
    lr_theta=1e-3,
    epochs=200,
    init_step=0.3,
    burn_in=20,
    refresh_sweeps=2,
    ensemble_sweeps=4,
    thinning=2,
    n_chains=64,
)


def model_density(H: EffectiveHamiltonian, grid=GRID) -> GridDensity:
    return grid_density(H, (grid[0], grid[1]), int(grid[2]))


def kl_to_truth(H: EffectiveHamiltonian, kind: str, params, grid=GRID) -> tuple[float, float]:
    """``(KL(true || model), KL(model || true))`` on the evaluation grid."""
    truth = metrics.true_density_bimodal(params, kind, grid)
    return metrics.kl_both(truth, model_density(H, grid))


@dataclass
class OneDResult:
    H: EffectiveHamiltonian
    report: TrainReport
    polish: TrainReport | None
    kl_curve: list = field(default_factory=list)

    def density(self, grid=GRID) -> GridDensity:
        return model_density(self.H, grid)


def train_1d(
    data: Dataset,
    hidden=(32, 32),
    n_obs: int = 2,
    config: TrainConfig | None = None,
    seed: int = 0,
    polish_epochs: int = 200,
    polish_lr: float | None = None,
    truth: tuple[str, tuple] | None = None,
    kl_every: int = 0,
    obs: ObservableSet | None = None,
    callback: Callable | None = None,
) -> OneDResult:
    """Min-MaxEnt on 1D data with MLP observables.

    After the dual optimization the multipliers are polished with ``theta``
    frozen (and averaged).  With ``truth = (kind, params)`` and
    ``kl_every > 0`` the grid KL to the true mixture is tracked.
    """
    config = replace(config or ONE_D_CONFIG, seed=seed)
    if obs is None:
        obs = build_mlp_observables(1, hidden, n_obs, seed=seed)
    curve = []

    def cb(epoch, H, rep):
        if truth is not None and kl_every and (epoch + 1) % kl_every == 0:
            curve.append((epoch + 1, *kl_to_truth(H, truth[0], truth[1])))
        if callback is not None:
            callback(epoch, H, rep)

    H, rep = train(obs, data, config, callback=cb)
    polish = None
    if polish_epochs > 0:
        H, polish = refine_multipliers(H, data, config, polish_epochs, polish_lr, chains=rep.chains)
    return OneDResult(H, rep, polish, curve)


def sample_kl(samples, kind: str, params, grid=GRID, bin_width: float = 0.2) -> tuple[float, float]:
    """Histogram KL between samples and the true mixture, both directions.

    The truth enters through its exact bin masses; samples outside the grid
    are discarded.
    """
    lo, hi = grid[0], grid[1]
    edges = np.linspace(lo, hi, int(round((hi - lo) / bin_width)) + 1)
    hs = metrics.Histogram1D.from_samples(samples, edges)
    ht = metrics.Histogram1D.from_density(metrics.true_density_bimodal(params, kind, grid), edges)
    return metrics.kl_both(ht, hs)


@dataclass
class ImageResult:
    H: EffectiveHamiltonian
    report: TrainReport
    polish: TrainReport | None


def train_images(
    data: Dataset,
    n_obs: int = 16,
    config: TrainConfig | None = None,
    seed: int = 0,
    polish_epochs: int = 60,
    callback: Callable | None = None,
) -> ImageResult:
    """Min-MaxEnt on flattened square images with CNN observables.

    As for 1D runs, ``polish_epochs`` of multiplier-only training follow.
    """
    config = replace(config or IMAGE_CONFIG, seed=seed)
    side = int(round(np.sqrt(data.dim)))
    obs = build_cnn_observables(side, n_obs, seed=seed)
    H, rep = train(obs, data, config, callback=callback)
    polish = None
    if polish_epochs > 0:
        H, polish = refine_multipliers(H, data, config, polish_epochs, chains=rep.chains)
    return ImageResult(H, rep, polish)


def proposal_for(H: EffectiveHamiltonian) -> str:
    return "pixel" if H.observables.family == "cnn" else "full"


def generate(
    H: EffectiveHamiltonian,
    n_chains: int = 64,
    burn_in_sweeps: int = 200,
    sweeps: int = 200,
    thinning: int = 10,
    seed: int = 0,
    x0: np.ndarray | None = None,
    step: float | None = None,
):
    """Fresh chains on ``H``: adaptive burn-in, then thinned recording.

    Returns the :class:`~minmaxent.sampler.Ensemble` and the chains.
    """
    proposal = proposal_for(H)
    if step is None:
        step = 0.3 if proposal == "pixel" else 0.5
    chains = init_chains(H, n_chains, seed=seed, x0=x0, step=step, proposal=proposal)
    if burn_in_sweeps > 0:
        burn_in(chains, H, burn_in_sweeps)
    return run_ensemble(chains, H, sweeps, thinning), chains


def final_chi2_terms(H: EffectiveHamiltonian, data, chains, sweeps: int = 200, thinning: int = 2) -> np.ndarray:
    """Per-observable chi^2 of a fresh ensemble drawn from the final model."""
    stats = compute_constraints(H.observables, data)
    return chi_squared_terms(run_ensemble(chains, H, sweeps, thinning), stats)


def window_means(values, width: int = 20) -> list:
    """Means over consecutive blocks of ``width`` epochs (the last may be shorter)."""
    v = np.asarray(values, dtype=np.float64)
    return [float(v[i: i + width].mean()) for i in range(0, v.size, width)]
