"""Minimal maximum-entropy generative modeling.

Observables ``f_i[theta](x)`` define a maximum-entropy density
``p(x) ~ exp(-sum_i lambda_i f_i(x))``.  Training tunes the multipliers so
generated averages match the data and moves ``theta`` to lower the entropy
of that density.  Samples come from persistent Metropolis chains and can be
steered with bias fields built from independently trained networks.
"""

from .data import Dataset, load_digits, subset, synth_bimodal
from .hamiltonian import (
    EffectiveHamiltonian,
    add_classifier_bias,
    add_discriminator_bias,
    detach_base,
)
from .observables import (
    MomentObservables,
    RotatedQuadratic,
    build_cnn_observables,
    build_mlp_observables,
)
from .optim import LagrangeState
from .sampler import grid_density, init_chains, run_ensemble
from .trainer import TrainConfig, TrainReport, refine_multipliers, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "EffectiveHamiltonian",
    "LagrangeState",
    "MomentObservables",
    "RotatedQuadratic",
    "TrainConfig",
    "TrainReport",
    "add_classifier_bias",
    "add_discriminator_bias",
    "build_cnn_observables",
    "build_mlp_observables",
    "detach_base",
    "grid_density",
    "init_chains",
    "load_digits",
    "refine_multipliers",
    "run_ensemble",
    "subset",
    "synth_bimodal",
    "train",
]
