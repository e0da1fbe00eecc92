"""Training of the external networks used as bias fields.

* discriminator ``g(x)``: probability that ``x`` was generated (label 1)
  rather than taken from the real data (label 0); sigmoid head.
* classifier ``h(x)``: probability vector over the digit labels; softmax head.

Both default to the observable CNN shape with ReLU activations.  A random
hold-out fraction is kept aside and its accuracy is reported.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset
from .metrics import accuracy
from .nets import CNN_CHANNELS, Network, build_from_arch
from .optim import Adam

__all__ = [
    "BiasNetConfig",
    "BiasNetReport",
    "cnn_head_arch",
    "train_discriminator",
    "train_classifier",
]

IMBALANCE_LIMIT = 10.0


@dataclass
class BiasNetConfig:
    epochs: int = 30
    lr: float = 3e-3
    batch_size: int = 32
    holdout: float = 0.2
    seed: int = 0
    activation: str = "relu"
    channels: Sequence[int] = CNN_CHANNELS


@dataclass
class BiasNetReport:
    losses: list = field(default_factory=list)
    train_accuracy: float = float("nan")
    holdout_accuracy: float = float("nan")
    n_train: int = 0
    n_holdout: int = 0
    warnings: list = field(default_factory=list)
    wall_clock: float = 0.0


def cnn_head_arch(side: int, n_out: int, head: str, config: BiasNetConfig) -> dict:
    return dict(
        kind="cnn",
        input_dim=int(side * side),
        side=int(side),
        channels=[int(c) for c in config.channels],
        n_out=int(n_out),
        activation=config.activation,
        seed=int(config.seed),
        head=head,
    )


def _side(x: np.ndarray) -> int:
    side = int(round(np.sqrt(x.shape[1])))
    if side * side != x.shape[1]:
        raise ValueError(f"inputs of size {x.shape[1]} are not square images")
    return side


def _fit(net: Network, targets: np.ndarray, x: np.ndarray, labels: np.ndarray, config: BiasNetConfig):
    g = net.graph
    y = g.placeholder("y", net.out.shape)
    if net.arch["head"] == "sigmoid":
        loss = g.sigmoid_xent(net.out, y)
    else:
        loss = g.softmax_xent(net.out, y)

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(x.shape[0])
    n_hold = int(round(config.holdout * x.shape[0])) if x.shape[0] > 1 else 0
    hold, fit = order[:n_hold], order[n_hold:]
    report = BiasNetReport(n_train=fit.size, n_holdout=hold.size)
    opt = Adam(lr=config.lr)
    theta = net.theta.copy()
    t0 = time.perf_counter()
    for _ in range(config.epochs):
        perm = fit[rng.permutation(fit.size)]
        tot = 0.0
        for start in range(0, perm.size, config.batch_size):
            idx = perm[start: start + config.batch_size]
            b = net.layout.unflatten(theta)
            b["x"] = x[idx]
            b["y"] = targets[idx]
            tape = g.forward(b, upto=loss)
            grads = g.backward(tape, loss)
            flat = net.layout.flatten({name: grads[name] for name, _ in net.layout.entries})
            theta = opt.step(theta, flat)
            tot += float(tape[loss]) * idx.size
        report.losses.append(tot / max(fit.size, 1))
    report.wall_clock = time.perf_counter() - t0
    trained = net.with_theta(theta)
    report.train_accuracy = accuracy(trained, x[fit], labels[fit]) if fit.size else float("nan")
    if hold.size:
        report.holdout_accuracy = accuracy(trained, x[hold], labels[hold])
    return trained, report


def train_discriminator(
    real: Dataset, generated: Dataset, config: BiasNetConfig | None = None
) -> tuple[Network, BiasNetReport]:
    """Binary classifier scoring 1 for generated and 0 for real images."""
    config = config or BiasNetConfig()
    if len(real) == 0 or len(generated) == 0:
        raise ValueError("both real and generated sets must be non-empty")
    if real.dim != generated.dim:
        raise ValueError("real and generated samples have different sizes")
    ratio = max(len(real), len(generated)) / min(len(real), len(generated))
    x = np.concatenate([real.x, generated.x])
    labels = np.concatenate([np.zeros(len(real), np.int64), np.ones(len(generated), np.int64)])
    net = build_from_arch(cnn_head_arch(_side(x), 1, "sigmoid", config))
    trained, report = _fit(net, labels[:, None].astype(np.float64), x, labels, config)
    if ratio > IMBALANCE_LIMIT:
        msg = f"class imbalance {ratio:.1f}:1 between real and generated sets"
        report.warnings.append(msg)
        warnings.warn(msg, stacklevel=2)
    return trained, report


def train_classifier(
    labeled: Dataset, config: BiasNetConfig | None = None, n_labels: int = 10
) -> tuple[Network, BiasNetReport]:
    """Softmax classifier over ``n_labels`` classes."""
    config = config or BiasNetConfig()
    if labeled.labels is None:
        raise ValueError("classifier training needs labels")
    if len(labeled) == 0:
        raise ValueError("empty dataset")
    if labeled.labels.min() < 0 or labeled.labels.max() >= n_labels:
        raise ValueError(f"labels must lie in 0..{n_labels - 1}")
    onehot = np.eye(n_labels)[labeled.labels]
    net = build_from_arch(cnn_head_arch(_side(labeled.x), n_labels, "softmax", config))
    return _fit(net, onehot, labeled.x, labeled.labels, config)
