"""Variational autoencoder baseline with a fixed-variance Gaussian decoder.

Encoder: x -> tanh MLP -> (mu, log var) of a diagonal Gaussian latent.
Decoder: z -> tanh MLP -> mean of ``N(x_hat, noise^2 I)``.  Training
maximizes the single-sample reparametrized ELBO with ADAM on minibatches.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Graph, Node
from .nets import ParamLayout, init_theta
from .optim import Adam
from .trainer import CHI2_GUARD, TrainingDiverged

__all__ = [
    "VaeModel",
    "VaeConfig",
    "VaeReport",
    "build_vae",
    "elbo",
    "loss_and_grad",
    "train_vae",
    "sample_vae",
]


def _mlp(g: Graph, h: Node, widths: Sequence[int], prefix: str) -> Node:
    for k in range(len(widths) - 1):
        W = g.parameter(f"{prefix}W{k}", (widths[k], widths[k + 1]))
        b = g.parameter(f"{prefix}b{k}", (widths[k + 1],))
        h = g.affine(h, W, b)
        if k < len(widths) - 2:
            h = g.tanh(h)
    return h


def _decoder(g: Graph, z: Node, arch: dict) -> Node:
    return _mlp(g, z, [arch["latent"], *arch["decoder_hidden"], arch["input_dim"]], "dec_")


@dataclass
class VaeModel:
    arch: dict
    theta: np.ndarray
    graph: Graph = field(repr=False)
    layout: ParamLayout = field(repr=False)
    nodes: dict = field(repr=False)
    dec_graph: Graph = field(repr=False)
    dec_out: Node = field(repr=False)

    @property
    def latent(self) -> int:
        return int(self.arch["latent"])

    @property
    def input_dim(self) -> int:
        return int(self.arch["input_dim"])

    @property
    def noise(self) -> float:
        return float(self.arch["noise"])

    def with_theta(self, theta) -> "VaeModel":
        theta = np.array(theta, dtype=np.float64)
        if theta.shape != (self.layout.size,):
            raise ValueError(f"parameter vector must have length {self.layout.size}")
        return VaeModel(self.arch, theta, self.graph, self.layout, self.nodes, self.dec_graph, self.dec_out)

    def params(self) -> dict[str, np.ndarray]:
        return self.layout.unflatten(self.theta)

    def encode(self, x) -> tuple[np.ndarray, np.ndarray]:
        b = self.params()
        b["x"] = np.asarray(x, dtype=np.float64).reshape(-1, self.input_dim)
        b["eps"] = np.zeros((b["x"].shape[0], self.latent))
        tape = self.graph.forward(b, upto=self.nodes["logvar"])
        return tape[self.nodes["mu"]], tape[self.nodes["logvar"]]

    def decode(self, z) -> np.ndarray:
        b = {k: v for k, v in self.params().items() if k.startswith("dec_")}
        b["z"] = np.asarray(z, dtype=np.float64).reshape(-1, self.latent)
        return self.dec_graph.forward(b, upto=self.dec_out)[self.dec_out]


def build_vae(
    input_dim: int = 1,
    hidden: Sequence[int] = (32, 32),
    latent: int = 2,
    noise: float = 0.1,
    seed: int = 0,
    decoder_hidden: Sequence[int] | None = None,
) -> VaeModel:
    """Encoder hidden layout ``hidden``; the decoder mirrors it unless given."""
    if latent < 1 or input_dim < 1:
        raise ValueError("latent and input_dim must be >= 1")
    if noise < 0:
        raise ValueError("noise scale must be non-negative")
    dec_hidden = list(reversed(hidden)) if decoder_hidden is None else list(decoder_hidden)
    arch = dict(
        kind="vae",
        input_dim=int(input_dim),
        hidden=[int(w) for w in hidden],
        decoder_hidden=[int(w) for w in dec_hidden],
        latent=int(latent),
        noise=float(noise),
        seed=int(seed),
    )
    return vae_from_arch(arch)


def vae_from_arch(arch: dict, theta=None) -> VaeModel:
    g = Graph()
    x = g.placeholder("x", (None, arch["input_dim"]))
    eps = g.placeholder("eps", (None, arch["latent"]))
    h = _mlp(g, x, [arch["input_dim"], *arch["hidden"]], "enc_") if arch["hidden"] else x
    if arch["hidden"]:
        h = g.tanh(h)
    width = arch["hidden"][-1] if arch["hidden"] else arch["input_dim"]
    mu = g.affine(h, g.parameter("mu_W", (width, arch["latent"])), g.parameter("mu_b", (arch["latent"],)))
    lv = g.affine(h, g.parameter("lv_W", (width, arch["latent"])), g.parameter("lv_b", (arch["latent"],)))
    z = g.add(mu, g.mul(g.exp(g.scale(lv, 0.5)), eps))
    xhat = _decoder(g, z, arch)
    # per-sample squared error and KL, averaged over the batch
    sq = g.mean(g.sum(g.square(g.sub(x, xhat)), axis=1))
    kl = g.scale(g.mean(g.sum(g.sub(g.add(g.square(mu), g.exp(lv)), lv), axis=1)), 0.5)
    s2 = max(arch["noise"] ** 2, 1e-300)
    loss = g.add(g.scale(sq, 0.5 / s2), kl)
    layout = ParamLayout.from_graph(g)

    dg = Graph()
    dz = dg.placeholder("z", (None, arch["latent"]))
    dout = _decoder(dg, dz, arch)

    if theta is None:
        theta = init_theta(layout, arch.get("seed", 0))
    theta = np.array(theta, dtype=np.float64)
    if theta.shape != (layout.size,):
        raise ValueError(f"parameter vector must have length {layout.size}")
    nodes = dict(mu=mu, logvar=lv, z=z, xhat=xhat, sq=sq, kl=kl, loss=loss)
    return VaeModel(dict(arch), theta, g, layout, nodes, dg, dout)


def _bindings(model: VaeModel, x, eps):
    b = model.params()
    b["x"] = np.asarray(x, dtype=np.float64).reshape(-1, model.input_dim)
    b["eps"] = np.asarray(eps, dtype=np.float64).reshape(b["x"].shape[0], model.latent)
    return b


def elbo(model: VaeModel, x, eps) -> tuple[float, float, float]:
    """Per-sample ELBO with a given noise draw: ``(total, reconstruction, KL)``.

    The reconstruction term is the Gaussian log-likelihood of ``x`` under the
    decoder mean with the fixed noise scale; the KL term is measured against
    the standard normal prior.
    """
    if model.noise <= 0:
        raise ValueError("the ELBO needs a positive noise scale")
    tape = model.graph.forward(_bindings(model, x, eps), upto=model.nodes["loss"])
    d = model.input_dim
    s = model.noise
    rec = -0.5 * float(tape[model.nodes["sq"]]) / s**2 - d * math.log(s * math.sqrt(2 * math.pi))
    kl = float(tape[model.nodes["kl"]]) - 0.5 * model.latent
    return rec - kl, rec, kl


def loss_and_grad(model: VaeModel, x, eps) -> tuple[float, np.ndarray]:
    """Negative ELBO (up to a constant) and its gradient w.r.t. the flat parameters."""
    g = model.graph
    tape = g.forward(_bindings(model, x, eps), upto=model.nodes["loss"])
    grads = g.backward(tape, model.nodes["loss"])
    flat = model.layout.flatten({name: grads[name] for name, _ in model.layout.entries})
    return float(tape[model.nodes["loss"]]), flat


@dataclass
class VaeConfig:
    epochs: int = 1000
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    guard: float = CHI2_GUARD


@dataclass
class VaeReport:
    losses: list = field(default_factory=list)
    wall_clock: float = 0.0


def train_vae(model: VaeModel, data, config: VaeConfig | None = None, callback=None):
    """ADAM on the negative ELBO; returns ``(model, report)``.

    One noise draw per datum per step; minibatch order and noise come from
    ``config.seed``.  ``report.losses`` holds the per-epoch mean loss.
    """
    config = config or VaeConfig()
    x = np.asarray(getattr(data, "x", data), dtype=np.float64).reshape(-1, model.input_dim)
    if x.shape[0] == 0:
        raise ValueError("training data is empty")
    if config.epochs < 0 or config.batch_size < 1 or config.lr <= 0:
        raise ValueError("invalid VAE training configuration")
    rng = np.random.default_rng(config.seed)
    opt = Adam(lr=config.lr)
    theta = model.theta.copy()
    report = VaeReport()
    t0 = time.perf_counter()
    n = x.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        tot = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start: start + config.batch_size]
            eps = rng.standard_normal((idx.size, model.latent))
            loss, grad = loss_and_grad(model.with_theta(theta), x[idx], eps)
            if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
                raise TrainingDiverged(f"VAE epoch {epoch}: non-finite loss or gradient")
            theta = opt.step(theta, grad)
            tot += loss * idx.size
        mean = tot / n
        if mean > config.guard:
            raise TrainingDiverged(f"VAE epoch {epoch}: loss {mean:.4g} exceeds the guard")
        report.losses.append(mean)
        if callback is not None:
            callback(epoch, model.with_theta(theta), report)
    report.wall_clock = time.perf_counter() - t0
    return model.with_theta(theta), report


def sample_vae(model: VaeModel, n: int, seed: int = 0) -> np.ndarray:
    """Ancestral samples: ``z ~ N(0, I)``, ``x = decoder(z) + noise * N(0, I)``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.latent))
    mean = model.decode(z)
    return mean + model.noise * rng.standard_normal(mean.shape)
