"""Parameter layouts and the small network architectures built on :mod:`autodiff`."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Graph, Node

__all__ = [
    "ParamLayout",
    "Network",
    "build_mlp",
    "build_cnn",
    "build_from_arch",
    "init_theta",
    "CNN_CHANNELS",
]

CNN_CHANNELS = (8, 8)


class ParamLayout:
    """Named shapes packed into one flat float64 vector, in declaration order."""

    def __init__(self, entries: Sequence[tuple[str, tuple[int, ...]]]):
        self.entries = [(name, tuple(int(d) for d in shape)) for name, shape in entries]
        self.offsets: dict[str, tuple[int, int]] = {}
        pos = 0
        for name, shape in self.entries:
            n = int(np.prod(shape, dtype=np.int64))
            self.offsets[name] = (pos, pos + n)
            pos += n
        self.size = pos

    @classmethod
    def from_graph(cls, graph: Graph) -> "ParamLayout":
        return cls([(p.name, p.shape) for p in graph.parameters])

    def unflatten(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        if theta.shape != (self.size,):
            raise ValueError(f"expected flat parameters of length {self.size}, got {theta.shape}")
        return {
            name: theta[a:b].reshape(shape)
            for (name, shape), (a, b) in zip(self.entries, self.offsets.values())
        }

    def flatten(self, arrays: dict[str, np.ndarray]) -> np.ndarray:
        out = np.empty(self.size, dtype=np.float64)
        for name, shape in self.entries:
            a, b = self.offsets[name]
            out[a:b] = np.asarray(arrays[name], dtype=np.float64).reshape(-1)
        return out

    def to_json(self) -> list:
        return [[name, list(shape)] for name, shape in self.entries]

    @classmethod
    def from_json(cls, data) -> "ParamLayout":
        return cls([(name, tuple(shape)) for name, shape in data])

    def __eq__(self, other) -> bool:
        return isinstance(other, ParamLayout) and self.entries == other.entries


@dataclass
class Network:
    """A graph plus a flat parameter vector.

    ``arch`` is a plain dict that fully describes how to rebuild the graph,
    which is what checkpoints store.  The graph exposes a placeholder ``x``
    of shape ``(B, input_dim)`` and the output node ``out``.
    """

    arch: dict
    graph: Graph
    layout: ParamLayout
    theta: np.ndarray
    out: Node
    extra: dict[str, Node] = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return int(self.arch["input_dim"])

    @property
    def n_out(self) -> int:
        return int(self.out.shape[1])

    def bindings(self, x: np.ndarray, **more) -> dict[str, np.ndarray]:
        b = self.layout.unflatten(self.theta)
        b["x"] = np.asarray(x, dtype=np.float64).reshape(-1, self.input_dim)
        b.update(more)
        return b

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Raw output of the network (logits or observables) for a batch."""
        tape = self.graph.forward(self.bindings(x), upto=self.out)
        return tape[self.out]

    def weighted_gradients(self, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of ``sum(w * net(x))`` w.r.t. the flat parameters and ``x``."""
        b = self.bindings(x)
        b["w"] = np.broadcast_to(np.asarray(w, dtype=np.float64), (b["x"].shape[0], self.n_out))
        tape = self.graph.forward(b, upto=self.extra["wsum"])
        grads = self.graph.backward(tape, self.extra["wsum"])
        flat = self.layout.flatten({name: grads[name] for name, _ in self.layout.entries})
        return flat, grads["x"]

    def with_theta(self, theta: np.ndarray) -> "Network":
        theta = np.array(theta, dtype=np.float64)
        if theta.shape != (self.layout.size,):
            raise ValueError(f"parameter vector must have length {self.layout.size}")
        return Network(self.arch, self.graph, self.layout, theta, self.out, self.extra)

    def copy(self) -> "Network":
        return self.with_theta(self.theta)


def _activation(g: Graph, name: str, x: Node) -> Node:
    if name == "tanh":
        return g.tanh(x)
    if name == "relu":
        return g.relu(x)
    raise ValueError(f"unknown activation {name!r}")


def _mlp_graph(input_dim: int, hidden: Sequence[int], n_out: int, activation: str):
    g = Graph()
    x = g.placeholder("x", (None, input_dim))
    h = x
    widths = [input_dim, *hidden, n_out]
    for k in range(len(widths) - 1):
        W = g.parameter(f"W{k}", (widths[k], widths[k + 1]))
        b = g.parameter(f"b{k}", (widths[k + 1],))
        h = g.affine(h, W, b)
        if k < len(widths) - 2:
            h = _activation(g, activation, h)
    return g, h


def _cnn_graph(side: int, channels: Sequence[int], n_out: int, activation: str):
    g = Graph()
    x = g.placeholder("x", (None, side * side))
    h = g.reshape(x, (1, side, side))
    c_in = 1
    for k, c in enumerate(channels):
        K = g.parameter(f"K{k}", (c, c_in, 3, 3))
        b = g.parameter(f"c{k}", (c,))
        h = _activation(g, activation, g.conv2d(h, K, b))
        c_in = c
    h = g.reshape(h, (c_in * side * side,))
    W = g.parameter("W", (c_in * side * side, n_out))
    b = g.parameter("b", (n_out,))
    return g, g.affine(h, W, b)


def _fans(name: str, shape: tuple[int, ...]) -> tuple[int, int] | None:
    if len(shape) == 2:
        return shape[0], shape[1]
    if len(shape) == 4:
        rf = shape[2] * shape[3]
        return shape[1] * rf, shape[0] * rf
    return None


def init_theta(layout: ParamLayout, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    parts = {}
    for name, shape in layout.entries:
        fans = _fans(name, shape)
        if fans is None:
            parts[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (fans[0] + fans[1]))
            parts[name] = rng.uniform(-limit, limit, size=shape)
    return layout.flatten(parts)


def build_from_arch(arch: dict, theta: np.ndarray | None = None) -> Network:
    kind = arch["kind"]
    if kind == "mlp":
        g, out = _mlp_graph(arch["input_dim"], arch["hidden"], arch["n_out"], arch["activation"])
    elif kind == "cnn":
        side = arch["side"]
        g, out = _cnn_graph(side, arch["channels"], arch["n_out"], arch["activation"])
    else:
        raise ValueError(f"unknown architecture kind {kind!r}")
    layout = ParamLayout.from_graph(g)
    # weighted output sum, the seed for every parameter/input gradient
    w = g.placeholder("w", out.shape)
    wsum = g.sum(g.mul(out, w))
    if theta is None:
        theta = init_theta(layout, arch.get("seed", 0))
    theta = np.array(theta, dtype=np.float64)
    if theta.shape != (layout.size,):
        raise ValueError(f"parameter vector must have length {layout.size}, got {theta.shape}")
    return Network(dict(arch), g, layout, theta, out, {"w": w, "wsum": wsum})


def build_mlp(
    input_dim: int,
    hidden: Sequence[int],
    n_out: int,
    seed: int = 0,
    activation: str = "tanh",
) -> Network:
    if input_dim < 1 or n_out < 1:
        raise ValueError("input_dim and n_out must be >= 1")
    if len(hidden) == 0:
        raise ValueError("hidden layout must not be empty")
    if any(int(w) < 1 for w in hidden):
        raise ValueError(f"zero-width layer in hidden layout {list(hidden)}")
    arch = dict(
        kind="mlp",
        input_dim=int(input_dim),
        hidden=[int(w) for w in hidden],
        n_out=int(n_out),
        activation=activation,
        seed=int(seed),
    )
    return build_from_arch(arch)


def build_cnn(
    side: int = 8,
    n_out: int = 16,
    seed: int = 0,
    channels: Sequence[int] = CNN_CHANNELS,
    activation: str = "tanh",
) -> Network:
    if side < 4:
        raise ValueError("image side must be >= 4")
    if n_out < 1:
        raise ValueError("n_out must be >= 1")
    arch = dict(
        kind="cnn",
        input_dim=int(side * side),
        side=int(side),
        channels=[int(c) for c in channels],
        n_out=int(n_out),
        activation=activation,
        seed=int(seed),
    )
    return build_from_arch(arch)
