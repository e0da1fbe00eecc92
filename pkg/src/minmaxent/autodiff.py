"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Graph` is built once per architecture and then re-executed with
fresh bindings.  Evaluation state lives in a :class:`Tape`, so one graph can be
evaluated from several contexts at the same time.

Shapes are explicit.  A leading ``None`` in a declared shape marks the free
batch axis; every other axis is fixed when the graph is built.  The only
broadcasting performed is the bias addition inside ``affine`` and ``conv2d``.

Example::

    g = Graph()
    x = g.placeholder("x", (None, 1))
    W = g.parameter("W", (1, 3))
    b = g.parameter("b", (3,))
    loss = g.sum(g.square(g.tanh(g.affine(x, W, b))))
    tape = g.forward({"x": xs, "W": w0, "b": b0})
    grads = g.backward(tape, loss)
    grads["W"]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = ["Graph", "GraphShapeError", "Gradients", "Node", "Tape"]

Shape = tuple


class GraphShapeError(ValueError):
    """Raised when a bound or computed value does not match a node's shape."""


@dataclass(frozen=True)
class Node:
    index: int
    op: str
    inputs: tuple[int, ...]
    shape: Shape
    name: str | None = None
    attrs: dict = field(default_factory=dict, compare=False)

    def label(self) -> str:
        tag = f" '{self.name}'" if self.name else ""
        return f"node #{self.index} ({self.op}{tag})"


def _matches(declared: Shape, actual: tuple[int, ...]) -> bool:
    if len(declared) != len(actual):
        return False
    return all(d is None or d == a for d, a in zip(declared, actual))


def _fmt(shape: Shape) -> str:
    return "(" + ", ".join("B" if d is None else str(d) for d in shape) + ")"


class Tape:
    """Forward values for one evaluation of a graph."""

    def __init__(self, graph: "Graph", values: list[np.ndarray], cache: list[Any]):
        self.graph = graph
        self.values = values
        self._cache = cache

    def __getitem__(self, node: Node | int) -> np.ndarray:
        idx = node.index if isinstance(node, Node) else node
        return self.values[idx]


class Gradients:
    """Adjoints of every node with respect to one scalar seed."""

    def __init__(self, graph: "Graph", adjoints: list[np.ndarray], seed: int):
        self.graph = graph
        self.adjoints = adjoints
        self.seed = seed

    def __getitem__(self, key: Node | int | str) -> np.ndarray:
        if isinstance(key, str):
            return self.adjoints[self.graph.leaf(key).index]
        idx = key.index if isinstance(key, Node) else key
        return self.adjoints[idx]

    @property
    def leaves(self) -> dict[str, np.ndarray]:
        return {
            n.name: self.adjoints[n.index]
            for n in self.graph.nodes
            if n.op in ("placeholder", "parameter")
        }


class Graph:
    """A static computation graph.  Nodes are appended in topological order."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._leaves: dict[str, Node] = {}

    # construction ---------------------------------------------------------

    def _add(self, op: str, inputs: tuple[Node, ...], shape: Shape, name=None, **attrs) -> Node:
        for inp in inputs:
            if inp.index >= len(self.nodes) or self.nodes[inp.index] is not inp:
                raise ValueError(f"input {inp.label()} does not belong to this graph")
        node = Node(len(self.nodes), op, tuple(i.index for i in inputs), tuple(shape), name, attrs)
        self.nodes.append(node)
        return node

    def _leaf(self, op: str, name: str, shape: Shape) -> Node:
        if name in self._leaves:
            raise ValueError(f"duplicate leaf name {name!r}")
        if any(d is not None and d < 1 for d in shape):
            raise GraphShapeError(f"leaf {name!r} has a non-positive dimension {shape}")
        node = self._add(op, (), shape, name=name)
        self._leaves[name] = node
        return node

    def placeholder(self, name: str, shape: Shape) -> Node:
        return self._leaf("placeholder", name, shape)

    def parameter(self, name: str, shape: Shape) -> Node:
        if None in shape:
            raise GraphShapeError(f"parameter {name!r} cannot have a batch axis")
        return self._leaf("parameter", name, shape)

    def constant(self, value) -> Node:
        value = np.asarray(value, dtype=np.float64)
        return self._add("constant", (), value.shape, value=value)

    def leaf(self, name: str) -> Node:
        return self._leaves[name]

    @property
    def parameters(self) -> list[Node]:
        return [n for n in self.nodes if n.op == "parameter"]

    @property
    def placeholders(self) -> list[Node]:
        return [n for n in self.nodes if n.op == "placeholder"]

    def affine(self, x: Node, W: Node, b: Node) -> Node:
        if len(x.shape) != 2 or len(W.shape) != 2 or b.shape != (W.shape[1],) or x.shape[1] != W.shape[0]:
            raise GraphShapeError(
                f"affine: incompatible shapes x{_fmt(x.shape)} W{_fmt(W.shape)} b{_fmt(b.shape)}"
            )
        return self._add("affine", (x, W, b), (x.shape[0], W.shape[1]))

    def conv2d(self, x: Node, K: Node, b: Node) -> Node:
        """2D cross-correlation, stride 1, zero padding that preserves H and W."""
        if len(x.shape) != 4 or len(K.shape) != 4:
            raise GraphShapeError(f"conv2d: expected 4D x and K, got {_fmt(x.shape)} {_fmt(K.shape)}")
        _, c, h, w = x.shape
        o, kc, kh, kw = K.shape
        if kc != c or kh % 2 == 0 or kw % 2 == 0 or b.shape != (o,):
            raise GraphShapeError(
                f"conv2d: incompatible shapes x{_fmt(x.shape)} K{_fmt(K.shape)} b{_fmt(b.shape)}"
            )
        return self._add("conv2d", (x, K, b), (x.shape[0], o, h, w))

    def reshape(self, x: Node, shape: Shape) -> Node:
        """Reshape the per-sample part of ``x``; the batch axis is kept."""
        if x.shape[:1] != (None,):
            raise GraphShapeError("reshape expects a batched input")
        if int(np.prod(x.shape[1:])) != int(np.prod(shape)):
            raise GraphShapeError(f"reshape: cannot view {_fmt(x.shape)} as (B, {shape})")
        return self._add("reshape", (x,), (None,) + tuple(shape))

    def _unary(self, op: str, x: Node) -> Node:
        return self._add(op, (x,), x.shape)

    def tanh(self, x: Node) -> Node:
        return self._unary("tanh", x)

    def relu(self, x: Node) -> Node:
        return self._unary("relu", x)

    def sigmoid(self, x: Node) -> Node:
        return self._unary("sigmoid", x)

    def exp(self, x: Node) -> Node:
        return self._unary("exp", x)

    def square(self, x: Node) -> Node:
        return self._unary("square", x)

    def scale(self, x: Node, c: float) -> Node:
        return self._add("scale", (x,), x.shape, c=float(c))

    def _binary(self, op: str, a: Node, b: Node) -> Node:
        if a.shape != b.shape:
            raise GraphShapeError(f"{op}: shapes differ {_fmt(a.shape)} vs {_fmt(b.shape)}")
        return self._add(op, (a, b), a.shape)

    def add(self, a: Node, b: Node) -> Node:
        return self._binary("add", a, b)

    def sub(self, a: Node, b: Node) -> Node:
        return self._binary("sub", a, b)

    def mul(self, a: Node, b: Node) -> Node:
        return self._binary("mul", a, b)

    def sum(self, x: Node, axis: int | None = None) -> Node:
        return self._reduce("sum", x, axis)

    def mean(self, x: Node, axis: int | None = None) -> Node:
        return self._reduce("mean", x, axis)

    def _reduce(self, op: str, x: Node, axis: int | None) -> Node:
        if axis is None:
            return self._add(op, (x,), (), axis=None)
        if not 0 <= axis < len(x.shape):
            raise GraphShapeError(f"{op}: axis {axis} out of range for {_fmt(x.shape)}")
        shape = x.shape[:axis] + x.shape[axis + 1:]
        return self._add(op, (x,), shape, axis=axis)

    def softmax(self, logits: Node) -> Node:
        if len(logits.shape) != 2:
            raise GraphShapeError("softmax expects (B, k) logits")
        return self._unary("softmax", logits)

    def softmax_xent(self, logits: Node, targets: Node) -> Node:
        """Mean over the batch of ``-sum(targets * log_softmax(logits))``."""
        if len(logits.shape) != 2 or logits.shape != targets.shape:
            raise GraphShapeError("softmax_xent expects matching (B, k) logits and targets")
        return self._add("softmax_xent", (logits, targets), ())

    def sigmoid_xent(self, logits: Node, targets: Node) -> Node:
        """Mean binary cross-entropy of ``sigmoid(logits)`` against ``targets``."""
        if logits.shape != targets.shape:
            raise GraphShapeError("sigmoid_xent expects matching logits and targets")
        return self._add("sigmoid_xent", (logits, targets), ())

    # execution ------------------------------------------------------------

    def forward(self, bindings: Mapping[str, Any], upto: Node | None = None) -> Tape:
        """Evaluate every node, or only the ancestors of ``upto``, for ``bindings``."""
        stop = len(self.nodes) if upto is None else upto.index + 1
        values: list[np.ndarray] = [None] * stop  # type: ignore[list-item]
        cache: list[Any] = [None] * stop
        needed = self._ancestors(upto) if upto is not None else None
        for node in self.nodes[:stop]:
            if needed is not None and not needed[node.index]:
                continue
            if node.op in ("placeholder", "parameter"):
                if node.name not in bindings:
                    raise GraphShapeError(f"{node.label()} is not bound")
                val = np.asarray(bindings[node.name], dtype=np.float64)
                if not _matches(node.shape, val.shape):
                    raise GraphShapeError(
                        f"{node.label()} expects shape {_fmt(node.shape)}, got {val.shape}"
                    )
            else:
                args = [values[i] for i in node.inputs]
                try:
                    val, cache[node.index] = _FORWARD[node.op](node, *args)
                except (ValueError, IndexError) as exc:
                    raise GraphShapeError(f"{node.label()}: {exc}") from exc
                if not _matches(node.shape, val.shape):
                    raise GraphShapeError(
                        f"{node.label()} produced shape {val.shape}, declared {_fmt(node.shape)}"
                    )
            values[node.index] = val
        return Tape(self, values, cache)

    def _ancestors(self, node: Node) -> list[bool]:
        mark = [False] * (node.index + 1)
        mark[node.index] = True
        for n in reversed(self.nodes[: node.index + 1]):
            if mark[n.index]:
                for i in n.inputs:
                    mark[i] = True
        return mark

    def backward(self, tape: Tape, seed: Node) -> Gradients:
        """Adjoints of the scalar node ``seed`` with respect to every node."""
        if seed.shape != ():
            raise GraphShapeError(f"backward seed {seed.label()} is not scalar")
        if seed.index >= len(tape.values) or tape.values[seed.index] is None:
            raise ValueError("seed was not evaluated by this tape")
        n = len(tape.values)
        adj: list[np.ndarray | None] = [None] * n
        adj[seed.index] = np.ones((), dtype=np.float64)
        for node in reversed(self.nodes[: seed.index + 1]):
            g = adj[node.index]
            if g is None or not node.inputs:
                continue
            args = [tape.values[i] for i in node.inputs]
            grads = _BACKWARD[node.op](node, g, tape.values[node.index], tape._cache[node.index], *args)
            for i, gi in zip(node.inputs, grads):
                if gi is None:
                    continue
                adj[i] = gi if adj[i] is None else adj[i] + gi
        # nodes skipped by the forward pass keep a None adjoint
        out = [
            a if a is not None or tape.values[i] is None else np.zeros_like(tape.values[i])
            for i, a in enumerate(adj)
        ]
        return Gradients(self, out, seed.index)


# forward/backward rules -----------------------------------------------------


def _conv_windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))  # (B, C, H, W, kh, kw)


def _f_conv2d(node, x, K, b):
    o, c, kh, kw = K.shape
    win = _conv_windows(x, kh, kw)
    B, _, H, W = x.shape
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, c * kh * kw)
    out = (cols @ K.reshape(o, -1).T).reshape(B, H, W, o).transpose(0, 3, 1, 2)
    return out + b[None, :, None, None], cols


def _b_conv2d(node, g, out, cols, x, K, b):
    o, c, kh, kw = K.shape
    B, _, H, W = x.shape
    gmat = g.transpose(0, 2, 3, 1).reshape(B * H * W, o)
    dK = (gmat.T @ cols).reshape(K.shape)
    db = g.sum(axis=(0, 2, 3))
    gwin = _conv_windows(g, kh, kw)  # (B, O, H, W, kh, kw)
    gcols = gwin.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, o * kh * kw)
    Kflip = K[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, -1)
    dx = (gcols @ Kflip.T).reshape(B, H, W, c).transpose(0, 3, 1, 2)
    return dx, dK, db


def _reduce_back(node, g, x):
    axis = node.attrs["axis"]
    if axis is None:
        full = np.broadcast_to(g, x.shape)
    else:
        full = np.broadcast_to(np.expand_dims(g, axis), x.shape)
    if node.op == "mean":
        count = x.size if axis is None else x.shape[axis]
        full = full / count
    return (np.array(full, dtype=np.float64),)


def _log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _f_softmax(node, z):
    p = np.exp(_log_softmax(z))
    return p, None


def _b_softmax(node, g, p, _, z):
    return (p * (g - (g * p).sum(axis=1, keepdims=True)),)


def _f_softmax_xent(node, z, t):
    lp = _log_softmax(z)
    return np.asarray(-(t * lp).sum() / z.shape[0]), lp


def _b_softmax_xent(node, g, out, lp, z, t):
    p = np.exp(lp)
    n = z.shape[0]
    dz = g * (p * t.sum(axis=1, keepdims=True) - t) / n
    dt = -g * lp / n
    return dz, dt


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _f_sigmoid_xent(node, z, t):
    # log(1 + exp(-|z|)) form avoids overflow
    loss = np.maximum(z, 0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return np.asarray(loss.mean()), None


def _b_sigmoid_xent(node, g, out, _, z, t):
    n = z.size
    return g * (_sigmoid(z) - t) / n, -g * z / n


_FORWARD = {
    "constant": lambda node: (node.attrs["value"], None),
    "affine": lambda node, x, W, b: (x @ W + b, None),
    "conv2d": _f_conv2d,
    "reshape": lambda node, x: (x.reshape((x.shape[0],) + node.shape[1:]), None),
    "tanh": lambda node, x: (np.tanh(x), None),
    "relu": lambda node, x: (np.maximum(x, 0.0), None),
    "sigmoid": lambda node, x: (_sigmoid(x), None),
    "exp": lambda node, x: (np.exp(x), None),
    "square": lambda node, x: (x * x, None),
    "scale": lambda node, x: (node.attrs["c"] * x, None),
    "add": lambda node, a, b: (_same(a, b) + b, None),
    "sub": lambda node, a, b: (_same(a, b) - b, None),
    "mul": lambda node, a, b: (_same(a, b) * b, None),
    "sum": lambda node, x: (np.asarray(x.sum(axis=node.attrs["axis"])), None),
    "mean": lambda node, x: (np.asarray(x.mean(axis=node.attrs["axis"])), None),
    "softmax": _f_softmax,
    "softmax_xent": _f_softmax_xent,
    "sigmoid_xent": _f_sigmoid_xent,
}

_BACKWARD = {
    "affine": lambda node, g, out, c, x, W, b: (g @ W.T, x.T @ g, g.sum(axis=0)),
    "conv2d": _b_conv2d,
    "reshape": lambda node, g, out, c, x: (g.reshape(x.shape),),
    "tanh": lambda node, g, out, c, x: (g * (1.0 - out * out),),
    "relu": lambda node, g, out, c, x: (g * (x > 0),),
    "sigmoid": lambda node, g, out, c, x: (g * out * (1.0 - out),),
    "exp": lambda node, g, out, c, x: (g * out,),
    "square": lambda node, g, out, c, x: (2.0 * g * x,),
    "scale": lambda node, g, out, c, x: (node.attrs["c"] * g,),
    "add": lambda node, g, out, c, a, b: (g, g),
    "sub": lambda node, g, out, c, a, b: (g, -g),
    "mul": lambda node, g, out, c, a, b: (g * b, g * a),
    "sum": lambda node, g, out, c, x: _reduce_back(node, g, x),
    "mean": lambda node, g, out, c, x: _reduce_back(node, g, x),
    "softmax": _b_softmax,
    "softmax_xent": _b_softmax_xent,
    "sigmoid_xent": _b_sigmoid_xent,
}


def _same(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"operand shapes differ at runtime: {a.shape} vs {b.shape}")
    return a
