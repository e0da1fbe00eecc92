"""Backend selection for the Metropolis sweep kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels`` takes over.  Setting
``MINMAXENT_PURE_PYTHON=1`` forces the fallback.

:func:`plan_for` decides whether a Hamiltonian can be handed to a kernel at
all (plain tanh MLP or CNN observables, no bias fields).  Anything else goes
through the generic sampler path, which calls ``H.energy`` per step.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("MINMAXENT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def backend_module(name: str | None = None):
    """The kernel module for ``name`` ('cython' or 'python'); default: active."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def compiled_available() -> bool:
    try:
        from . import _ckernels  # noqa: F401
    except ImportError:
        return False
    return True


class MlpPlan:
    proposal = "full"

    def __init__(self, H):
        net = H.observables.network
        self.theta = np.ascontiguousarray(net.theta)
        self.widths = np.array(
            [net.arch["input_dim"], *net.arch["hidden"], net.arch["n_out"]], dtype=np.int64
        )
        self.lam = np.ascontiguousarray(H.lam, dtype=np.float64)
        d = H.dim
        if H.bounds is None:
            self.lo = np.full(d, -np.inf)
            self.hi = np.full(d, np.inf)
        else:
            self.lo = np.ascontiguousarray(H.bounds[0])
            self.hi = np.ascontiguousarray(H.bounds[1])

    def run(self, mod, chains, draws) -> int:
        normals, logu = draws
        return mod.mlp_sweeps(
            chains.x, chains.energy, chains.step, self.theta, self.widths, self.lam,
            self.lo, self.hi, normals, logu, chains.accepted,
        )


class CnnPlan:
    proposal = "pixel"

    def __init__(self, H):
        net = H.observables.network
        p = net.layout.unflatten(net.theta)
        lam = np.asarray(H.lam, dtype=np.float64)
        self.K1 = np.ascontiguousarray(p["K0"])
        self.b1 = np.ascontiguousarray(p["c0"])
        self.K2 = np.ascontiguousarray(p["K1"])
        self.b2 = np.ascontiguousarray(p["c1"])
        self.v = np.ascontiguousarray(p["W"] @ lam)
        self.e0 = float(p["b"] @ lam)
        self.side = int(net.arch["side"])

    def run(self, mod, chains, draws) -> int:
        idx, normals, logu = draws
        return mod.cnn_sweeps(
            chains.x, chains.energy, chains.step, self.K1, self.b1, self.K2, self.b2,
            self.v, self.e0, self.side, idx, normals, logu, chains.accepted,
        )


def plan_for(H, proposal: str):
    """A kernel plan for ``H``, or ``None`` when the generic path is needed."""
    if H.biases or not H.include_base:
        return None
    obs = H.observables
    net = getattr(obs, "network", None)
    if net is None or net.arch.get("activation") != "tanh":
        return None
    kind = net.arch["kind"]
    if kind == "mlp" and proposal == "full":
        return MlpPlan(H)
    if (
        kind == "cnn"
        and proposal == "pixel"
        and len(net.arch["channels"]) == 2
        and (H.bounds is None or (np.all(H.bounds[0] <= 0) and np.all(H.bounds[1] >= 1)))
    ):
        return CnnPlan(H)
    return None
