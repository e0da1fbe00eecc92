"""Pure numpy implementation of the Metropolis sweep kernels.

Same signatures and in-place semantics as the compiled ``_ckernels``
module.  Chains are advanced together, one proposal per chain per step.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def mlp_energy(x, theta, widths, lam):
    h = x
    off = 0
    n_layers = len(widths) - 1
    for k in range(n_layers):
        nin, nout = int(widths[k]), int(widths[k + 1])
        W = theta[off: off + nin * nout].reshape(nin, nout)
        off += nin * nout
        b = theta[off: off + nout]
        off += nout
        h = h @ W + b
        if k < n_layers - 1:
            h = np.tanh(h)
    return h @ lam


def mlp_sweeps(x, e, step, theta, widths, lam, lo, hi, normals, logu, accepted):
    nonfinite = 0
    for s in range(normals.shape[0]):
        xp = x + step[:, None] * normals[s]
        inside = np.all((xp >= lo) & (xp <= hi), axis=1)
        with np.errstate(all="ignore"):
            enew = mlp_energy(xp, theta, widths, lam)
        bad = inside & ~np.isfinite(enew)
        nonfinite += int(bad.sum())
        ok = inside & ~bad
        acc = ok & (logu[s] < e - np.where(ok, enew, 0.0))
        x[acc] = xp[acc]
        e[acc] = enew[acc]
        accepted[acc] += 1
    return nonfinite


def _conv_same(img, K, b):
    # img (N, C, H, W), K (O, C, 3, 3)
    xp = np.pad(img, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(xp, (3, 3), axis=(2, 3))
    return np.einsum("nchwij,ocij->nohw", win, K, optimize=True) + b[None, :, None, None]


def cnn_energy(x, K1, b1, K2, b2, v, e0, side):
    img = x.reshape(-1, 1, side, side)
    h1 = np.tanh(_conv_same(img, K1, b1))
    h2 = np.tanh(_conv_same(h1, K2, b2))
    return h2.reshape(x.shape[0], -1) @ v + e0


def cnn_sweeps(x, e, step, K1, b1, K2, b2, v, e0, side, idx, normals, logu, accepted):
    nonfinite = 0
    rows = np.arange(x.shape[0])
    for s in range(idx.shape[0]):
        xp = x.copy()
        cols = idx[s]
        xp[rows, cols] = np.clip(x[rows, cols] + step * normals[s], 0.0, 1.0)
        with np.errstate(all="ignore"):
            enew = cnn_energy(xp, K1, b1, K2, b2, v, e0, side)
        bad = ~np.isfinite(enew)
        nonfinite += int(bad.sum())
        acc = ~bad & (logu[s] < e - np.where(bad, 0.0, enew))
        x[acc] = xp[acc]
        e[acc] = enew[acc]
        accepted[acc] += 1
    return nonfinite
