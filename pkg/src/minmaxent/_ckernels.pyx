# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Metropolis sweep kernels.

Mirrors ``_pykernels`` exactly: same arguments, same random-number
consumption, same in-place updates.  The CNN kernel only recomputes the
activations inside the receptive field of the perturbed pixel.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh
from libc.stdint cimport uint64_t
from libc.string cimport memcpy

cnp.import_array()


cdef inline bint isfinite(double v) noexcept nogil:
    # exponent test on the bit pattern; survives -ffinite-math-only
    cdef uint64_t bits
    memcpy(&bits, &v, 8)
    return (bits & 0x7FF0000000000000ULL) != 0x7FF0000000000000ULL


cdef void _tanh_inplace(double* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        a[i] = tanh(a[i])


cdef double _mlp_energy(const double* xin, Py_ssize_t d, const double[::1] theta,
                        const cnp.int64_t[::1] widths, const double[::1] lam,
                        double* bufa, double* bufb) noexcept nogil:
    cdef Py_ssize_t n_layers = widths.shape[0] - 1
    cdef Py_ssize_t l, i, j, nin, nout, off = 0
    cdef double ci
    cdef double* cur = bufa
    cdef double* out = bufb
    cdef double* tmp
    for i in range(d):
        cur[i] = xin[i]
    for l in range(n_layers):
        nin = widths[l]
        nout = widths[l + 1]
        for j in range(nout):
            out[j] = theta[off + nin * nout + j]
        for i in range(nin):
            ci = cur[i]
            for j in range(nout):
                out[j] += ci * theta[off + i * nout + j]
        if l < n_layers - 1:
            _tanh_inplace(out, nout)
        off += nin * nout + nout
        tmp = cur
        cur = out
        out = tmp
    ci = 0.0
    for j in range(widths[n_layers]):
        ci += lam[j] * cur[j]
    return ci


def mlp_energy(x, theta, widths, lam):
    x = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] xv = x
    cdef const double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef const cnp.int64_t[::1] wd = np.ascontiguousarray(widths, dtype=np.int64)
    cdef const double[::1] lm = np.ascontiguousarray(lam, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], c
    maxw = int(np.max(widths))
    cdef double[::1] bufa = np.empty(maxw)
    cdef double[::1] bufb = np.empty(maxw)
    out = np.empty(n)
    cdef double[::1] ov = out
    for c in range(n):
        ov[c] = _mlp_energy(&xv[c, 0], xv.shape[1], th, wd, lm, &bufa[0], &bufb[0])
    return out


def mlp_sweeps(double[:, ::1] x, double[::1] e, const double[::1] step,
               const double[::1] theta, const cnp.int64_t[::1] widths,
               const double[::1] lam, const double[::1] lo, const double[::1] hi,
               const double[:, :, ::1] normals, const double[:, ::1] logu,
               cnp.int64_t[::1] accepted):
    cdef Py_ssize_t S = normals.shape[0], C = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t s, c, k
    cdef long nonfinite = 0
    cdef bint inside
    cdef double enew
    maxw = int(np.max(widths))
    cdef double[::1] bufa = np.empty(maxw)
    cdef double[::1] bufb = np.empty(maxw)
    cdef double[::1] xp = np.empty(d)
    with nogil:
        for c in range(C):
            for s in range(S):
                inside = True
                for k in range(d):
                    xp[k] = x[c, k] + step[c] * normals[s, c, k]
                    if xp[k] < lo[k] or xp[k] > hi[k]:
                        inside = False
                if not inside:
                    continue
                enew = _mlp_energy(&xp[0], d, theta, widths, lam, &bufa[0], &bufb[0])
                if not isfinite(enew):
                    nonfinite += 1
                    continue
                if logu[s, c] < e[c] - enew:
                    for k in range(d):
                        x[c, k] = xp[k]
                    e[c] = enew
                    accepted[c] += 1
    return nonfinite


cdef inline double _clip01(double v) noexcept nogil:
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


def cnn_sweeps(double[:, ::1] x, double[::1] e, const double[::1] step,
               const double[:, :, :, ::1] K1, const double[::1] b1,
               const double[:, :, :, ::1] K2, const double[::1] b2,
               const double[::1] v, double e0, Py_ssize_t side,
               const cnp.int64_t[:, ::1] idx, const double[:, ::1] normals,
               const double[:, ::1] logu, cnp.int64_t[::1] accepted):
    # Per chain: zero-padded image (border 1), zero-padded first-layer
    # activations (border 1), second-layer pre-activations padded by 2 so
    # that scatter updates near the edge need no bounds checks.  Everything
    # is rebuilt from scratch on entry; within a call the second-layer
    # pre-activations and the energy are updated incrementally.
    cdef Py_ssize_t S = idx.shape[0], C = x.shape[0]
    cdef Py_ssize_t c1 = K1.shape[0], c2 = K2.shape[0], ss = side * side
    cdef Py_ssize_t p1 = side + 2, p2 = side + 4
    cdef Py_ssize_t s, c, p, py, px, k, k2, y, xx, i, j, yy, xc, ry, rx
    cdef long nonfinite = 0
    cdef double old, new, acc, enew, d, de
    xpad_arr = np.zeros((p1, p1))
    h1_arr = np.zeros((c1, p1, p1))
    h1n_arr = np.zeros((c1, 3, 3))
    a2_arr = np.zeros((c2, p2, p2))
    a2n_arr = np.zeros((c2, 5, 5))
    h2_arr = np.zeros((c2, side, side))
    h2n_arr = np.zeros((c2, 5, 5))
    cdef double[:, ::1] xpad = xpad_arr
    cdef double[:, :, ::1] h1 = h1_arr
    cdef double[:, :, ::1] h1n = h1n_arr
    cdef double[:, :, ::1] a2 = a2_arr
    cdef double[:, :, ::1] a2n = a2n_arr
    cdef double[:, :, ::1] h2 = h2_arr
    cdef double[:, :, ::1] h2n = h2n_arr

    with nogil:
        for c in range(C):
            # rebuild state for this chain
            for y in range(side):
                for xx in range(side):
                    xpad[y + 1, xx + 1] = x[c, y * side + xx]
            for k in range(c1):
                for y in range(side):
                    for xx in range(side):
                        acc = b1[k]
                        for i in range(3):
                            for j in range(3):
                                acc = acc + K1[k, 0, i, j] * xpad[y + i, xx + j]
                        h1[k, y + 1, xx + 1] = tanh(acc)
            enew = e0
            for k2 in range(c2):
                for y in range(side):
                    for xx in range(side):
                        acc = b2[k2]
                        for k in range(c1):
                            for i in range(3):
                                for j in range(3):
                                    acc = acc + K2[k2, k, i, j] * h1[k, y + i, xx + j]
                        a2[k2, y + 2, xx + 2] = acc
                        h2[k2, y, xx] = tanh(acc)
                        enew = enew + v[k2 * ss + y * side + xx] * h2[k2, y, xx]
            e[c] = enew

            for s in range(S):
                p = idx[s, c]
                py = p // side
                px = p % side
                old = x[c, p]
                new = _clip01(old + step[c] * normals[s, c])
                xpad[py + 1, px + 1] = new
                # second-layer pre-activations on the 5x5 window, padded coords
                for k2 in range(c2):
                    for ry in range(5):
                        for rx in range(5):
                            a2n[k2, ry, rx] = a2[k2, py + ry, px + rx]
                # first layer on the 3x3 window; scatter its change into a2n
                for k in range(c1):
                    for ry in range(3):
                        y = py + ry - 1
                        if y < 0 or y >= side:
                            continue
                        for rx in range(3):
                            xx = px + rx - 1
                            if xx < 0 or xx >= side:
                                continue
                            acc = b1[k]
                            for i in range(3):
                                for j in range(3):
                                    acc = acc + K1[k, 0, i, j] * xpad[y + i, xx + j]
                            acc = tanh(acc)
                            h1n[k, ry, rx] = acc
                            d = acc - h1[k, y + 1, xx + 1]
                            if d == 0.0:
                                continue
                            # output (y - i + 1, xx - j + 1) sees input (y, xx) via tap (i, j)
                            for k2 in range(c2):
                                for i in range(3):
                                    for j in range(3):
                                        a2n[k2, ry + 2 - i, rx + 2 - j] += K2[k2, k, i, j] * d
                xpad[py + 1, px + 1] = old
                de = 0.0
                for k2 in range(c2):
                    for ry in range(5):
                        y = py + ry - 2
                        if y < 0 or y >= side:
                            continue
                        for rx in range(5):
                            xx = px + rx - 2
                            if xx < 0 or xx >= side:
                                continue
                            acc = tanh(a2n[k2, ry, rx])
                            h2n[k2, ry, rx] = acc
                            de = de + v[k2 * ss + y * side + xx] * (acc - h2[k2, y, xx])
                enew = e[c] + de
                if not isfinite(enew):
                    nonfinite += 1
                    continue
                if logu[s, c] < e[c] - enew:
                    x[c, p] = new
                    xpad[py + 1, px + 1] = new
                    e[c] = enew
                    accepted[c] += 1
                    for k in range(c1):
                        for ry in range(3):
                            y = py + ry - 1
                            if y < 0 or y >= side:
                                continue
                            for rx in range(3):
                                xx = px + rx - 1
                                if xx < 0 or xx >= side:
                                    continue
                                h1[k, y + 1, xx + 1] = h1n[k, ry, rx]
                    for k2 in range(c2):
                        for ry in range(5):
                            for rx in range(5):
                                a2[k2, py + ry, px + rx] = a2n[k2, ry, rx]
                        for ry in range(5):
                            y = py + ry - 2
                            if y < 0 or y >= side:
                                continue
                            for rx in range(5):
                                xx = px + rx - 2
                                if xx < 0 or xx >= side:
                                    continue
                                h2[k2, y, xx] = h2n[k2, ry, rx]
    return nonfinite
