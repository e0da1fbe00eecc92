"""Density comparison, mode detection and network score summaries."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks
from scipy.stats import ks_2samp

from .hamiltonian import network_scores
from .sampler import GridDensity

__all__ = [
    "EPS_KL",
    "Histogram1D",
    "ScoreSummary",
    "kl_divergence",
    "kl_both",
    "true_density_bimodal",
    "bimodal_mixture_pdf",
    "count_modes",
    "score_summary",
    "accuracy",
    "two_sample_ks",
]

EPS_KL = 1e-12


@dataclass
class Histogram1D:
    edges: np.ndarray
    counts: np.ndarray
    total: float

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if self.edges.ndim != 1 or self.edges.size != self.counts.size + 1:
            raise ValueError("need len(edges) == len(counts) + 1")
        if not np.all(np.diff(self.edges) > 0):
            raise ValueError("histogram edges must be strictly increasing")

    @classmethod
    def from_samples(cls, samples, edges) -> "Histogram1D":
        """Histogram of ``samples``; values outside the edges are dropped from ``counts``
        but still counted in ``total``."""
        samples = np.asarray(samples, dtype=np.float64).reshape(-1)
        counts, edges = np.histogram(samples, bins=np.asarray(edges, dtype=np.float64))
        return cls(edges, counts.astype(np.float64), float(samples.size))

    @classmethod
    def from_density(cls, density: GridDensity, edges, total: float = 1.0) -> "Histogram1D":
        """Expected bin masses of ``density`` (exact integral of its piecewise-linear form)."""
        edges = np.asarray(edges, dtype=np.float64)
        xs = np.union1d(density.x, edges)
        xs = xs[(xs >= edges[0]) & (xs <= edges[-1])]
        ps = density.pdf(xs)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (ps[1:] + ps[:-1]) * np.diff(xs))])
        mass = np.diff(np.interp(edges, xs, cum))
        return cls(edges, total * mass, float(total))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def probabilities(self) -> np.ndarray:
        s = self.counts.sum()
        if s <= 0:
            raise ValueError("histogram is empty")
        return self.counts / s

    def density(self) -> np.ndarray:
        return self.probabilities() / self.widths

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["left", "right", "count", "density"])
        dens = self.density() if self.counts.sum() > 0 else np.zeros_like(self.counts)
        for a, b, c, d in zip(self.edges[:-1], self.edges[1:], self.counts, dens):
            w.writerow([repr(float(a)), repr(float(b)), repr(float(c)), repr(float(d))])
        return buf.getvalue()


def _floored(p, q, eps):
    # the floor never lifts q above p, so values below eps cannot turn negative
    return np.maximum(q, np.minimum(p, eps))


def _kl_grid(p: GridDensity, q: GridDensity, eps: float) -> float:
    if p.x.shape != q.x.shape or not np.allclose(p.x, q.x, rtol=0, atol=1e-12 * (1 + abs(p.hi))):
        raise ValueError("densities live on different grids")
    # both renormalized on the common grid so the result is a proper divergence
    pp = p.p / np.trapezoid(p.p, p.x)
    qq = q.p / np.trapezoid(q.p, q.x)
    integrand = np.zeros_like(pp)
    pos = pp > 0
    integrand[pos] = pp[pos] * np.log(pp[pos] / _floored(pp[pos], qq[pos], eps))
    return float(np.trapezoid(integrand, p.x))


def _kl_hist(p: Histogram1D, q: Histogram1D, eps: float) -> float:
    if p.edges.shape != q.edges.shape or not np.allclose(p.edges, q.edges, rtol=0, atol=1e-12):
        raise ValueError("histograms have different bin edges")
    pp, qq = p.probabilities(), q.probabilities()
    pos = pp > 0
    # eps is a density floor; convert to a per-bin probability
    floor = eps * q.widths[pos]
    return float(np.sum(pp[pos] * np.log(pp[pos] / _floored(pp[pos], qq[pos], floor))))


def kl_divergence(p, q, eps: float = EPS_KL) -> float:
    """``KL(p || q)`` in nats.

    Both arguments are :class:`GridDensity` on the same grid or
    :class:`Histogram1D` with the same edges.  ``q`` is floored at ``eps``
    wherever ``p > 0``.
    """
    if isinstance(p, GridDensity) and isinstance(q, GridDensity):
        return _kl_grid(p, q, eps)
    if isinstance(p, Histogram1D) and isinstance(q, Histogram1D):
        return _kl_hist(p, q, eps)
    raise TypeError("kl_divergence needs two GridDensity or two Histogram1D objects")


def kl_both(p, q, eps: float = EPS_KL) -> tuple[float, float]:
    """``(KL(p || q), KL(q || p))``."""
    return kl_divergence(p, q, eps), kl_divergence(q, p, eps)


def _check_mixture(params):
    params = tuple(float(v) for v in params)
    if len(params) != 4:
        raise ValueError("mixture parameters are (loc1, scale1, loc2, scale2)")
    if not all(np.isfinite(params)) or params[1] <= 0 or params[3] <= 0:
        raise ValueError(f"invalid mixture parameters {params}")
    return params


def bimodal_mixture_pdf(x, params, kind: str = "gaussian") -> np.ndarray:
    """Equal-weight two-component mixture.

    ``params = (loc1, scale1, loc2, scale2)``; scale is the standard
    deviation for ``gaussian`` and the half width at half maximum for
    ``cauchy``.
    """
    m1, s1, m2, s2 = _check_mixture(params)
    x = np.asarray(x, dtype=np.float64)
    if kind == "gaussian":
        comp = lambda m, s: np.exp(-0.5 * ((x - m) / s) ** 2) / (s * np.sqrt(2 * np.pi))  # noqa: E731
    elif kind == "cauchy":
        comp = lambda m, s: s / (np.pi * ((x - m) ** 2 + s * s))  # noqa: E731
    else:
        raise ValueError(f"unknown mixture kind {kind!r}")
    return 0.5 * comp(m1, s1) + 0.5 * comp(m2, s2)


def true_density_bimodal(params, kind: str = "gaussian", grid=(-15.0, 15.0, 3001)) -> GridDensity:
    """The analytic mixture on a uniform grid ``(lo, hi, n_points)``.

    Values are the exact pdf, not renormalized; heavy Cauchy tails therefore
    leave some mass outside a finite grid.
    """
    lo, hi, n = float(grid[0]), float(grid[1]), int(grid[2])
    x = np.linspace(lo, hi, n)
    return GridDensity(lo, hi, x, bimodal_mixture_pdf(x, params, kind))


def count_modes(density: GridDensity, prominence: float = 0.05) -> np.ndarray:
    """Locations of local maxima whose prominence exceeds ``prominence * max(p)``."""
    p = np.asarray(density.p, dtype=np.float64)
    top = p.max()
    if not top > 0:
        return np.zeros(0)
    peaks, _ = find_peaks(p, prominence=prominence * top)
    return np.sort(density.x[peaks])


@dataclass
class ScoreSummary:
    n: int
    mean: float
    std: float
    quantiles: dict
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    label_counts: np.ndarray | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["left", "right", "count"])
        for a, b, c in zip(self.hist_edges[:-1], self.hist_edges[1:], self.hist_counts):
            w.writerow([repr(float(a)), repr(float(b)), int(c)])
        return buf.getvalue()


def score_summary(network, samples, bins: int = 20) -> ScoreSummary:
    """Summary of a network's scores on ``samples``.

    Scalar outputs are summarized directly; probability vectors through
    the winning-class probability, with a per-label count of predictions.
    """
    s = np.asarray(network_scores(network, samples), dtype=np.float64)
    labels = None
    if s.ndim == 2 and s.shape[1] > 1:
        labels = np.bincount(np.argmax(s, axis=1), minlength=s.shape[1])
        s = s.max(axis=1)
    s = s.reshape(-1)
    qs = np.quantile(s, [0.05, 0.25, 0.5, 0.75, 0.95])
    lo, hi = (0.0, 1.0) if s.min() >= 0 and s.max() <= 1 else (s.min(), s.max() + 1e-12)
    counts, edges = np.histogram(s, bins=bins, range=(lo, hi))
    return ScoreSummary(
        n=s.size,
        mean=float(s[0] + np.mean(s - s[0])),
        std=float(np.std(s - s[0])),
        quantiles={q: float(v) for q, v in zip((5, 25, 50, 75, 95), qs)},
        hist_edges=edges,
        hist_counts=counts,
        label_counts=labels,
    )


def accuracy(network, samples, labels) -> float:
    """Fraction of samples whose arg-max (or thresholded) score matches ``labels``."""
    s = np.asarray(network_scores(network, samples), dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    pred = np.argmax(s, axis=1) if s.ndim == 2 and s.shape[1] > 1 else (s.reshape(-1) > 0.5)
    return float(np.mean(pred.astype(np.int64) == labels.astype(np.int64)))


def two_sample_ks(a, b) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value for two 1D samples."""
    r = ks_2samp(np.ravel(a), np.ravel(b))
    return float(r.statistic), float(r.pvalue)
