"""Datasets: synthetic 1D mixtures and the 8x8 handwritten-digits corpus."""

from __future__ import annotations

import gzip
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "DataFormatError",
    "GAUSSIAN_PARAMS",
    "CAUCHY_PARAMS",
    "synth_bimodal",
    "load_digits",
    "default_digits_path",
    "subset",
    "concat",
    "split",
]

# (loc1, scale1, loc2, scale2); scale is sigma or HWHM
GAUSSIAN_PARAMS = (-2.0, 0.5, 2.0, 0.5)
CAUCHY_PARAMS = (-3.0, 0.5, 3.0, 0.5)

DIGIT_SIDE = 8
DIGIT_LEVELS = 16


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray
    labels: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
            if self.labels.shape[0] != self.x.shape[0]:
                raise ValueError(
                    f"{self.labels.shape[0]} labels for {self.x.shape[0]} samples"
                )

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def synth_bimodal(kind: str = "gaussian", params=None, n: int = 1000, seed: int = 0) -> Dataset:
    """``n`` draws from an equal-weight two-component mixture.

    Component choice, then a standard normal (gaussian) or an inverse-CDF
    Cauchy draw ``loc + hwhm * tan(pi * (u - 1/2))``.
    """
    if kind not in ("gaussian", "cauchy"):
        raise ValueError(f"unknown mixture kind {kind!r}")
    if params is None:
        params = GAUSSIAN_PARAMS if kind == "gaussian" else CAUCHY_PARAMS
    params = tuple(float(v) for v in params)
    if len(params) != 4 or not all(np.isfinite(params)) or params[1] <= 0 or params[3] <= 0:
        raise ValueError(f"invalid mixture parameters {params}")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    second = rng.random(n) < 0.5
    loc = np.where(second, params[2], params[0])
    scale = np.where(second, params[3], params[1])
    if kind == "gaussian":
        z = rng.standard_normal(n)
    else:
        z = np.tan(np.pi * (rng.random(n) - 0.5))
    prov = {"source": "synthetic", "kind": kind, "params": list(params), "n": int(n), "seed": int(seed)}
    return Dataset((loc + scale * z)[:, None], None, prov)


def default_digits_path() -> Path | None:
    """The digits CSV shipped with scikit-learn, if that package is installed."""
    try:
        import sklearn
    except ImportError:
        return None
    p = Path(sklearn.__file__).parent / "datasets" / "data" / "digits.csv.gz"
    return p if p.exists() else None


def load_digits(path) -> Dataset:
    """Read the 8x8 digits CSV: 64 pixel values in 0..16, then the label.

    Plain or gzip-compressed files are accepted; pixels are scaled to
    [0, 1].  Malformed rows raise :class:`DataFormatError` with the line
    number.
    """
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    n_pix = DIGIT_SIDE * DIGIT_SIDE
    rows, labels = [], []
    with opener(path, "rt") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != n_pix + 1:
                raise DataFormatError(
                    f"{path}:{lineno}: expected {n_pix + 1} fields, found {len(parts)}"
                )
            try:
                vals = [float(v) for v in parts]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            pix = np.array(vals[:n_pix])
            if np.any(pix != np.round(pix)) or np.any(pix < 0) or np.any(pix > DIGIT_LEVELS):
                bad = int(np.flatnonzero((pix != np.round(pix)) | (pix < 0) | (pix > DIGIT_LEVELS))[0])
                raise DataFormatError(
                    f"{path}:{lineno}: pixel {bad} = {pix[bad]:g} outside 0..{DIGIT_LEVELS}"
                )
            lab = vals[n_pix]
            if lab != int(lab) or not 0 <= lab <= 9:
                raise DataFormatError(f"{path}:{lineno}: label {lab:g} outside 0..9")
            rows.append(pix)
            labels.append(int(lab))
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    x = np.array(rows) / DIGIT_LEVELS
    return Dataset(x, np.array(labels), {"source": str(path), "rows": len(rows)})


def subset(ds: Dataset, n: int, seed: int = 0, drop_labels: bool = False) -> Dataset:
    """Uniform random subset of ``n`` rows without replacement."""
    if not 0 < n <= len(ds):
        raise ValueError(f"cannot draw {n} samples from a dataset of {len(ds)}")
    idx = np.random.default_rng(seed).permutation(len(ds))[:n]
    labels = None if drop_labels or ds.labels is None else ds.labels[idx]
    prov = {**ds.provenance, "subset": {"n": int(n), "seed": int(seed), "drop_labels": drop_labels}}
    return Dataset(ds.x[idx], labels, prov)


def split(ds: Dataset, fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Random train/held-out split."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    idx = np.random.default_rng(seed).permutation(len(ds))
    k = int(round(fraction * len(ds)))
    parts = []
    for sel in (idx[:k], idx[k:]):
        labels = None if ds.labels is None else ds.labels[sel]
        parts.append(Dataset(ds.x[sel], labels, {**ds.provenance, "split": [fraction, seed]}))
    return parts[0], parts[1]


def concat(*sets: Dataset) -> Dataset:
    """Stack datasets; labels survive only if every part has them."""
    x = np.concatenate([s.x for s in sets])
    labels = None
    if all(s.labels is not None for s in sets):
        labels = np.concatenate([s.labels for s in sets])
    return Dataset(x, labels, {"source": "concat", "parts": [s.provenance for s in sets]})
