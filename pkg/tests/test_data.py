import gzip

import numpy as np
import pytest

from minmaxent.data import (
    DataFormatError, Dataset, concat, load_digits, split, subset, synth_bimodal,
)


def test_synth_bimodal_gaussian_statistics():
    ds = synth_bimodal("gaussian", (-2, 0.5, 2, 0.5), n=20000, seed=1)
    x = ds.x[:, 0]
    assert ds.x.shape == (20000, 1) and ds.labels is None
    assert np.mean(x < 0) == pytest.approx(0.5, abs=0.02)
    assert np.mean(x[x < 0]) == pytest.approx(-2, abs=0.02)
    assert np.std(x[x > 0]) == pytest.approx(0.5, abs=0.02)


def test_synth_bimodal_cauchy_median():
    x = synth_bimodal("cauchy", (-3, 0.5, 3, 0.5), n=20000, seed=2).x[:, 0]
    right = x[x > 0]
    assert np.median(right) == pytest.approx(3, abs=0.05)
    # half of a component lies within one HWHM of its center
    assert np.mean(np.abs(right - 3) < 0.5) == pytest.approx(0.5, abs=0.03)


def test_synth_bimodal_reproducible_and_errors():
    a = synth_bimodal("gaussian", n=50, seed=3)
    b = synth_bimodal("gaussian", n=50, seed=3)
    assert np.array_equal(a.x, b.x)
    assert a.provenance["seed"] == 3
    with pytest.raises(ValueError):
        synth_bimodal("uniform")
    with pytest.raises(ValueError):
        synth_bimodal("gaussian", (0, 0, 1, 1))
    with pytest.raises(ValueError):
        synth_bimodal("gaussian", n=0)


def test_load_digits_bundled(digits_path):
    ds = load_digits(digits_path)
    assert ds.x.shape == (1797, 64) and ds.dim == 64
    assert ds.x.min() == 0.0 and ds.x.max() == 1.0
    assert set(np.unique(ds.labels)) == set(range(10))


def _write(path, rows):
    path.write_text("\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
    return path


def test_load_digits_small_file(tmp_path):
    rows = [[16] * 64 + [3], [0] * 64 + [7]]
    ds = load_digits(_write(tmp_path / "d.csv", rows))
    assert np.array_equal(ds.labels, [3, 7])
    assert np.all(ds.x[0] == 1.0) and np.all(ds.x[1] == 0.0)
    gz = tmp_path / "d.csv.gz"
    with gzip.open(gz, "wt") as fh:
        fh.write((tmp_path / "d.csv").read_text())
    assert np.array_equal(load_digits(gz).x, ds.x)


@pytest.mark.parametrize(
    "row, match",
    [
        ([1] * 63 + [3], "expected 65 fields"),
        ([17] + [0] * 63 + [3], "outside 0..16"),
        ([1.5] + [0] * 63 + [3], "pixel 0"),
        ([0] * 64 + [12], "label"),
        (["a"] + [0] * 63 + [3], ":1:"),
    ],
)
def test_load_digits_malformed(tmp_path, row, match):
    with pytest.raises(DataFormatError, match=match):
        load_digits(_write(tmp_path / "bad.csv", [row]))


def test_load_digits_empty_and_missing(tmp_path):
    (tmp_path / "e.csv").write_text("\n")
    with pytest.raises(DataFormatError):
        load_digits(tmp_path / "e.csv")
    with pytest.raises(OSError):
        load_digits(tmp_path / "missing.csv")


def test_subset_split_concat():
    ds = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10))
    s = subset(ds, 4, seed=1)
    assert len(s) == 4 and np.array_equal(s.x[:, 0] / 2, s.labels)
    assert subset(ds, 4, seed=1, drop_labels=True).labels is None
    with pytest.raises(ValueError):
        subset(ds, 11)
    a, b = split(ds, 0.7, seed=2)
    assert len(a) == 7 and len(b) == 3
    assert sorted(np.r_[a.labels, b.labels]) == list(range(10))
    with pytest.raises(ValueError):
        split(ds, 1.0)
    c = concat(a, b)
    assert len(c) == 10 and c.labels is not None
    assert concat(a, Dataset(np.zeros((2, 2)))).labels is None


def test_dataset_label_mismatch():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    assert Dataset(np.zeros(5)).x.shape == (5, 1)
