import json
import subprocess
import sys

import numpy as np
import pytest

from minmaxent import io
from minmaxent.cli import main

# small budgets so every command runs in seconds
FAST_1D = ["--set", "train.burn_in=20", "--set", "train.ensemble_sweeps=10", "--set", "train.thinning=2",
           "--set", "train.polish_epochs=3", "--set", "eval.kl_every=2", "--set", "eval.samples=2000",
           "--set", "model.hidden=8"]
FAST_SAMPLE = ["--set", "sample.burn_in=5", "--set", "sample.thinning=1", "--sweeps", "4", "--n-chains", "8"]
FAST_IMG = ["--set", "image.burn_in=2", "--set", "image.ensemble_sweeps=1", "--set", "image.thinning=1",
            "--set", "image.n_chains=8", "--set", "image.polish_epochs=1", "--set", "image.snapshot_every=1",
            "--set", "model.n_obs_image=4", "--images", "20"]
FAST_NET = ["--set", "biasnet.holdout=0.25"]


def load(path):
    return json.loads(path.read_text())


def run(*argv):
    return main([str(a) for a in argv])


def test_help_lists_commands_and_keys(capsys):
    assert run("--help") == 0
    text = capsys.readouterr().out
    for cmd in ("pca-demo", "train-1d", "bias-sample", "train-classifier"):
        assert cmd in text
    assert "train.lr_lambda" in text and "MINMAXENT_OUTPUT" in text
    assert run("train-1d", "--help") == 0


def test_no_command_and_bad_flags():
    assert run() == 2
    assert run("nonsense") == 2
    assert run("train-1d", "--epochs", "x") == 2
    assert run("bias-sample", "--model", "m") == 2  # needs a bias network


def test_pca_demo(tmp_path):
    assert run("pca-demo", "--out", tmp_path, "--set", "pca.points=1000", "--set", "pca.scatter=50") == 0
    s = load(tmp_path / "summary.json")
    assert s["optimal_angle"] == pytest.approx(0.5 * np.arctan(2.0), abs=1e-12)
    assert (tmp_path / "entropy_curve.csv").read_text().count("\n") == 1001
    assert "[pca]" in (tmp_path / "run.ini").read_text()


def test_config_errors_exit_1(tmp_path, capsys):
    assert run("pca-demo", "--out", tmp_path, "--set", "pca.bogus=1") == 1
    assert "unknown configuration key" in capsys.readouterr().err
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nepochs = many\n")
    assert run("train-1d", "--config", bad, "--out", tmp_path / "o") == 1
    assert run("sample", "--model", tmp_path / "missing", "--out", tmp_path / "s") == 1


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("MINMAXENT_OUTPUT", str(tmp_path))
    assert run("pca-demo", "--set", "pca.points=10", "--set", "pca.scatter=5") == 0
    assert (tmp_path / "pca-demo" / "summary.json").exists()


@pytest.fixture(scope="module")
def one_d(tmp_path_factory):
    out = tmp_path_factory.mktemp("one_d")
    assert run("train-1d", "--out", out / "a", "--epochs", 4, "--n", 50, "--seed", 3, *FAST_1D) == 0
    return out


def test_train_1d_outputs(one_d):
    a = one_d / "a"
    for name in ("report.csv", "polish.csv", "kl_curve.csv", "density.csv", "data.csv", "summary.json", "run.ini"):
        assert (a / name).exists(), name
    s = load(a / "summary.json")
    assert s["epochs"] == 4 and np.isfinite(s["kl_true_model"])
    assert (a / "kl_curve.csv").read_text().count("\n") == 3


def test_train_1d_bit_identical(one_d):
    b = one_d / "b"
    assert run("train-1d", "--out", b, "--epochs", 4, "--n", 50, "--seed", 3, *FAST_1D) == 0
    a = one_d / "a"
    for name in ("report.csv", "density.csv", "summary.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "model" / "lagrange.ckpt").read_bytes() == (b / "model" / "lagrange.ckpt").read_bytes()


def test_sample_and_eval_kl(one_d, tmp_path):
    assert run("sample", "--model", one_d / "a" / "model", "--out", tmp_path / "s", *FAST_SAMPLE) == 0
    s = load(tmp_path / "s" / "summary.json")
    assert s["n"] == 8 * 4
    assert (tmp_path / "s" / "histogram.csv").exists()
    assert run("eval-kl", "--model", one_d / "a" / "model", "--out", tmp_path / "k",
               "--set", "eval.samples=5000") == 0
    k = load(tmp_path / "k" / "kl.json")
    assert k["model"] == "minmaxent" and k["grid_kl_true_model"] >= 0
    assert run("eval-kl", "--out", tmp_path / "k2") == 1


def test_train_vae_and_eval(tmp_path):
    out = tmp_path / "v"
    assert run("train-vae", "--out", out, "--kind", "cauchy", "--n", 64, "--epochs", 3,
               "--set", "eval.kl_every=1", "--set", "eval.samples=1000", "--set", "model.hidden=8") == 0
    assert load(out / "summary.json")["kl_true_model"] > 0
    assert (out / "loss.csv").read_text().count("\n") == 4
    assert run("eval-kl", "--vae", out / "vae.ckpt", "--kind", "cauchy", "--out", tmp_path / "k",
               "--set", "eval.samples=1000") == 0
    assert load(tmp_path / "k" / "kl.json")["model"] == "vae"


@pytest.fixture(scope="module")
def image_run(tmp_path_factory, digits_path):
    out = tmp_path_factory.mktemp("img")
    assert run("train-image", "--out", out / "m", "--epochs", 2, *FAST_IMG) == 0
    assert run("train-classifier", "--out", out / "c", "--epochs", 1, *FAST_NET) == 0
    assert run("train-discriminator", "--out", out / "d", "--model", out / "m" / "model", "--epochs", 1,
               "--images", 20, "--set", "biasnet.generated=16", *FAST_SAMPLE[:4], *FAST_NET) == 0
    return out


def test_train_image_outputs(image_run):
    m = image_run / "m"
    s = load(m / "summary.json")
    assert s["epochs"] == 2 and s["polish_epochs"] == 1 and len(s["chi2_terms"]) == 4
    assert (m / "samples.png").exists() and (m / "samples_epoch00002.png").exists()
    assert (m / "model" / "chains.ckpt").exists()


def test_biasnet_commands(image_run):
    assert load(image_run / "c" / "report.json")["holdout_accuracy"] > 0.3
    d = load(image_run / "d" / "report.json")
    assert d["n_generated"] == 16 and d["n_real"] == 20
    meta, arr = io.load_arrays(image_run / "d" / "generated.ckpt")
    assert arr["x"].shape == (16, 64)


@pytest.mark.parametrize("extra", [
    ["--classifier", "c/classifier.ckpt", "--target", "2"],
    ["--classifier", "c/classifier.ckpt", "--target", "0", "--bias-only"],
    ["--discriminator", "d/discriminator.ckpt", "--alpha", "1"],
])
def test_bias_sample(image_run, tmp_path, extra):
    extra = [str(image_run / e) if e.endswith(".ckpt") else e for e in extra]
    assert run("bias-sample", "--model", image_run / "m" / "model", "--out", tmp_path, *extra, *FAST_SAMPLE) == 0
    s = load(tmp_path / "summary.json")
    assert s["n"] == 32 and np.isfinite(s["mean_base_energy"]) and (tmp_path / "scores.csv").exists()
    if "--target" in extra:
        assert s["target"] == int(extra[extra.index("--target") + 1])
        assert sum(s["label_counts"]) == 32


def test_discriminator_needs_generated(tmp_path, digits_path):
    assert run("train-discriminator", "--out", tmp_path, "--images", 10) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "minmaxent", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "pca-demo" in r.stdout
