import math

import numpy as np
import pytest

from minmaxent import io
from minmaxent.data import synth_bimodal
from minmaxent.metrics import count_modes
from minmaxent.sampler import GridDensity
from minmaxent.vae import VaeConfig, build_vae, elbo, loss_and_grad, sample_vae, train_vae

from conftest import central_diff, rel_err


def linear_vae(mu_b=0.0, lv_b=0.0, dec_b=0.0, noise=1.0):
    """1 input, 1 latent, no hidden layers: every output is a bias."""
    m = build_vae(1, (), 1, noise, decoder_hidden=())
    p = {k: np.zeros(s) for k, s in m.layout.entries}
    p["mu_b"][:] = mu_b
    p["lv_b"][:] = lv_b
    p["dec_b0"][:] = dec_b
    return m.with_theta(m.layout.flatten(p))


def test_kl_term_prior_match():
    _, _, kl = elbo(linear_vae(), [[0.3]], [[0.0]])
    assert kl == pytest.approx(0.0, abs=1e-15)


def test_kl_term_unit_shift():
    _, _, kl = elbo(linear_vae(mu_b=1.0), [[0.3]], [[0.0]])
    assert kl == pytest.approx(0.5, abs=1e-15)


def test_reconstruction_at_mode():
    x = [[0.7]]
    total, rec, kl = elbo(linear_vae(dec_b=0.7), x, [[1.3]])
    assert rec == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-14)
    assert total == pytest.approx(rec - kl)


def test_elbo_rejects_zero_noise():
    with pytest.raises(ValueError):
        elbo(linear_vae(noise=0.0), [[0.0]], [[0.0]])


def test_loss_gradient_matches_fd(rng):
    m = build_vae(1, (8,), 2, 0.3, seed=4)
    x = rng.normal(size=(5, 1))
    eps = rng.normal(size=(5, 2))
    _, g = loss_and_grad(m, x, eps)
    fd = central_diff(lambda t: loss_and_grad(m.with_theta(t), x, eps)[0], m.theta, 1e-6)
    assert np.max(rel_err(g, fd, 1e-4)) < 1e-5


def test_zero_epochs_leave_model_unchanged():
    m = build_vae(1, (4,), 1, seed=2)
    m2, rep = train_vae(m, np.zeros((8, 1)), VaeConfig(epochs=0))
    assert np.array_equal(m.theta, m2.theta) and rep.losses == []


def test_training_reduces_loss():
    data = synth_bimodal("gaussian", (-2, 0.5, 2, 0.5), n=500, seed=0)
    m = build_vae(1, (16, 16), 2, 0.1, seed=0)
    _, rep = train_vae(m, data, VaeConfig(epochs=40, lr=3e-3, seed=0))
    assert np.mean(rep.losses[-5:]) < 0.5 * np.mean(rep.losses[:5])


@pytest.fixture(scope="module")
def cauchy_vae():
    data = synth_bimodal("cauchy", (-3, 0.5, 3, 0.5), n=2000, seed=0)
    m = build_vae(1, (32, 32), 2, 0.1, seed=0)
    return train_vae(m, data, VaeConfig(epochs=200, lr=1e-3, seed=0))


def test_cauchy_training_completes(cauchy_vae):
    m, rep = cauchy_vae
    assert len(rep.losses) == 200 and np.all(np.isfinite(rep.losses))
    assert rep.losses[-1] < rep.losses[0]
    assert np.all(np.isfinite(sample_vae(m, 1000, seed=1)))


@pytest.mark.xfail(strict=True, reason="fixed-noise Gaussian decoder is dominated by Cauchy tails")
def test_cauchy_samples_cover_both_modes(cauchy_vae):
    s = sample_vae(cauchy_vae[0], 20000, seed=1)[:, 0]
    edges = np.linspace(-15, 15, 151)
    h, _ = np.histogram(s, edges)
    x = 0.5 * (edges[1:] + edges[:-1])
    modes = count_modes(GridDensity(-15, 15, x, h / h.sum()), prominence=0.2)
    assert modes.size == 2 and np.allclose(modes, [-3, 3], atol=0.5)


def test_training_config_errors():
    m = build_vae(1, (4,), 1)
    with pytest.raises(ValueError):
        train_vae(m, np.zeros((0, 1)))
    with pytest.raises(ValueError):
        train_vae(m, np.zeros((4, 1)), VaeConfig(lr=0))
    with pytest.raises(ValueError):
        build_vae(1, (4,), 0)


def test_identity_decoder_samples_are_standard_normal():
    m = build_vae(1, (), 1, 0.0, decoder_hidden=())
    p = {k: np.zeros(s) for k, s in m.layout.entries}
    p["dec_W0"][:] = 1.0
    m = m.with_theta(m.layout.flatten(p))
    s = sample_vae(m, 50000, seed=3)[:, 0]
    assert abs(s.mean()) < 0.02 and s.std() == pytest.approx(1.0, abs=0.02)


def test_sampling_reproducible_and_checkpoint(tmp_path):
    m = build_vae(1, (4, 4), 2, seed=5)
    assert np.array_equal(sample_vae(m, 10, seed=1), sample_vae(m, 10, seed=1))
    assert not np.array_equal(sample_vae(m, 10, seed=1), sample_vae(m, 10, seed=2))
    io.save_vae(tmp_path / "v.ckpt", m)
    m2 = io.load_vae(tmp_path / "v.ckpt")
    assert m2.arch == m.arch and np.array_equal(m2.theta, m.theta)
