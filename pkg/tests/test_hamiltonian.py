import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minmaxent.hamiltonian import (
    EffectiveHamiltonian,
    NonFiniteEnergyError,
    add_classifier_bias,
    add_constant_bias,
    add_discriminator_bias,
    detach_base,
    network_scores,
)
from minmaxent.metrics import two_sample_ks
from minmaxent.nets import build_cnn
from minmaxent.observables import MomentObservables, RotatedQuadratic, build_mlp_observables
from minmaxent.sampler import burn_in, init_chains, run_ensemble

from helpers import constant_scores


def test_moments_energy_and_log_density():
    H = EffectiveHamiltonian(MomentObservables(), [0.0, 0.5])
    assert H.energy(np.array([2.0]))[0] == 2.0
    assert -H(np.array([2.0]))[0] == -2.0


def test_zero_multipliers_give_zero_energy():
    H = EffectiveHamiltonian(build_mlp_observables(1, (4,), 3, seed=0), np.zeros(3))
    np.testing.assert_array_equal(H.energy(np.linspace(-5, 5, 7)), np.zeros(7))


def test_rotated_quadratic_fitted_multipliers():
    # maximum entropy with <u^2> = 3 and <v^2> = 2 gives lambda_i = 1/(2 var_i)
    lam = np.array([1 / (2 * 3.0), 1 / (2 * 2.0)])
    H = EffectiveHamiltonian(RotatedQuadratic(0.0), lam)
    np.testing.assert_allclose(H.lam, [1 / 6, 1 / 4])
    np.testing.assert_allclose(H.energy(np.array([[1.0, 2.0]])), [1 / 6 + 4 / 4])


def test_multiplier_count_checked():
    with pytest.raises(ValueError):
        EffectiveHamiltonian(MomentObservables(), [1.0])


def test_discriminator_bias():
    H = EffectiveHamiltonian(MomentObservables(), [0.3, 0.5])
    x = np.linspace(-3, 3, 9)
    np.testing.assert_array_equal(add_discriminator_bias(H, constant_scores(0.7), 0.0).energy(x), H.energy(x))
    np.testing.assert_allclose(add_discriminator_bias(H, constant_scores(1.0), 2.5).energy(x), H.energy(x) + 2.5)
    with pytest.raises(ValueError):
        add_discriminator_bias(H, constant_scores(0.5), -1.0)


def test_classifier_bias_arithmetic():
    H = EffectiveHamiltonian(MomentObservables(), [0.0, 0.0])
    x = np.zeros(3)
    onehot = np.eye(10)[4]
    np.testing.assert_allclose(add_classifier_bias(H, constant_scores(onehot), 4, 3.0).energy(x), -3.0)
    np.testing.assert_allclose(add_classifier_bias(H, constant_scores(np.full(10, 0.1)), 4, 3.0).energy(x),
                               0.8 * 3.0)
    np.testing.assert_array_equal(add_classifier_bias(H, constant_scores(onehot), 4, 0.0).energy(x), 0.0)
    with pytest.raises(ValueError):
        add_classifier_bias(H, constant_scores(onehot), 10, 1.0)


def test_detach_base():
    H = EffectiveHamiltonian(MomentObservables(), [0.2, 0.5])
    with pytest.raises(ValueError):
        detach_base(H)
    Hb = add_classifier_bias(H, constant_scores(np.full(10, 0.1)), 0, 2.0)
    x = np.linspace(-2, 2, 5)
    np.testing.assert_allclose(detach_base(Hb).energy(x), 0.8 * 2.0)


def test_bias_network_is_snapshotted():
    net = build_cnn(8, 1, seed=0)
    net.arch["head"] = "sigmoid"
    H = EffectiveHamiltonian(build_mlp_observables(64, (2,), 1, seed=0), [0.0])
    Hb = add_discriminator_bias(H, net, 1.0)
    x = np.random.default_rng(0).random((4, 64))
    before = Hb.energy(x)
    net.theta[:] = 0.0  # mutate the caller's network in place
    np.testing.assert_array_equal(Hb.energy(x), before)
    s = network_scores(Hb.biases[0].network, x)
    assert np.all((s > 0) & (s < 1))


def test_non_finite_term_is_attributed():
    H = EffectiveHamiltonian(MomentObservables(), [0.0, 1.0])
    bad = add_discriminator_bias(H, lambda x: np.full(len(x), np.nan), 1.0)
    with pytest.raises(NonFiniteEnergyError, match="discriminator"):
        bad.energy(np.array([1.0]))
    assert np.isinf(bad.energy(np.array([1.0]), check=False)[0])


def test_bounds_give_infinite_energy():
    H = EffectiveHamiltonian(MomentObservables(), [0.0, 0.5], bounds=(-1, 1))
    e = H.energy(np.array([-2.0, 0.0, 2.0]))
    assert np.isinf(e[0]) and np.isinf(e[2]) and e[1] == 0.0


@settings(max_examples=50, deadline=None)
@given(a=st.lists(st.floats(-5, 5), min_size=2, max_size=2), b=st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       x=st.floats(-20, 20))
def test_energy_linear_in_multipliers(a, b, x):
    obs = MomentObservables()
    xs = np.array([x])
    lhs = EffectiveHamiltonian(obs, np.add(a, b)).energy(xs)
    rhs = EffectiveHamiltonian(obs, a).energy(xs) + EffectiveHamiltonian(obs, b).energy(xs)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(l1=st.floats(-5, 5), l2=st.floats(-5, 5))
def test_moments_energy_is_quadratic_with_multiplier_coefficients(l1, l2):
    H = EffectiveHamiltonian(MomentObservables(), [l1, l2])
    x = np.array([-2.0, 0.5, 3.0])
    coeffs = np.polyfit(x, -H.energy(x), 2)
    np.testing.assert_allclose(coeffs, [-l2, -l1, 0.0], atol=1e-9)


def test_constant_bias_leaves_distribution_invariant():
    H = EffectiveHamiltonian(build_mlp_observables(1, (8,), 2, seed=3), [1.0, -0.5], bounds=(-6, 6))
    Hc = add_constant_bias(H, 3.7)
    samples = []
    for k, h in enumerate((H, Hc)):
        ch = init_chains(h, 64, seed=11 + k, step=1.0)
        burn_in(ch, h, 200)
        samples.append(run_ensemble(ch, h, 7820, thinning=5).samples[:100_000, 0])
    _, p = two_sample_ks(samples[0], samples[1])
    assert p > 0.01
