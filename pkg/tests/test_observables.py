import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minmaxent.io import load_observables, save_observables
from minmaxent.observables import (
    MomentObservables,
    RotatedQuadratic,
    build_cnn_observables,
    build_mlp_observables,
    evaluate,
    from_arch,
    parameter_gradients,
)

from conftest import central_diff, rel_err

finite = st.floats(-50, 50, allow_nan=False)


def test_moments_values():
    np.testing.assert_array_equal(evaluate(MomentObservables(), np.array([2.0])).values, [[2.0, 4.0]])


def test_rotated_quadratic_examples():
    x = np.array([[1.0, 2.0]])
    np.testing.assert_allclose(RotatedQuadratic(0.0).values(x), [[1.0, 4.0]])
    np.testing.assert_allclose(RotatedQuadratic(np.pi / 2).values(x), [[4.0, 1.0]], atol=1e-12)


def test_rotated_quadratic_stationary_gradient():
    g = parameter_gradients(RotatedQuadratic(0.0), np.array([[1.0, 0.0]]), [1.0, 0.0])
    np.testing.assert_array_equal(g, [0.0])


@pytest.mark.parametrize(
    "obs",
    [MomentObservables(), RotatedQuadratic(0.3), build_mlp_observables(1, (4, 4), 2, seed=1),
     build_cnn_observables(8, 3, seed=1)],
    ids=["moments", "rotq", "mlp", "cnn"],
)
def test_zero_weights_give_zero_gradient(obs):
    x = np.random.default_rng(0).random((3, obs.input_dim))
    g = obs.parameter_gradients(x, np.zeros(obs.n_obs))
    assert g.shape == obs.theta.shape
    assert not np.any(g)


def test_weight_length_mismatch():
    with pytest.raises(ValueError):
        RotatedQuadratic().parameter_gradients(np.zeros((2, 2)), [1.0, 2.0, 3.0])


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        MomentObservables().values(np.array([np.nan]))


def test_mlp_parameter_count_and_determinism():
    a = build_mlp_observables(1, [32, 32], 2, seed=5)
    assert a.n_params == 1 * 32 + 32 + 32 * 32 + 32 + 32 * 2 + 2 == 1186
    np.testing.assert_array_equal(a.theta, build_mlp_observables(1, [32, 32], 2, seed=5).theta)


def test_mlp_builder_errors():
    with pytest.raises(ValueError):
        build_mlp_observables(1, [32], 0)
    with pytest.raises(ValueError):
        build_mlp_observables(1, [32, 0], 2)
    with pytest.raises(ValueError):
        build_mlp_observables(1, [], 2)


def test_cnn_shape_and_zero_image():
    obs = build_cnn_observables(8, 16, seed=0)
    assert obs.values(np.random.default_rng(1).random((5, 64))).shape == (5, 16)
    # biases start at zero and tanh(0) = 0, so a blank image maps to zero
    np.testing.assert_array_equal(obs.values(np.zeros((1, 64))), np.zeros((1, 16)))
    with pytest.raises(ValueError):
        build_cnn_observables(3, 4)


def test_cnn_input_jacobian_matches_finite_differences():
    obs = build_cnn_observables(8, 4, seed=2)
    x = np.random.default_rng(3).random((1, 64))
    jac = obs.input_jacobian(x)[0]
    for j in range(obs.n_obs):
        fd = central_diff(lambda z: float(obs.values(z)[0, j]), x)[0]
        assert rel_err(jac[j], fd, floor=1e-3).max() < 1e-4


def test_rotated_quadratic_jacobian_and_param_gradient():
    obs = RotatedQuadratic(0.7)
    x = np.random.default_rng(4).normal(size=(3, 2))
    w = np.array([0.4, -1.3])
    fd = central_diff(lambda t: float(np.sum(obs.with_theta(t).values(x) * w)), obs.theta)
    np.testing.assert_allclose(obs.parameter_gradients(x, w), fd, rtol=1e-7)
    jac = obs.input_jacobian(x)
    for n in range(3):
        for j in range(2):
            fd = central_diff(lambda z: float(obs.values(z[None])[0, j]), x[n])
            np.testing.assert_allclose(jac[n, j], fd, rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("draw", range(100))
def test_mlp_values_and_gradients_match_oracle(draw):
    rng = np.random.default_rng(1000 + draw)
    obs = build_mlp_observables(1, (6, 5), 2, seed=draw)
    x = rng.normal(scale=2.0, size=(4, 1))
    w = rng.normal(size=2)
    g = obs.parameter_gradients(x, w)
    fd = central_diff(lambda t: float(np.sum(obs.with_theta(t).values(x) * w)), obs.theta)
    assert rel_err(g, fd, floor=1e-3).max() < 1e-4


@settings(max_examples=50, deadline=None)
@given(t=st.floats(-7, 7), x=finite, y=finite, c=st.floats(-10, 10))
def test_rotated_quadratic_invariants(t, x, y, c):
    obs = RotatedQuadratic(t)
    f = obs.values(np.array([[x, y]]))[0]
    assert f.sum() == pytest.approx(x * x + y * y, rel=1e-12, abs=1e-9)
    fc = obs.values(np.array([[c * x, c * y]]))[0]
    np.testing.assert_allclose(fc, c * c * f, rtol=1e-10, atol=1e-8)


@pytest.mark.parametrize(
    "obs",
    [MomentObservables(), RotatedQuadratic(0.123456789), build_mlp_observables(1, (3,), 2, seed=9),
     build_cnn_observables(8, 2, seed=9)],
    ids=["moments", "rotq", "mlp", "cnn"],
)
def test_checkpoint_round_trip_is_bit_exact(obs, tmp_path):
    save_observables(tmp_path / "o.ckpt", obs)
    back = load_observables(tmp_path / "o.ckpt")
    assert back.family == obs.family
    assert back.theta.tobytes() == obs.theta.tobytes()
    x = np.random.default_rng(0).random((3, obs.input_dim))
    assert back.values(x).tobytes() == obs.values(x).tobytes()
    assert from_arch(obs.arch(), obs.theta).theta.tobytes() == obs.theta.tobytes()
