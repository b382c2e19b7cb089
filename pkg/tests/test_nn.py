import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scengan.nn import (LayerSpec, MlpNetwork, ShapeError, backward, discriminator_net, flatten,
                        forward, generator_net, init_weights, param_arithmetic, unflatten)

from conftest import fd_grad, random_net, rel_err


def test_param_count_2_3_1():
    net = MlpNetwork((LayerSpec(2, 3, "relu"), LayerSpec(3, 1, "linear")), role="discriminator")
    assert net.n_params == 13
    assert init_weights(net, 0).shape == (13,)


def test_init_deterministic_with_zero_biases():
    net = generator_net(4, 6, hidden=(5,))
    a, b = init_weights(net, 7), init_weights(net, 7)
    assert np.array_equal(a, b)
    for layer, (W, bias) in zip(net.layers, unflatten(net, a)):
        assert np.all(bias == 0.0)
        limit = np.sqrt(6.0 / (layer.input_width + layer.output_width))
        assert np.all(np.abs(W) <= limit)
    assert not np.array_equal(a, init_weights(net, 8))


@pytest.mark.parametrize("kwargs", [
    dict(input_width=0, output_width=1),
    dict(input_width=1, output_width=1, activation="softplus"),
    dict(input_width=1, output_width=1, activation="leaky_relu", slope=1.5),
])
def test_bad_layers_rejected(kwargs):
    with pytest.raises(ValueError):
        LayerSpec(**kwargs)


def test_network_shape_rules():
    with pytest.raises(ValueError, match="layer 0 outputs"):
        MlpNetwork((LayerSpec(2, 3), LayerSpec(4, 1)), role="discriminator")
    with pytest.raises(ValueError):
        MlpNetwork((LayerSpec(2, 3, "tanh"),), role="generator")
    with pytest.raises(ValueError):
        MlpNetwork((LayerSpec(2, 2, "linear"),), role="discriminator")


def test_zero_weights_give_zero_output():
    net = discriminator_net(5, hidden=(4, 3))
    out, _ = forward(net, np.zeros(net.n_params), np.random.default_rng(0).normal(size=(7, 5)))
    assert np.all(out == 0.0)


def _bare(*layers):
    # a lone linear layer is neither a valid generator nor critic; skip role checks
    net = MlpNetwork.__new__(MlpNetwork)
    object.__setattr__(net, "layers", tuple(layers))
    object.__setattr__(net, "role", "discriminator")
    return net


def test_identity_layer():
    net = _bare(LayerSpec(3, 3, "linear"))
    theta = flatten([(np.eye(3), np.zeros(3))])
    x = np.random.default_rng(1).normal(size=(4, 3))
    out, _ = forward(net, theta, x)
    assert np.array_equal(out, x)


def test_hand_computed_2_2_1():
    # pre1 = [1*1 - 1*2, 0.5*1 + 2*2 - 1] = [-1, 3.5]; leaky(0.2) -> [-0.2, 3.5]
    # out = 1*(-0.2) - 2*3.5 + 0.5 = -6.7
    net = MlpNetwork((LayerSpec(2, 2, "leaky_relu", 0.2), LayerSpec(2, 1, "linear")), role="discriminator")
    theta = flatten([(np.array([[1.0, -1.0], [0.5, 2.0]]), np.array([0.0, -1.0])),
                     (np.array([[1.0, -2.0]]), np.array([0.5]))])
    out, _ = forward(net, theta, np.array([[1.0, 2.0]]))
    assert out[0, 0] == pytest.approx(-6.7, abs=1e-12)


def test_forward_rejects_bad_input_width():
    net = discriminator_net(5, hidden=(4,))
    with pytest.raises(ShapeError, match="layer 0"):
        forward(net, init_weights(net, 0), np.zeros((2, 6)))
    with pytest.raises(ShapeError):
        forward(net, np.zeros(3), np.zeros((2, 5)))


def test_generator_output_in_open_unit_interval(rng):
    net = generator_net(8, 12, hidden=(16,))
    out, _ = forward(net, init_weights(net, 3) * 50, rng.normal(size=(200, 8)) * 30)
    assert np.all(out > 0) and np.all(out < 1)


def test_backward_zero_upstream(rng):
    net = discriminator_net(4, hidden=(5,))
    theta = init_weights(net, 0)
    out, tr = forward(net, theta, rng.normal(size=(3, 4)))
    assert np.all(backward(net, theta, tr, np.zeros_like(out)) == 0)


def test_backward_linear_layer_calculus():
    net = _bare(LayerSpec(3, 2, "linear"))
    x = np.array([[0.3, -1.2, 2.0]])
    theta = np.arange(8, dtype=float)
    _, tr = forward(net, theta, x)
    g = backward(net, theta, tr, np.array([[1.0, 0.0]]))
    (gW, gb), = unflatten(net, g)
    assert np.array_equal(gW, np.outer([1.0, 0.0], x[0]))
    assert np.array_equal(gb, [1.0, 0.0])


def test_backward_shape_mismatch(rng):
    net = discriminator_net(4, hidden=(5,))
    theta = init_weights(net, 0)
    _, tr = forward(net, theta, rng.normal(size=(3, 4)))
    with pytest.raises(ShapeError):
        backward(net, theta, tr, np.zeros((2, 1)))


def test_random_three_layer_net_matches_finite_differences(rng):
    net = MlpNetwork((LayerSpec(4, 6, "tanh"), LayerSpec(6, 5, "leaky_relu", 0.1),
                      LayerSpec(5, 3, "sigmoid")), role="generator")
    theta = rng.normal(size=net.n_params)
    x = rng.normal(size=(5, 4))
    w = rng.normal(size=(5, 3))
    out, tr = forward(net, theta, x)
    g = backward(net, theta, tr, w)
    num = fd_grad(lambda th: float(np.sum(forward(net, th, x)[0] * w)), theta)
    assert rel_err(g, num) <= 1e-5


def test_input_gradient_matches_finite_differences(rng):
    net = random_net(rng, "discriminator", in_width=5)
    theta = rng.normal(size=net.n_params)
    x = rng.normal(size=(1, 5))
    out, tr = forward(net, theta, x)
    _, dx = backward(net, theta, tr, np.ones_like(out), with_input_grad=True)
    num = fd_grad(lambda v: float(forward(net, theta, v.reshape(1, 5))[0].sum()), x.ravel())
    assert rel_err(dx.ravel(), num) <= 1e-5


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_flatten_unflatten_roundtrip(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng)
    theta = rng.normal(size=net.n_params)
    assert np.array_equal(flatten(unflatten(net, theta)), theta)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_forward_backward_pure(seed):
    rng = np.random.default_rng(seed)
    net = random_net(rng, "discriminator")
    theta = rng.normal(size=net.n_params)
    x = rng.normal(size=(4, net.input_width))
    o1, t1 = forward(net, theta, x)
    o2, t2 = forward(net, theta.copy(), x.copy())
    assert np.array_equal(o1, o2)
    assert np.array_equal(backward(net, theta, t1, np.ones_like(o1)),
                          backward(net, theta, t2, np.ones_like(o2)))


def test_param_arithmetic():
    x = np.array([1.5, -2.0, 3.0])
    assert np.array_equal(param_arithmetic(x, np.zeros(3), "add"), x)
    assert np.array_equal(param_arithmetic(x, 0, "scale"), np.zeros(3))
    assert np.array_equal(param_arithmetic(x, x, "sub"), np.zeros(3))
    assert np.array_equal(param_arithmetic(x, x, "elementwise"), x * x)
    with pytest.raises(ShapeError):
        param_arithmetic(x, np.zeros(2), "add")
