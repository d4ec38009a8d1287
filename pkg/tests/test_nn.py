"""Dense-network engine: forward, manual backprop, Adam."""

import numpy as np
import pytest

from gdqnav.errors import ConfigurationError, TrainingFault
from gdqnav.nn import Adam, Mlp, param_count

from conftest import finite_diff_check, min_relu_margin


def identity_net(activation):
    net = Mlp((2, 2), (activation,))
    net.layers[0].w[...] = np.eye(2)
    net.layers[0].b[...] = 0.0
    return net


def test_linear_identity_layer():
    net = identity_net("linear")
    assert np.array_equal(net.forward(np.array([3.0, -1.0])), [3.0, -1.0])


def test_relu_identity_layer():
    net = identity_net("relu")
    assert np.array_equal(net.forward(np.array([3.0, -1.0])), [3.0, 0.0])


def test_two_layer_hand_composition():
    # 2-2-1 relu then linear, weights set by hand; expected value computed
    # by hand: z1 = [3.5, 6.5], y = 3.5 - 6.5 + 0.25 = -2.75
    net = Mlp((2, 2, 1), ("relu", "linear"))
    net.layers[0].w[...] = [[1.0, 2.0], [3.0, 4.0]]
    net.layers[0].b[...] = [0.5, -0.5]
    net.layers[1].w[...] = [[1.0, -1.0]]
    net.layers[1].b[...] = [0.25]
    out = net.forward(np.array([1.0, 1.0]))
    assert out.shape == (1,)
    assert out[0] == pytest.approx(-2.75, abs=1e-12)


def test_forward_batch_matches_single(rng):
    # batched matmuls may sum in a different order, so compare to float
    # accuracy rather than bitwise
    net = Mlp((4, 5, 2), ("tanh", "linear"), rng=rng)
    xs = rng.normal(size=(6, 4))
    batched = net.forward(xs)
    for i in range(6):
        np.testing.assert_allclose(batched[i], net.forward(xs[i]), rtol=0, atol=1e-13)


def test_forward_determinism(rng):
    net = Mlp((7, 9, 3), ("relu", "linear"), rng=rng)
    x = rng.normal(size=(4, 7))
    assert np.array_equal(net.forward(x), net.forward(x))


def test_forward_dimension_mismatch(rng):
    net = Mlp((4, 2), ("linear",), rng=rng)
    with pytest.raises(ConfigurationError):
        net.forward(np.zeros(5))


def test_backward_scalar_chain_rule():
    # y = w*x with x=2, w=3, loss = y^2: dL/dw = 2*y*x = 24
    net = Mlp((1, 1), ("linear",))
    net.layers[0].w[...] = [[3.0]]
    y, cache = net.forward(np.array([2.0]), want_cache=True)
    assert y[0] == 6.0
    d_in, grad = net.backward(cache, np.array([2.0 * y[0]]))
    gw, gb = grad[0], grad[1]
    assert gw == pytest.approx(24.0)
    assert gb == pytest.approx(12.0)
    assert d_in[0] == pytest.approx(36.0)  # dL/dx = 2*y*w


def test_backward_dead_relu_unit():
    net = Mlp((1, 1), ("relu",))
    net.layers[0].w[...] = [[1.0]]
    _, cache = net.forward(np.array([-1.0]), want_cache=True)
    _, grad = net.backward(cache, np.array([1.0]))
    assert np.all(grad == 0.0)


def test_backward_stale_cache_rejected(rng):
    net = Mlp((3, 2), ("linear",), rng=rng)
    _, cache = net.forward(rng.normal(size=(2, 3)), want_cache=True)
    with pytest.raises(RuntimeError):
        net.backward(cache, np.zeros((5, 2)))


def test_gradient_matches_finite_differences(rng):
    # random 4-3-2 net, L = sum(y^2), all 29 coordinates
    for _ in range(10):
        while True:
            net = Mlp((4, 3, 2), ("relu", "linear"), rng=rng)
            x = rng.normal(size=(3, 4))
            y, cache = net.forward(x, want_cache=True)
            if min_relu_margin([(cache, net)]) > 1e-4:
                break

        def loss():
            out = net.forward(x)
            return float(np.sum(out * out))

        _, grad = net.backward(cache, 2.0 * y)
        finite_diff_check(loss, net.theta, grad, np.arange(net.theta.size),
                          step=1e-6, rtol=1e-5)


def test_param_count_and_layout(rng):
    net = Mlp((5, 4, 3), ("relu", "linear"), rng=rng)
    assert net.theta.size == param_count((5, 4, 3)) == (5 + 1) * 4 + (4 + 1) * 3
    # layer views alias the flat vector
    net.theta[:] = 0.0
    assert np.all(net.layers[0].w == 0.0) and np.all(net.layers[1].b == 0.0)


def test_seeded_init_reproducible():
    a = Mlp((6, 8, 2), ("relu", "linear"), rng=np.random.default_rng(7))
    b = Mlp((6, 8, 2), ("relu", "linear"), rng=np.random.default_rng(7))
    assert np.array_equal(a.theta, b.theta)


def test_clone_and_copy(rng):
    a = Mlp((3, 3), ("tanh",), rng=rng)
    b = a.clone()
    assert np.array_equal(a.theta, b.theta)
    b.theta[0] += 1.0
    assert a.theta[0] != b.theta[0]
    a.copy_from(b)
    assert np.array_equal(a.theta, b.theta)


# ---------------------------------------------------------------------------
# Adam


def test_adam_first_step_equals_lr():
    theta = np.array([1.0])
    opt = Adam(1, lr=1e-3)
    opt.step(theta, np.array([1.0]))
    assert theta[0] == pytest.approx(1.0 - 1e-3, abs=1e-10)
    assert opt.step_count == 1


def test_adam_zero_gradient_is_identity():
    theta = np.array([0.3, -2.0, 5.5])
    before = theta.copy()
    opt = Adam(3)
    for _ in range(5):
        opt.step(theta, np.zeros(3))
    assert np.array_equal(theta, before)


def test_adam_descends_quadratic():
    theta = np.array([1.0])
    opt = Adam(1, lr=1e-3)
    losses = []
    for _ in range(10):
        losses.append(theta[0] ** 2)
        opt.step(theta, 2.0 * theta)
    losses.append(theta[0] ** 2)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adam_rejects_non_finite_gradient():
    opt = Adam(2)
    with pytest.raises(TrainingFault):
        opt.step(np.zeros(2), np.array([np.nan, 0.0]))


def test_adam_shape_mismatch():
    opt = Adam(2)
    with pytest.raises(ConfigurationError):
        opt.step(np.zeros(3), np.zeros(3))
