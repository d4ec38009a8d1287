"""Central joint state-value estimator: forward, targets, training, sync."""

import numpy as np
import pytest

from gdqnav.central import CentralEstimator
from gdqnav.errors import ConfigurationError, TrainingFault

from conftest import finite_diff_check, min_relu_margin


def make_est(rng, n_agents=3, **kw):
    kw.setdefault("hidden", (8, 8))
    return CentralEstimator(n_agents, gamma=0.99, rng=rng, **kw)


def constant_output(est, value, target=False):
    net = est.target if target else est.online
    net.theta[:] = 0.0
    net.layers[-1].b[...] = value


def test_zero_output_layer_gives_zero(rng):
    est = make_est(rng)
    est.online.layers[-1].w[...] = 0.0
    est.online.layers[-1].b[...] = 0.0
    for _ in range(20):
        assert est.forward_vg(rng.normal(size=3)) == 0.0


def test_length_mismatch_rejected(rng):
    est = make_est(rng)
    with pytest.raises(ConfigurationError):
        est.forward_vg(np.zeros(4))


def test_sync_makes_outputs_identical(rng):
    est = make_est(rng)
    est.online.theta += rng.normal(size=est.online.theta.size) * 0.1
    est.sync_target()
    for _ in range(100):
        v = rng.normal(size=3)
        assert est.forward_vg(v) == est.forward_vg(v, use_target=True)
    before = est.target.theta.copy()
    est.sync_target()
    np.testing.assert_array_equal(est.target.theta, before)  # idempotent


def test_training_desyncs_target_until_synced(rng):
    est = make_est(rng, lr=0.05)
    for _ in range(80):
        est.push(rng.normal(size=3), rng.normal(size=3), rng.normal())
    target_before = est.target.theta.copy()
    for _ in range(5):
        est.train_step(16, rng)
    # target parameters stale between syncs
    np.testing.assert_array_equal(est.target.theta, target_before)
    diffs = [est.forward_vg(v) != est.forward_vg(v, use_target=True)
             for v in rng.normal(size=(50, 3))]
    assert any(diffs)
    est.sync_target()
    v = rng.normal(size=3)
    assert est.forward_vg(v) == est.forward_vg(v, use_target=True)


def test_permuting_inputs_changes_output(rng):
    est = make_est(rng)
    v = np.array([1.0, -0.5, 2.0])
    assert est.forward_vg(v) != est.forward_vg(v[::-1].copy())


def test_td_target_direct_substitution(rng):
    est = make_est(rng)
    constant_output(est, 2.0, target=True)
    assert est.td_target(0.5, np.zeros(3)) == pytest.approx(0.5 + 0.99 * 2.0)
    assert est.td_target(0.5, np.zeros(3), done=True) == 0.5


def test_td_target_zero_discount(rng):
    est = CentralEstimator(3, gamma=0.0, hidden=(8, 8), rng=rng)
    for _ in range(10):
        assert est.td_target(1.25, rng.normal(size=3)) == 1.25


def test_zero_residual_batch_leaves_params_unchanged(rng):
    est = CentralEstimator(3, gamma=0.0, hidden=(8, 8), rng=rng)
    constant_output(est, 1.5)
    theta_before = est.online.theta.copy()
    for _ in range(8):
        est.push(rng.normal(size=3), rng.normal(size=3), 1.5)
    loss = est.train_step(8, rng)
    assert loss == 0.0
    np.testing.assert_array_equal(est.online.theta, theta_before)


def test_loss_matches_hand_computation(rng):
    # prioritized buffer with two equal-priority items covers both in one
    # 2-sample stratified batch, so the loss is exactly the mean of the two
    # squared residuals
    est = CentralEstimator(2, gamma=0.0, hidden=(4, 4), use_per=True, rng=rng)
    constant_output(est, 1.0)
    est.push(np.zeros(2), np.zeros(2), 3.0)   # residual -2
    est.push(np.ones(2), np.zeros(2), 0.5)    # residual 0.5
    loss = est.train_step(2, rng)
    assert loss == pytest.approx((4.0 + 0.25) / 2.0)


def test_fixed_pair_regression_converges(rng):
    est = make_est(rng, n_agents=2, lr=1e-2)
    v = np.array([0.3, -0.8])
    v_prime = np.array([0.1, 0.2])
    est.push(v, v_prime, 1.0)
    loss = None
    for _ in range(500):
        loss = est.train_step(1, rng)
    assert loss is not None and loss < 1e-4


def test_non_finite_reward_faults(rng):
    est = make_est(rng)
    for _ in range(4):
        est.push(np.zeros(3), np.zeros(3), np.nan)
    with pytest.raises(TrainingFault):
        est.train_step(4, rng)


def test_train_returns_none_when_starved(rng):
    est = make_est(rng)
    est.push(np.zeros(3), np.zeros(3), 0.0)
    assert est.train_step(4, rng) is None


def test_loss_gradient_matches_finite_differences(rng):
    est = make_est(rng, n_agents=4)
    while True:
        v = rng.normal(size=(6, 4))
        targets = rng.normal(size=6)
        out, cache = est.online.forward(v, want_cache=True)
        if min_relu_margin([(cache, est.online)]) > 1e-4:
            break

    def loss():
        pred = est.online.forward(v)[:, 0]
        return float(np.mean((pred - targets) ** 2))

    delta = out[:, 0] - targets
    _, grad = est.online.backward(cache, (2.0 * delta / 6)[:, None])
    coords = rng.choice(est.online.theta.size, size=60, replace=False)
    finite_diff_check(loss, est.online.theta, grad, coords)
