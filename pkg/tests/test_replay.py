"""Replay: sum-tree consistency, n-step folding, prioritized sampling."""

import numpy as np
import pytest

from gdqnav.errors import ConfigurationError
from gdqnav.replay import (AgentReplay, NStepAccumulator, PrioritizedBuffer,
                           SumTree, UniformRing)


class FlatTreeOracle:
    """Reference for the sum tree: a plain array with linear-scan search."""

    def __init__(self, capacity):
        self.values = np.zeros(capacity)

    def set(self, idx, value):
        self.values[idx] = value

    def total(self):
        return float(self.values.sum())

    def find(self, v):
        c = 0.0
        for i, p in enumerate(self.values):
            c += p
            if v < c:
                return i
        return len(self.values) - 1


def assert_node_invariant(tree: SumTree):
    t = tree.tree
    for i in range(1, tree.capacity):
        assert t[i] == t[2 * i] + t[2 * i + 1], f"node {i} is not the sum of its children"


# ---------------------------------------------------------------------------
# sum tree


def test_sum_tree_requires_power_of_two():
    with pytest.raises(ConfigurationError):
        SumTree(12)
    SumTree(16)


def test_sum_tree_set_and_find(rng):
    tree = SumTree(8)
    oracle = FlatTreeOracle(8)
    for idx, val in [(0, 2.0), (3, 1.0), (7, 5.0), (3, 0.5)]:
        tree.set(idx, val)
        oracle.set(idx, val)
    assert tree.total == oracle.total()
    assert_node_invariant(tree)
    for v in rng.uniform(0, tree.total, size=200):
        assert tree.find(np.array([v]))[0] == oracle.find(v)


def test_sum_tree_random_ops_match_oracle(rng):
    # short random sequences of set / set_many / find against the flat array
    for _ in range(300):
        cap = int(rng.choice([4, 8, 16]))
        tree = SumTree(cap)
        oracle = FlatTreeOracle(cap)
        for _ in range(12):
            op = rng.integers(3)
            if op == 0:
                idx = int(rng.integers(cap))
                val = float(rng.uniform(0, 10))
                tree.set(idx, val)
                oracle.set(idx, val)
            elif op == 1:
                k = int(rng.integers(1, cap + 1))
                idxs = rng.choice(cap, size=k, replace=False)
                vals = rng.uniform(0, 10, size=k)
                tree.set_many(idxs, vals)
                for i, v in zip(idxs, vals):
                    oracle.set(int(i), float(v))
            elif tree.total > 0:
                vs = rng.uniform(0, tree.total, size=5)
                found = tree.find(vs)
                for v, f in zip(vs, found):
                    assert f == oracle.find(v)
        assert_node_invariant(tree)
        assert tree.total == pytest.approx(oracle.total(), rel=1e-12)


def test_set_many_matches_sequential(rng):
    a, b = SumTree(16), SumTree(16)
    idxs = rng.choice(16, size=10, replace=False)
    vals = rng.uniform(0, 3, size=10)
    a.set_many(idxs, vals)
    for i, v in zip(idxs, vals):
        b.set(int(i), float(v))
    np.testing.assert_array_equal(a.tree, b.tree)


# ---------------------------------------------------------------------------
# n-step accumulation


def obs(i):
    return np.array([float(i)])


def test_one_step_degenerate():
    acc = NStepAccumulator(1, gamma=0.9)
    out = acc.push(obs(0), np.array([0]), 2.5, obs(1), False)
    assert len(out) == 1
    t = out[0]
    assert t.n_step_return == 2.5
    assert t.gamma_n == pytest.approx(0.9)
    assert t.n_used == 1 and not t.done


def test_three_step_return_brute_force_case():
    # gamma 0.5, rewards [1, 0, 1]: 1 + 0.5*0 + 0.25*1 = 1.25
    acc = NStepAccumulator(3, gamma=0.5)
    assert acc.push(obs(0), np.array([0]), 1.0, obs(1), False) == []
    assert acc.push(obs(1), np.array([0]), 0.0, obs(2), False) == []
    (t,) = acc.push(obs(2), np.array([0]), 1.0, obs(3), False)
    assert t.n_step_return == pytest.approx(1.25)
    assert t.gamma_n == pytest.approx(0.125)
    assert t.n_used == 3
    np.testing.assert_array_equal(t.obs, obs(0))
    np.testing.assert_array_equal(t.next_obs, obs(3))


def test_truncated_episode_flush():
    acc = NStepAccumulator(3, gamma=0.5)
    acc.push(obs(0), np.array([0]), 1.0, obs(1), False)
    out = acc.push(obs(1), np.array([0]), 2.0, obs(2), True)
    assert [t.n_used for t in out] == [2, 1]
    assert all(t.done for t in out)
    assert out[0].n_step_return == pytest.approx(1.0 + 0.5 * 2.0)
    assert out[1].n_step_return == pytest.approx(2.0)


def test_n_step_matches_brute_force_recomputation(rng):
    # random episodes; every emitted transition's return recomputed from the
    # raw reward log
    for _ in range(50):
        n = int(rng.integers(1, 5))
        gamma = float(rng.uniform(0.5, 1.0))
        length = int(rng.integers(1, 12))
        terminal = bool(rng.random() < 0.5)
        rewards = rng.normal(size=length)
        acc = NStepAccumulator(n, gamma)
        emitted = []
        for t in range(length):
            done = terminal and t == length - 1
            emitted += acc.push(obs(t), np.array([0]), rewards[t], obs(t + 1), done)
        emitted += acc.flush()
        assert len(emitted) == length
        for t, tr in enumerate(emitted):
            n_used = min(n, length - t)
            expect = sum(gamma ** k * rewards[t + k] for k in range(n_used))
            assert tr.n_step_return == pytest.approx(expect, rel=1e-12)
            assert tr.n_used == n_used
            assert tr.gamma_n == pytest.approx(gamma ** n_used)
            np.testing.assert_array_equal(tr.next_obs, obs(t + n_used))


# ---------------------------------------------------------------------------
# prioritized buffer


def test_two_item_probabilities_exact():
    buf = PrioritizedBuffer(4, alpha=1.0, priority_epsilon=0.0)
    buf.push("a")
    buf.push("b")
    buf.update_priorities([0, 1], [1.0, 3.0])
    leaves = buf.tree.leaves()[:2]
    np.testing.assert_array_equal(leaves / buf.tree.total, [0.25, 0.75])


def test_alpha_zero_uniform_unit_weights(rng):
    buf = PrioritizedBuffer(8, alpha=0.0)
    for i in range(8):
        buf.push(i)
    buf.update_priorities(np.arange(8), rng.uniform(0, 9, size=8))
    items, idxs, weights = buf.sample(6, beta=0.7, rng=rng)
    np.testing.assert_array_equal(weights, np.ones(6))
    assert buf.tree.total == pytest.approx(8.0)


def test_new_items_get_max_priority():
    buf = PrioritizedBuffer(8, alpha=1.0, priority_epsilon=0.0)
    buf.push("a")
    buf.update_priorities([0], [5.0])
    buf.push("b")
    assert buf.tree.leaf(1) == 5.0


def test_zero_error_keeps_item_sampleable():
    buf = PrioritizedBuffer(4, alpha=1.0, priority_epsilon=1e-6)
    buf.push("a")
    buf.update_priorities([0], [0.0])
    assert buf.tree.leaf(0) == pytest.approx(1e-6)
    assert buf.tree.leaf(0) > 0.0


def test_importance_weights_formula(rng):
    buf = PrioritizedBuffer(4, alpha=1.0, priority_epsilon=0.0)
    buf.push("a")
    buf.push("b")
    buf.update_priorities([0, 1], [1.0, 3.0])
    beta = 0.5
    # w_i = (N * P_i)^-beta normalized by the max in the batch
    expect = {0: (2 * 0.25) ** -beta, 1: (2 * 0.75) ** -beta}
    items, idxs, weights = buf.sample(2, beta=beta, rng=rng)
    top = max(expect[int(i)] for i in idxs)
    for i, w in zip(idxs, weights):
        assert w == pytest.approx(expect[int(i)] / top, rel=1e-12)


def test_sample_requires_enough_items(rng):
    buf = PrioritizedBuffer(8)
    buf.push("a")
    with pytest.raises(ConfigurationError):
        buf.sample(2, beta=1.0, rng=rng)


def test_empirical_frequencies_track_priorities():
    rng = np.random.default_rng(4242)
    buf = PrioritizedBuffer(8, alpha=0.6, priority_epsilon=0.0)
    pri = np.array([0.5, 1.0, 2.0, 4.0, 0.1, 3.0, 1.5, 0.7])
    for i in range(8):
        buf.push(i)
    buf.update_priorities(np.arange(8), pri)
    expect = pri ** 0.6 / (pri ** 0.6).sum()
    counts = np.zeros(8)
    draws = 2500
    for _ in range(draws):
        _, idxs, _ = buf.sample(8, beta=0.4, rng=rng)
        np.add.at(counts, idxs, 1)
    freq = counts / (draws * 8)
    assert np.max(np.abs(freq - expect)) < 0.02


def test_raising_priority_raises_frequency():
    def frequencies(boost):
        rng = np.random.default_rng(99)
        buf = PrioritizedBuffer(8, alpha=1.0, priority_epsilon=0.0)
        for i in range(8):
            buf.push(i)
        pri = np.ones(8)
        pri[3] = boost
        buf.update_priorities(np.arange(8), pri)
        counts = np.zeros(8)
        for _ in range(500):
            _, idxs, _ = buf.sample(8, beta=1.0, rng=rng)
            np.add.at(counts, idxs, 1)
        return counts[3] / counts.sum()

    assert frequencies(6.0) > frequencies(1.0) * 2


def test_ring_overwrite_keeps_tree_consistent(rng):
    buf = PrioritizedBuffer(4, alpha=1.0)
    for i in range(11):
        buf.push(i)
        if i % 3 == 0:
            buf.update_priorities([i % 4], [float(i) + 0.5])
    assert len(buf) == 4
    assert set(buf.data) == {7, 8, 9, 10}
    assert_node_invariant(buf.tree)


# ---------------------------------------------------------------------------
# agent replay and uniform ring


def test_agent_replay_end_to_end(rng):
    rep = AgentReplay(capacity=16, n_step=2, gamma=0.5)
    rep.push(obs(0), np.array([1]), 1.0, obs(1), False)
    assert len(rep) == 0
    rep.push(obs(1), np.array([0]), 2.0, obs(2), False)
    assert len(rep) == 1
    rep.end_episode()
    assert len(rep) == 2
    items, idxs, w = rep.sample(2, beta=1.0, rng=rng)
    assert {t.n_step_return for t in items} <= {2.0, 1.0 + 0.5 * 2.0}
    rep.update_priorities(idxs, [0.3, 0.2])


def test_uniform_ring(rng):
    ring = UniformRing(4)
    with pytest.raises(ConfigurationError):
        ring.sample(1, rng)
    for i in range(6):
        ring.push(i)
    assert len(ring) == 4
    items, _, w = ring.sample(3, rng)
    assert set(items) <= {2, 3, 4, 5}
    np.testing.assert_array_equal(w, np.ones(3))
