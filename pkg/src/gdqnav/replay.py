"""Experience replay: sum-tree prioritized sampling plus n-step returns.

The sum tree keeps every internal node exactly equal to the sum of its two
children (parents are recomputed from children on update, never nudged by
deltas), so tree-consistency checks can compare bitwise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


class SumTree:
    """Complete binary tree of nonnegative priorities over a power-of-two
    leaf count, stored as a 1-indexed heap array."""

    def __init__(self, capacity: int):
        if capacity < 1 or capacity & (capacity - 1):
            raise ConfigurationError("sum-tree capacity must be a power of two")
        self.capacity = capacity
        self.depth = capacity.bit_length() - 1
        self.tree = np.zeros(2 * capacity, dtype=np.float64)

    @property
    def total(self) -> float:
        return float(self.tree[1])

    def leaf(self, idx: int) -> float:
        return float(self.tree[self.capacity + idx])

    def leaves(self) -> np.ndarray:
        return self.tree[self.capacity:]

    def set(self, idx: int, value: float) -> None:
        i = self.capacity + idx
        self.tree[i] = value
        i >>= 1
        while i >= 1:
            self.tree[i] = self.tree[2 * i] + self.tree[2 * i + 1]
            i >>= 1

    def set_many(self, idxs: np.ndarray, values: np.ndarray) -> None:
        pos = np.asarray(idxs, dtype=np.int64) + self.capacity
        self.tree[pos] = values
        parents = np.unique(pos >> 1)
        while parents.size and parents[0] >= 1:
            self.tree[parents] = self.tree[2 * parents] + self.tree[2 * parents + 1]
            parents = np.unique(parents >> 1)

    def find(self, values: np.ndarray) -> np.ndarray:
        """Descend the tree for each value in [0, total), vectorized."""
        v = np.asarray(values, dtype=np.float64).copy()
        idx = np.ones(v.shape, dtype=np.int64)
        for _ in range(self.depth):
            left = 2 * idx
            left_sum = self.tree[left]
            go_left = v < left_sum
            v = np.where(go_left, v, v - left_sum)
            idx = np.where(go_left, left, left + 1)
        return idx - self.capacity


@dataclass(slots=True)
class Transition:
    """One agent step after n-step accumulation.

    ``action`` holds one index per action branch. ``n_used`` is the actual
    lookahead (shorter than n at episode boundaries) and ``gamma_n`` the
    matching discount for the bootstrap term. ``v_next``, when present, is
    the team's per-agent state-value vector at the bootstrap observation,
    frozen at collection time.
    """

    obs: np.ndarray
    action: np.ndarray
    n_step_return: float
    next_obs: np.ndarray
    done: bool
    n_used: int
    gamma_n: float
    v_next: np.ndarray | None = None


class NStepAccumulator:
    """Folds consecutive raw steps into n-step transitions.

    Emits the oldest pending step once n rewards are queued; an episode end
    (terminal step or truncation) flushes everything pending with shortened
    lookaheads.
    """

    def __init__(self, n: int, gamma: float):
        if n < 1:
            raise ConfigurationError("n-step lookahead must be >= 1")
        self.n = n
        self.gamma = gamma
        self._pending = deque()

    def _emit_head(self) -> Transition:
        obs, action, _, _, _, _ = self._pending[0]
        ret = 0.0
        for k, (_, _, reward, _, _, _) in enumerate(self._pending):
            ret += (self.gamma ** k) * reward
        n_used = len(self._pending)
        _, _, _, next_obs, done, v_next = self._pending[-1]
        self._pending.popleft()
        return Transition(obs, action, ret, next_obs, done, n_used,
                          self.gamma ** n_used, v_next)

    def push(self, obs, action, reward, next_obs, done, v_next=None) -> list[Transition]:
        self._pending.append((obs, action, float(reward), next_obs, bool(done), v_next))
        if done:
            return self.flush()
        if len(self._pending) == self.n:
            return [self._emit_head()]
        return []

    def flush(self) -> list[Transition]:
        """Drain the queue (episode over); call at terminals and truncations."""
        out = []
        while self._pending:
            out.append(self._emit_head())
        return out


class PrioritizedBuffer:
    """Proportional prioritized replay over a ring buffer.

    Logical priorities are |td_error| + priority_epsilon; the tree stores
    priority**alpha so sampling is proportional to that power. New items get
    the running maximum priority so they are seen at least once.
    """

    def __init__(self, capacity: int, alpha: float = 0.6, priority_epsilon: float = 1e-6):
        if capacity < 1:
            raise ConfigurationError("replay capacity must be positive")
        self.capacity = capacity
        self.alpha = alpha
        self.priority_epsilon = priority_epsilon
        self.tree = SumTree(_next_pow2(capacity))
        self.data: list = [None] * capacity
        self.size = 0
        self._write = 0
        self.max_priority = 1.0

    def __len__(self) -> int:
        return self.size

    def push(self, item) -> int:
        idx = self._write
        self.data[idx] = item
        self.tree.set(idx, self.max_priority ** self.alpha)
        self._write = (self._write + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return idx

    def sample(self, batch_size: int, beta: float, rng: np.random.Generator):
        """Stratified proportional sample.

        Returns (items, indices, importance_weights); weights are
        (size * P(i)) ** -beta, normalized by the largest weight in the
        batch.
        """
        if self.size < batch_size:
            raise ConfigurationError(
                f"cannot sample {batch_size} items from buffer of {self.size}")
        total = self.tree.total
        seg = total / batch_size
        targets = (np.arange(batch_size) + rng.random(batch_size)) * seg
        idxs = self.tree.find(targets)
        np.minimum(idxs, self.size - 1, out=idxs)
        probs = self.tree.leaves()[idxs] / total
        weights = (self.size * probs) ** (-beta)
        weights /= weights.max()
        items = [self.data[i] for i in idxs]
        return items, idxs, weights

    def update_priorities(self, idxs, td_errors) -> None:
        errors = np.abs(np.asarray(td_errors, dtype=np.float64))
        priorities = errors + self.priority_epsilon
        self.tree.set_many(np.asarray(idxs), priorities ** self.alpha)
        self.max_priority = max(self.max_priority, float(priorities.max()))


@dataclass
class AgentReplay:
    """Per-agent prioritized replay fed through an n-step accumulator."""

    capacity: int
    n_step: int
    gamma: float
    alpha: float = 0.6
    priority_epsilon: float = 1e-6
    buffer: PrioritizedBuffer = field(init=False)
    accumulator: NStepAccumulator = field(init=False)

    def __post_init__(self):
        self.buffer = PrioritizedBuffer(self.capacity, self.alpha, self.priority_epsilon)
        self.accumulator = NStepAccumulator(self.n_step, self.gamma)

    def __len__(self) -> int:
        return len(self.buffer)

    def push(self, obs, action, reward, next_obs, done, v_next=None) -> list[Transition]:
        emitted = self.accumulator.push(obs, action, reward, next_obs, done, v_next)
        for t in emitted:
            self.buffer.push(t)
        return emitted

    def end_episode(self) -> list[Transition]:
        """Flush pending steps at an episode truncation."""
        emitted = self.accumulator.flush()
        for t in emitted:
            self.buffer.push(t)
        return emitted

    def sample(self, batch_size: int, beta: float, rng: np.random.Generator):
        return self.buffer.sample(batch_size, beta, rng)

    def update_priorities(self, idxs, td_errors) -> None:
        self.buffer.update_priorities(idxs, td_errors)


class UniformRing:
    """Plain ring buffer with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError("ring capacity must be positive")
        self.capacity = capacity
        self.data: list = [None] * capacity
        self.size = 0
        self._write = 0

    def __len__(self) -> int:
        return self.size

    def push(self, item) -> int:
        idx = self._write
        self.data[idx] = item
        self._write = (self._write + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return idx

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size < batch_size:
            raise ConfigurationError(
                f"cannot sample {batch_size} items from buffer of {self.size}")
        idxs = rng.integers(self.size, size=batch_size)
        return [self.data[i] for i in idxs], idxs, np.ones(batch_size)
