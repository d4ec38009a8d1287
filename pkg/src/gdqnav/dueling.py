"""Dueling Q-network with branching action heads.

A shared trunk feeds one state-value stream and one advantage stream per
action branch. Q-values come from an identifiable aggregation: the branch
mean of the advantages is subtracted before adding the state value, so the
mean over actions of every branch's Q equals V and shifting V never changes
the greedy action.

All streams live in a single flat parameter vector (trunk first, then the
value stream, then advantage streams in branch order), which is what the
optimizer, target syncs and checkpoints operate on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigurationError, TrainingFault


@dataclass(frozen=True)
class ActionSpec:
    """Named discrete action branches with their physical values."""

    branches: tuple[tuple[str, tuple[float, ...]], ...]

    def __post_init__(self):
        if not self.branches:
            raise ConfigurationError("ActionSpec needs at least one branch")
        for name, values in self.branches:
            if len(values) == 0:
                raise ConfigurationError(f"branch {name!r} is empty")
            if any(b <= a for a, b in zip(values, values[1:])):
                raise ConfigurationError(f"branch {name!r} values must be strictly increasing")

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(values) for _, values in self.branches)

    def values(self, branch: int, index) -> float | np.ndarray:
        vals = np.asarray(self.branches[branch][1], dtype=np.float64)
        return vals[index]


def aggregate_q(v, a):
    """Combine state value and one branch's advantages into Q-values.

    Q[i] = V + (A[i] - mean(A)). Works on a single advantage vector with a
    scalar V, or batched as (B, k) with V of shape (B,).
    """
    a = np.asarray(a, dtype=np.float64)
    centered = a - a.mean(axis=-1, keepdims=True)
    if a.ndim == 1:
        return float(v) + centered
    return np.asarray(v, dtype=np.float64)[:, None] + centered


class DuelingNetwork:
    """Shared trunk, one value stream, one advantage stream per branch."""

    def __init__(self, obs_dim: int, branch_sizes, trunk_hidden=(128, 64),
                 stream_hidden: int = 64, trunk_activation: str = "relu",
                 rng: np.random.Generator | None = None):
        if len(branch_sizes) < 1:
            raise ConfigurationError("need at least one action branch")
        self.obs_dim = int(obs_dim)
        self.branch_sizes = tuple(int(k) for k in branch_sizes)
        self.trunk_hidden = tuple(int(h) for h in trunk_hidden)
        self.stream_hidden = int(stream_hidden)
        self.trunk_activation = trunk_activation

        trunk_dims = (self.obs_dim, *self.trunk_hidden)
        feat = trunk_dims[-1]
        value_dims = (feat, self.stream_hidden, 1)
        adv_dims = [(feat, self.stream_hidden, k) for k in self.branch_sizes]

        sizes = [nn.param_count(trunk_dims), nn.param_count(value_dims)]
        sizes += [nn.param_count(d) for d in adv_dims]
        self._offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        self.theta = np.zeros(self._offsets[-1], dtype=np.float64)

        trunk_acts = (trunk_activation,) * len(self.trunk_hidden)
        stream_acts = (trunk_activation, "linear")
        self.trunk = nn.Mlp(trunk_dims, trunk_acts, self._slice(0))
        self.value = nn.Mlp(value_dims, stream_acts, self._slice(1))
        self.advantages = [nn.Mlp(adv_dims[i], stream_acts, self._slice(2 + i))
                           for i in range(len(self.branch_sizes))]
        if rng is not None:
            self.init_params(rng)

    def _slice(self, i: int) -> np.ndarray:
        return self.theta[self._offsets[i]:self._offsets[i + 1]]

    @property
    def n_params(self) -> int:
        return self.theta.size

    def init_params(self, rng: np.random.Generator) -> None:
        self.trunk.init_params(rng)
        self.value.init_params(rng)
        for adv in self.advantages:
            adv.init_params(rng)

    def forward_streams(self, obs, want_cache: bool = False):
        """Return (V, [A per branch]); with ``want_cache`` also the caches
        needed by backward_streams."""
        obs = np.asarray(obs, dtype=np.float64)
        squeeze = obs.ndim == 1
        x = obs[None, :] if squeeze else obs
        if want_cache:
            feat, trunk_cache = self.trunk.forward(x, want_cache=True)
            v_out, value_cache = self.value.forward(feat, want_cache=True)
            adv = []
            adv_caches = []
            for net in self.advantages:
                a_out, a_cache = net.forward(feat, want_cache=True)
                adv.append(a_out)
                adv_caches.append(a_cache)
        else:
            feat = self.trunk.forward(x)
            v_out = self.value.forward(feat)
            adv = [net.forward(feat) for net in self.advantages]
        v = v_out[:, 0]
        if squeeze:
            v = float(v[0])
            adv = [a[0] for a in adv]
        if want_cache:
            return v, adv, (trunk_cache, value_cache, adv_caches, squeeze)
        return v, adv

    def backward_streams(self, cache, d_v, d_adv, grad: np.ndarray | None = None):
        """Backpropagate gradients w.r.t. V and the advantage outputs.

        Returns a flat gradient vector laid out like ``theta``. Batch
        contributions are summed; callers bake 1/B and any per-sample
        weights into d_v / d_adv.
        """
        trunk_cache, value_cache, adv_caches, squeeze = cache
        if grad is None:
            grad = np.zeros_like(self.theta)
        o = self._offsets
        d_v = np.asarray(d_v, dtype=np.float64)
        if squeeze:
            d_v = np.atleast_1d(d_v)
            d_adv = [np.asarray(d, dtype=np.float64)[None, :] for d in d_adv]
        d_feat, _ = self.value.backward(value_cache, d_v[:, None], grad[o[1]:o[2]])
        for i, net in enumerate(self.advantages):
            d_f, _ = net.backward(adv_caches[i], d_adv[i], grad[o[2 + i]:o[3 + i]])
            d_feat = d_feat + d_f
        self.trunk.backward(trunk_cache, d_feat, grad[o[0]:o[1]])
        return grad

    def q_values(self, obs):
        """Aggregated Q-values per branch, using the network's own V."""
        v, adv = self.forward_streams(obs)
        return [aggregate_q(v, a) for a in adv]

    def q_with_central_v(self, obs, v_central, raw: bool = False):
        """Q-values per branch with the state value replaced by an external
        (typically centrally estimated) value.

        The branch-mean subtraction is kept by default; ``raw=True`` adds the
        external value to the uncentered advantages instead. The network's
        own V is still computed by the forward pass but plays no role here.
        """
        v_central = np.asarray(v_central, dtype=np.float64)
        if not np.all(np.isfinite(v_central)):
            raise TrainingFault("non-finite central state-value", "q_with_central_v")
        _, adv = self.forward_streams(obs)
        if raw:
            if np.asarray(adv[0]).ndim == 1:
                return [float(v_central) + a for a in adv]
            return [v_central[:, None] + a for a in adv]
        return [aggregate_q(v_central, a) for a in adv]

    def copy_from(self, other: "DuelingNetwork") -> None:
        if other.theta.size != self.theta.size:
            raise ConfigurationError("cannot copy between differently shaped networks")
        np.copyto(self.theta, other.theta)

    def clone(self) -> "DuelingNetwork":
        net = DuelingNetwork(self.obs_dim, self.branch_sizes, self.trunk_hidden,
                             self.stream_hidden, self.trunk_activation)
        np.copyto(net.theta, self.theta)
        return net

    def weight_arrays(self) -> list[np.ndarray]:
        """All parameter arrays in serialization order."""
        arrays = []
        for net in (self.trunk, self.value, *self.advantages):
            for layer in net.layers:
                arrays.extend((layer.w, layer.b))
        return arrays


def select_action(net: DuelingNetwork, obs, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    """Epsilon-greedy action per branch from the agent's own observation.

    Greedy ties resolve to the lowest index. A single coin decides between
    greedy and uniform exploration for the whole decision.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError(f"epsilon must be a probability, got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return np.array([rng.integers(k) for k in net.branch_sizes], dtype=np.int64)
    qs = net.q_values(obs)
    return np.array([int(np.argmax(q)) for q in qs], dtype=np.int64)
