"""Centralized joint state-value estimator.

A small feedforward regressor that maps the vector of per-agent state
values to one joint state value, trained on team reward with a hard-synced
target copy. Agents consume the target copy's output inside their TD
targets, never the online one.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import ConfigurationError, TrainingFault
from .replay import PrioritizedBuffer, UniformRing


class CentralEstimator:
    """Joint state-value network with target copy and its own replay."""

    def __init__(self, n_agents: int, gamma: float, hidden=(64, 64), lr: float = 1e-3,
                 buffer_capacity: int = 50000, use_per: bool = False,
                 per_alpha: float = 0.6, priority_epsilon: float = 1e-6,
                 rng: np.random.Generator | None = None):
        if n_agents < 1:
            raise ConfigurationError("central estimator needs at least one agent input")
        self.n_agents = n_agents
        self.gamma = gamma
        dims = (n_agents, *hidden, 1)
        acts = ("relu",) * len(hidden) + ("linear",)
        self.online = nn.Mlp(dims, acts, rng=rng)
        self.target = self.online.clone()
        self.optimizer = nn.Adam(self.online.theta.size, lr=lr)
        self.use_per = use_per
        if use_per:
            self.buffer = PrioritizedBuffer(buffer_capacity, per_alpha, priority_epsilon)
        else:
            self.buffer = UniformRing(buffer_capacity)
        self.train_steps = 0

    def forward_vg(self, v, use_target: bool = False):
        """Joint state value for one vector of agent values (scalar out) or
        a (batch, N) matrix of them (vector out)."""
        v = np.asarray(v, dtype=np.float64)
        net = self.target if use_target else self.online
        if v.shape[-1] != self.n_agents:
            raise ConfigurationError(
                f"state-value vector has length {v.shape[-1]}, expected {self.n_agents}")
        out = net.forward(v)
        if v.ndim == 1:
            return float(out[0])
        return out[:, 0]

    def td_target(self, r_team: float, v_prime, done: bool = False) -> float:
        """Bootstrapped regression target from the target parameters."""
        if done:
            return float(r_team)
        return float(r_team) + self.gamma * self.forward_vg(v_prime, use_target=True)

    def push(self, v, v_prime, r_team: float, done: bool = False) -> None:
        self.buffer.push((np.asarray(v, dtype=np.float64),
                          np.asarray(v_prime, dtype=np.float64),
                          float(r_team), bool(done)))

    def train_step(self, batch_size: int, rng: np.random.Generator,
                   beta: float = 1.0) -> float | None:
        """One optimizer step of squared-error value regression.

        Returns the batch loss, or None when the buffer is still too small.
        """
        if len(self.buffer) < batch_size:
            return None
        if self.use_per:
            items, idxs, weights = self.buffer.sample(batch_size, beta, rng)
        else:
            items, idxs, weights = self.buffer.sample(batch_size, rng)
        v = np.stack([it[0] for it in items])
        v_prime = np.stack([it[1] for it in items])
        r_team = np.array([it[2] for it in items])
        done = np.array([it[3] for it in items])

        bootstrap = self.forward_vg(v_prime, use_target=True)
        targets = r_team + self.gamma * bootstrap * (1.0 - done)
        out, cache = self.online.forward(v, want_cache=True)
        delta = out[:, 0] - targets
        loss = float(np.mean(weights * delta * delta))
        if not np.isfinite(loss):
            raise TrainingFault("non-finite loss", "central estimator")
        d_out = (2.0 * weights * delta / batch_size)[:, None]
        _, grad = self.online.backward(cache, d_out)
        self.optimizer.step(self.online.theta, grad, "central estimator")
        if self.use_per:
            self.buffer.update_priorities(idxs, np.abs(delta))
        self.train_steps += 1
        return loss

    def sync_target(self) -> None:
        """Hard copy of the online parameters into the target copy."""
        self.target.copy_from(self.online)
