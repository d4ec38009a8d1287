"""Training orchestration: decentralized acting, centralized value updates.

Each agent picks actions from its own observation alone. During collection
the trainer records every agent's state value, feeds the concatenated vector
to the central estimator, and stores the next-step vector inside each
transition. At update time the stored vector is pushed through the central
TARGET network to get the joint next state-value that replaces the agent's
own bootstrap value, which is what lets the agents run without target
networks of their own.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .central import CentralEstimator
from .dueling import DuelingNetwork, aggregate_q, select_action
from .errors import ConfigurationError, TrainingFault
from .metrics import EpochMetrics
from .nn import Adam
from .replay import AgentReplay, Transition


@dataclass
class TrainSchedule:
    """Knobs that shape one training run."""

    gamma: float = 0.99
    batch_size: int = 64
    train_every: int = 4
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 50000
    central_sync_every: int = 200
    target_sync_every: int = 200
    max_epochs: int = 1000
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_beta_steps: int = 50000

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.epsilon_end > self.epsilon_start:
            raise ConfigurationError("epsilon_end must not exceed epsilon_start")
        if self.train_every < 1 or self.batch_size < 1:
            raise ConfigurationError("train_every and batch_size must be positive")

    def epsilon_at(self, step: int) -> float:
        if step >= self.epsilon_decay_steps:
            return self.epsilon_end
        frac = step / self.epsilon_decay_steps
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac

    def beta_at(self, step: int) -> float:
        if step >= self.per_beta_steps:
            return self.per_beta_end
        frac = step / self.per_beta_steps
        return self.per_beta_start + (self.per_beta_end - self.per_beta_start) * frac


class GdqAgent:
    """One decentralized learner: dueling net, prioritized replay, Adam.

    Deliberately has no target network; the stabilizing bootstrap value
    comes from the central estimator's target copy instead.
    """

    def __init__(self, agent_id: int, obs_dim: int, branch_sizes, lr: float,
                 replay_capacity: int, n_step: int, gamma: float,
                 per_alpha: float, priority_epsilon: float,
                 net_kwargs: dict, rng: np.random.Generator):
        self.id = agent_id
        self.net = DuelingNetwork(obs_dim, branch_sizes, rng=rng, **net_kwargs)
        self.replay = AgentReplay(replay_capacity, n_step, gamma,
                                  per_alpha, priority_epsilon)
        self.optimizer = Adam(self.net.n_params, lr=lr)
        self.epsilon = 1.0


def agent_td_target(net: DuelingNetwork, transition: Transition, v_g_prime: float,
                    raw: bool = False) -> np.ndarray:
    """Per-branch TD target for one transition, bootstrapping with the joint
    state-value in place of the agent's own."""
    n_branches = len(net.branch_sizes)
    if transition.done:
        return np.full(n_branches, transition.n_step_return)
    qs = net.q_with_central_v(transition.next_obs, v_g_prime, raw=raw)
    if not all(np.all(np.isfinite(q)) for q in qs):
        raise TrainingFault("non-finite TD target", "agent_td_target")
    return np.array([transition.n_step_return + transition.gamma_n * float(q.max())
                     for q in qs])


def stack_batch(items: list) -> dict:
    """Columnize a list of transitions into contiguous arrays."""
    batch = {
        "obs": np.stack([t.obs for t in items]),
        "action": np.stack([t.action for t in items]),
        "ret": np.array([t.n_step_return for t in items]),
        "next_obs": np.stack([t.next_obs for t in items]),
        "done": np.array([t.done for t in items], dtype=np.float64),
        "gamma_n": np.array([t.gamma_n for t in items]),
    }
    if items[0].v_next is not None:
        batch["v_next"] = np.stack([t.v_next for t in items])
    return batch


def q_loss_and_grad(net: DuelingNetwork, batch: dict, targets: list,
                    weights: np.ndarray, context: str):
    """Importance-weighted squared TD loss summed over branches.

    ``targets`` holds one (B,) array per branch. Returns (loss, grad,
    td_errors) where td_errors is the per-item mean absolute error across
    branches, ready for priority updates.
    """
    B = batch["obs"].shape[0]
    rows = np.arange(B)
    v, adv, cache = net.forward_streams(batch["obs"], want_cache=True)
    d_v = np.zeros(B)
    d_adv = []
    loss = 0.0
    abs_err = np.zeros(B)
    for b, k in enumerate(net.branch_sizes):
        q_b = aggregate_q(v, adv[b])
        chosen = q_b[rows, batch["action"][:, b]]
        delta = chosen - targets[b]
        loss += float(np.mean(weights * delta * delta))
        abs_err += np.abs(delta)
        d_chosen = 2.0 * weights * delta / B
        d_q = np.zeros((B, k))
        d_q[rows, batch["action"][:, b]] = d_chosen
        # aggregation jacobian: dV sums branch gradients, advantages are
        # gradient-centered by the mean subtraction
        d_v += d_chosen
        d_adv.append(d_q - d_q.mean(axis=1, keepdims=True))
    if not np.isfinite(loss):
        raise TrainingFault("non-finite loss", context)
    grad = net.backward_streams(cache, d_v, d_adv)
    return loss, grad, abs_err / len(net.branch_sizes)


class BaseTrainer:
    """Shared episode loop: act, step, record, periodic train ticks."""

    def __init__(self, env, schedule: TrainSchedule, seed: int):
        self.env = env
        self.schedule = schedule
        self.seed = seed
        ss = np.random.SeedSequence(seed).spawn(3)
        self.init_rng = np.random.default_rng(ss[0])
        self.action_rng = np.random.default_rng(ss[1])
        self.replay_rng = np.random.default_rng(ss[2])
        self.total_steps = 0
        self.epoch = 0

    # subclasses provide: nets(), record(obs, actions, result), train_tick(),
    # end_episode()

    def act(self, obs_list: list) -> list:
        eps = self.schedule.epsilon_at(self.total_steps)
        return [select_action(net, obs, eps, self.action_rng)
                for net, obs in zip(self.nets(), obs_list)]

    def run_epoch(self) -> EpochMetrics:
        t0 = time.perf_counter()
        obs = self.env.reset()
        ep_reward = np.zeros(self.env.n_agents)
        while True:
            actions = self.act(obs)
            result = self.env.step(actions)
            self.record(obs, actions, result)
            ep_reward += result.rewards
            obs = result.obs
            self.total_steps += 1
            if self.total_steps % self.schedule.train_every == 0:
                self.train_tick()
            if result.done:
                break
        self.end_episode()
        stats = self.env.episode_stats()
        m = EpochMetrics(
            epoch=self.epoch,
            success_rate=float(np.mean(stats["success_per_agent"])),
            avg_reward=float(ep_reward.mean()),
            avg_steps=float(np.mean(stats["steps_per_agent"])),
            collision_pct=float(stats["collision_pct"]),
            avg_landmark_distance=stats["avg_landmark_distance"],
            wall_time=time.perf_counter() - t0,
        )
        self.epoch += 1
        return m

    def train(self, on_epoch=None) -> list[EpochMetrics]:
        out = []
        for _ in range(self.schedule.max_epochs):
            m = self.run_epoch()
            out.append(m)
            if on_epoch is not None:
                on_epoch(m)
        return out


class GdqTrainer(BaseTrainer):

    def __init__(self, env, schedule: TrainSchedule, seed: int, lr: float = 1e-3,
                 replay_capacity: int = 50000, n_step: int = 3,
                 per_alpha: float = 0.6, priority_epsilon: float = 1e-6,
                 net_kwargs: dict | None = None, central_hidden=(64, 64),
                 team_reward: str = "mean", update_order: str = "central_first",
                 raw_global_value_aggregation: bool = False,
                 central_per: bool = False):
        super().__init__(env, schedule, seed)
        if team_reward not in ("mean", "sum"):
            raise ConfigurationError(f"team_reward must be mean or sum, got {team_reward!r}")
        if update_order not in ("central_first", "agents_first"):
            raise ConfigurationError(f"bad update_order {update_order!r}")
        self.team_reward = team_reward
        self.update_order = update_order
        self.raw_aggregation = raw_global_value_aggregation
        net_kwargs = net_kwargs or {}
        self.agents = [
            GdqAgent(i, env.obs_dim, env.branch_sizes, lr, replay_capacity,
                     n_step, schedule.gamma, per_alpha, priority_epsilon,
                     net_kwargs, self.init_rng)
            for i in range(env.n_agents)
        ]
        self.central = CentralEstimator(
            env.n_agents, schedule.gamma, central_hidden, lr,
            replay_capacity, central_per, per_alpha, priority_epsilon,
            rng=self.init_rng)

    def nets(self) -> list:
        return [a.net for a in self.agents]

    def state_values(self, obs_list: list) -> np.ndarray:
        """Each agent's own state value for its own observation."""
        return np.array([a.net.forward_streams(obs)[0]
                         for a, obs in zip(self.agents, obs_list)])

    def collect_step(self, obs: list):
        """One decentralized environment step plus all bookkeeping."""
        actions = self.act(obs)
        result = self.env.step(actions)
        self.record(obs, actions, result)
        return actions, result

    def record(self, obs: list, actions: list, result) -> None:
        v = self.state_values(obs)
        v_prime = self.state_values(result.obs)
        r_team = (float(result.rewards.mean()) if self.team_reward == "mean"
                  else float(result.rewards.sum()))
        self.central.push(v, v_prime, r_team, result.info.get("terminal", False))
        segment_done = result.info.get(
            "segment_done", np.zeros(self.env.n_agents, dtype=bool))
        for i, agent in enumerate(self.agents):
            agent.replay.push(obs[i], actions[i], float(result.rewards[i]),
                              result.obs[i], bool(segment_done[i]), v_next=v_prime)

    def end_episode(self) -> None:
        for agent in self.agents:
            agent.replay.end_episode()

    def train_tick(self) -> None:
        if self.update_order == "central_first":
            self.train_central_step()
            self.train_agent_steps()
        else:
            self.train_agent_steps()
            self.train_central_step()

    def train_central_step(self) -> None:
        beta = self.schedule.beta_at(self.total_steps)
        loss = self.central.train_step(self.schedule.batch_size, self.replay_rng, beta)
        if loss is not None and self.central.train_steps % self.schedule.central_sync_every == 0:
            self.central.sync_target()

    def train_agent_steps(self) -> None:
        for agent in self.agents:
            self.train_agent_step(agent)

    def train_agent_step(self, agent: GdqAgent) -> float | None:
        """One prioritized, importance-weighted TD update for one agent."""
        b = self.schedule.batch_size
        if len(agent.replay) < b:
            return None
        beta = self.schedule.beta_at(self.total_steps)
        items, idxs, weights = agent.replay.sample(b, beta, self.replay_rng)
        batch = stack_batch(items)
        # joint next state-value from the frozen collected vectors, always
        # through the central TARGET parameters
        v_g_prime = self.central.forward_vg(batch["v_next"], use_target=True)
        qs_next = agent.net.q_with_central_v(batch["next_obs"], v_g_prime,
                                             raw=self.raw_aggregation)
        targets = [batch["ret"] + batch["gamma_n"] * q.max(axis=1) * (1.0 - batch["done"])
                   for q in qs_next]
        loss, grad, td_err = q_loss_and_grad(
            agent.net, batch, targets, weights, f"agent {agent.id} update")
        agent.optimizer.step(agent.net.theta, grad, f"agent {agent.id} update")
        agent.replay.update_priorities(idxs, td_err)
        return loss
