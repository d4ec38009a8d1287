"""Baselines: independent double-Q learners and additive value decomposition.

Both use the same dueling architecture, prioritized replay and n-step
machinery as the main trainer, so comparisons isolate how the bootstrap
value is produced: IQL agents each keep a private target network, VDN
trains the sum of the agents' Q-values on a team reward through per-agent
target networks.
"""

from __future__ import annotations

import itertools

import numpy as np

from .dueling import DuelingNetwork
from .errors import ConfigurationError, TrainingFault
from .nn import Adam
from .replay import AgentReplay
from .trainer import BaseTrainer, TrainSchedule, q_loss_and_grad, stack_batch


class IqlAgent:
    """Independent learner: dueling double-DQN with its own target copy."""

    def __init__(self, agent_id: int, obs_dim: int, branch_sizes, lr: float,
                 replay_capacity: int, n_step: int, gamma: float,
                 per_alpha: float, priority_epsilon: float,
                 net_kwargs: dict, rng: np.random.Generator):
        self.id = agent_id
        self.net = DuelingNetwork(obs_dim, branch_sizes, rng=rng, **net_kwargs)
        self.target_net = self.net.clone()
        self.replay = AgentReplay(replay_capacity, n_step, gamma,
                                  per_alpha, priority_epsilon)
        self.optimizer = Adam(self.net.n_params, lr=lr)
        self.train_steps = 0

    def sync_target(self) -> None:
        self.target_net.copy_from(self.net)


def double_q_targets(net: DuelingNetwork, target_net: DuelingNetwork,
                     batch: dict) -> list:
    """Per-branch double-DQN targets: online net picks, target net scores."""
    qs_online = net.q_values(batch["next_obs"])
    qs_target = target_net.q_values(batch["next_obs"])
    rows = np.arange(batch["obs"].shape[0])
    targets = []
    for b in range(len(net.branch_sizes)):
        pick = np.argmax(qs_online[b], axis=1)
        boot = qs_target[b][rows, pick]
        targets.append(batch["ret"] + batch["gamma_n"] * boot * (1.0 - batch["done"]))
    return targets


class IqlTrainer(BaseTrainer):

    def __init__(self, env, schedule: TrainSchedule, seed: int, lr: float = 1e-3,
                 replay_capacity: int = 50000, n_step: int = 3,
                 per_alpha: float = 0.6, priority_epsilon: float = 1e-6,
                 net_kwargs: dict | None = None):
        super().__init__(env, schedule, seed)
        net_kwargs = net_kwargs or {}
        self.agents = [
            IqlAgent(i, env.obs_dim, env.branch_sizes, lr, replay_capacity,
                     n_step, schedule.gamma, per_alpha, priority_epsilon,
                     net_kwargs, self.init_rng)
            for i in range(env.n_agents)
        ]

    def nets(self) -> list:
        return [a.net for a in self.agents]

    def record(self, obs, actions, result) -> None:
        segment_done = result.info.get(
            "segment_done", np.zeros(self.env.n_agents, dtype=bool))
        for i, agent in enumerate(self.agents):
            agent.replay.push(obs[i], actions[i], float(result.rewards[i]),
                              result.obs[i], bool(segment_done[i]))

    def end_episode(self) -> None:
        for agent in self.agents:
            agent.replay.end_episode()

    def train_tick(self) -> None:
        for agent in self.agents:
            self.train_agent_step(agent)

    def train_agent_step(self, agent: IqlAgent) -> float | None:
        b = self.schedule.batch_size
        if len(agent.replay) < b:
            return None
        beta = self.schedule.beta_at(self.total_steps)
        items, idxs, weights = agent.replay.sample(b, beta, self.replay_rng)
        batch = stack_batch(items)
        targets = double_q_targets(agent.net, agent.target_net, batch)
        loss, grad, td_err = q_loss_and_grad(
            agent.net, batch, targets, weights, f"iql agent {agent.id} update")
        agent.optimizer.step(agent.net.theta, grad, f"iql agent {agent.id} update")
        agent.replay.update_priorities(idxs, td_err)
        agent.train_steps += 1
        if agent.train_steps % self.schedule.target_sync_every == 0:
            agent.sync_target()
        return loss


class VdnTrainer(BaseTrainer):
    """Additive joint-value learner over synchronized team transitions.

    The joint action-value is the sum of the agents' aggregated Q-values;
    one TD loss on that sum backpropagates the shared error into every
    agent's network. The shared replay stores whole team steps (stacked
    observations and actions) with a team reward.
    """

    def __init__(self, env, schedule: TrainSchedule, seed: int, lr: float = 1e-3,
                 replay_capacity: int = 50000, n_step: int = 3,
                 per_alpha: float = 0.6, priority_epsilon: float = 1e-6,
                 net_kwargs: dict | None = None, team_reward: str = "sum"):
        super().__init__(env, schedule, seed)
        if team_reward not in ("sum", "mean"):
            raise ConfigurationError(f"team_reward must be sum or mean, got {team_reward!r}")
        self.team_reward = team_reward
        net_kwargs = net_kwargs or {}
        self.vdn_nets = [DuelingNetwork(env.obs_dim, env.branch_sizes,
                                        rng=self.init_rng, **net_kwargs)
                         for _ in range(env.n_agents)]
        self.target_nets = [net.clone() for net in self.vdn_nets]
        self.optimizers = [Adam(net.n_params, lr=lr) for net in self.vdn_nets]
        self.replay = AgentReplay(replay_capacity, n_step, schedule.gamma,
                                  per_alpha, priority_epsilon)
        self.train_steps = 0

    def nets(self) -> list:
        return self.vdn_nets

    def sync_targets(self) -> None:
        for target, net in zip(self.target_nets, self.vdn_nets):
            target.copy_from(net)

    def record(self, obs, actions, result) -> None:
        r_team = (float(result.rewards.sum()) if self.team_reward == "sum"
                  else float(result.rewards.mean()))
        # the joint trajectory only ends with the episode; individual robot
        # resets are part of the joint dynamics
        self.replay.push(np.stack(obs), np.stack(actions), r_team,
                         np.stack(result.obs), result.info.get("terminal", False))

    def end_episode(self) -> None:
        self.replay.end_episode()

    def train_tick(self) -> None:
        self.train_joint_step()

    def train_joint_step(self) -> float | None:
        bsz = self.schedule.batch_size
        if len(self.replay) < bsz:
            return None
        beta = self.schedule.beta_at(self.total_steps)
        items, idxs, weights = self.replay.sample(bsz, beta, self.replay_rng)
        batch = stack_batch(items)  # obs/action/next_obs have shape (B, N, ...)
        n_agents = self.env.n_agents
        rows = np.arange(bsz)
        n_branches = len(self.vdn_nets[0].branch_sizes)

        # additive bootstrap: each agent contributes its own double-Q pick
        boot = [np.zeros(bsz) for _ in range(n_branches)]
        for i, (net, target) in enumerate(zip(self.vdn_nets, self.target_nets)):
            qs_online = net.q_values(batch["next_obs"][:, i])
            qs_target = target.q_values(batch["next_obs"][:, i])
            for b in range(n_branches):
                pick = np.argmax(qs_online[b], axis=1)
                boot[b] += qs_target[b][rows, pick]

        # joint prediction and shared TD error per branch
        agent_chosen = []
        agent_caches = []
        for i, net in enumerate(self.vdn_nets):
            v, adv, cache = net.forward_streams(batch["obs"][:, i], want_cache=True)
            chosen = []
            for b, k in enumerate(net.branch_sizes):
                centered = adv[b] - adv[b].mean(axis=1, keepdims=True)
                chosen.append(v + centered[rows, batch["action"][:, i, b]])
            agent_chosen.append(chosen)
            agent_caches.append(cache)

        loss = 0.0
        abs_err = np.zeros(bsz)
        deltas = []
        for b in range(n_branches):
            q_joint = sum(agent_chosen[i][b] for i in range(n_agents))
            y = batch["ret"] + batch["gamma_n"] * boot[b] * (1.0 - batch["done"])
            delta = q_joint - y
            deltas.append(delta)
            loss += float(np.mean(weights * delta * delta))
            abs_err += np.abs(delta)
        if not np.isfinite(loss):
            raise TrainingFault("non-finite loss", "vdn joint update")

        for i, net in enumerate(self.vdn_nets):
            d_v = np.zeros(bsz)
            d_adv = []
            for b, k in enumerate(net.branch_sizes):
                d_chosen = 2.0 * weights * deltas[b] / bsz
                d_q = np.zeros((bsz, k))
                d_q[rows, batch["action"][:, i, b]] = d_chosen
                d_v += d_chosen
                d_adv.append(d_q - d_q.mean(axis=1, keepdims=True))
            grad = net.backward_streams(agent_caches[i], d_v, d_adv)
            self.optimizers[i].step(net.theta, grad, f"vdn agent {i} update")

        self.replay.update_priorities(idxs, abs_err / n_branches)
        self.train_steps += 1
        if self.train_steps % self.schedule.target_sync_every == 0:
            self.sync_targets()
        return loss


def vdn_joint_q(nets: list, observations: list, joint_action) -> float:
    """Additive joint action-value: the sum over agents (and over their
    action branches) of the aggregated Q-values at the chosen indices."""
    total = 0.0
    for net, obs, action in zip(nets, observations, joint_action):
        qs = net.q_values(obs)
        action = np.atleast_1d(action)
        total += sum(float(qs[b][int(action[b])]) for b in range(len(qs)))
    return total


def flat_agent_qs(net: DuelingNetwork, obs) -> np.ndarray:
    """One flat Q vector over an agent's full (cross-branch) action set,
    enumerated in lexicographic branch order, additive across branches."""
    qs = net.q_values(obs)
    flat = np.zeros(1)
    for q in qs:
        flat = (flat[:, None] + q[None, :]).ravel()
    return flat


def igm_check(individual_qs: list, joint_q, enumeration_cap: int = 10 ** 6) -> bool:
    """Does the greedy joint action match the tuple of greedy individual
    actions?

    ``individual_qs`` holds one flat Q vector per agent; ``joint_q`` maps a
    tuple of per-agent action indices to a scalar. Ties resolve to the
    lowest index on both sides (lexicographic for the joint scan). Refuses
    joint spaces above the enumeration cap.
    """
    sizes = [len(q) for q in individual_qs]
    joint_size = int(np.prod(sizes))
    if joint_size > enumeration_cap:
        raise ConfigurationError(
            f"joint action space of {joint_size} exceeds enumeration cap")
    greedy = tuple(int(np.argmax(q)) for q in individual_qs)
    best_action = None
    best_value = -np.inf
    for action in itertools.product(*(range(s) for s in sizes)):
        value = float(joint_q(action))
        if value > best_value:
            best_value = value
            best_action = action
    return best_action == greedy


def igm_check_networks(nets: list, observations: list, joint_q=None,
                       enumeration_cap: int = 10 ** 6) -> bool:
    """IGM check for a set of networks; defaults to the additive joint."""
    flats = [flat_agent_qs(net, obs) for net, obs in zip(nets, observations)]
    if joint_q is None:
        def joint_q(action):
            return sum(flats[i][a] for i, a in enumerate(action))
    return igm_check(flats, joint_q, enumeration_cap)
