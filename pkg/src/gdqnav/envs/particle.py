"""Cooperative navigation particle world.

N round agents must spread over N landmarks in a bounded square. Everyone
shares a distance-based team reward (negative sum over landmarks of the
closest agent's distance); colliding agents additionally pay -1 per contact.
Double-integrator dynamics with velocity damping; five discrete actions:
coast and unit accelerations along +-x / +-y.
"""

from __future__ import annotations

import numpy as np

from ..dueling import ActionSpec
from ..errors import ConfigurationError
from . import StepResult

ACTION_SPEC = ActionSpec(branches=(("move", (0.0, 1.0, 2.0, 3.0, 4.0)),))

# action index -> acceleration direction
_ACCELS = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])


class ParticleWorld:

    def __init__(self, n_agents: int = 3, n_landmarks: int | None = None,
                 seed: int = 0, max_steps: int = 25, bound: float = 1.0,
                 agent_radius: float = 0.15, landmark_radius: float = 0.05,
                 dt: float = 0.1, damping: float = 0.25, accel: float = 3.0):
        if n_landmarks is None:
            n_landmarks = n_agents
        if n_landmarks != n_agents:
            raise ConfigurationError("cooperative navigation uses one landmark per agent")
        self.n_agents = n_agents
        self.n_landmarks = n_landmarks
        self.max_steps = max_steps
        self.bound = bound
        self.agent_radius = agent_radius
        self.landmark_radius = landmark_radius
        self.dt = dt
        self.damping = damping
        self.accel = accel
        self.action_spec = ACTION_SPEC
        self.rng = np.random.default_rng(seed)
        # velocity saturates at accel*dt/damping; used to normalize observations
        self._v_scale = 2.0
        self.pos = np.zeros((n_agents, 2))
        self.vel = np.zeros((n_agents, 2))
        self.landmarks = np.zeros((n_landmarks, 2))
        self.steps = 0
        self._stats = {}
        self.event_log: list = []

    @property
    def obs_dim(self) -> int:
        return 4 + 2 * self.n_landmarks + 2 * (self.n_agents - 1)

    @property
    def branch_sizes(self):
        return self.action_spec.sizes

    def _place(self, count: int, radius: float) -> np.ndarray:
        """Rejection-sample non-overlapping positions inside the bounds."""
        placed = np.empty((count, 2))
        lim = self.bound - radius
        for i in range(count):
            for attempt in range(1000):
                p = self.rng.uniform(-lim, lim, size=2)
                if i == 0 or np.all(np.linalg.norm(placed[:i] - p, axis=1) > 2 * radius):
                    placed[i] = p
                    break
            else:
                raise ConfigurationError("could not place entities without overlap")
        return placed

    def reset(self) -> list:
        self.pos = self._place(self.n_agents, self.agent_radius)
        self.landmarks = self._place(self.n_landmarks, self.landmark_radius)
        self.vel = np.zeros((self.n_agents, 2))
        self.steps = 0
        self.event_log = []
        self._stats = {
            "collision_events": 0,
            "landmark_distance_sum": 0.0,
            "collided": np.zeros(self.n_agents, dtype=bool),
            "reached_goal": np.zeros(self.n_agents, dtype=bool),
            "first_goal_step": np.full(self.n_agents, -1, dtype=np.int64),
        }
        return [self.observation(i) for i in range(self.n_agents)]

    def observation(self, i: int) -> np.ndarray:
        """Own velocity and position, then landmark and other-agent offsets,
        each scaled so every component stays inside [-1, 1]."""
        rel_land = (self.landmarks - self.pos[i]).ravel()
        others = np.delete(np.arange(self.n_agents), i)
        rel_agents = (self.pos[others] - self.pos[i]).ravel()
        return np.concatenate([
            self.vel[i] / self._v_scale,
            self.pos[i] / self.bound,
            rel_land / (2.0 * self.bound),
            rel_agents / (2.0 * self.bound),
        ])

    def step(self, actions) -> StepResult:
        if len(actions) != self.n_agents:
            raise ConfigurationError("need one action per agent")
        idx = np.array([int(np.atleast_1d(a)[0]) for a in actions])
        accel = self.accel * _ACCELS[idx]
        self.vel *= 1.0 - self.damping
        self.vel += accel * self.dt
        self.pos += self.vel * self.dt
        np.clip(self.pos, -self.bound, self.bound, out=self.pos)

        diff = self.pos[:, None, :] - self.pos[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        contacts = dist < 2 * self.agent_radius
        collisions_per_agent = contacts.sum(axis=1)

        land_dist = np.linalg.norm(self.pos[:, None, :] - self.landmarks[None, :, :], axis=-1)
        min_dist = land_dist.min(axis=0)
        shared = -float(min_dist.sum())
        rewards = shared - collisions_per_agent.astype(np.float64)

        self.steps += 1
        done = self.steps >= self.max_steps
        events = ["collision" if c else None for c in collisions_per_agent > 0]

        st = self._stats
        st["collision_events"] += int((collisions_per_agent > 0).sum())
        st["landmark_distance_sum"] += float(min_dist.mean())
        st["collided"] |= collisions_per_agent > 0
        covered = land_dist.min(axis=1) < self.agent_radius
        newly = covered & ~st["reached_goal"]
        st["first_goal_step"][newly] = self.steps
        st["reached_goal"] |= covered
        for i, ev in enumerate(events):
            if ev is not None:
                self.event_log.append((self.steps, i, ev))
        for i in np.flatnonzero(newly):
            self.event_log.append((self.steps, int(i), "goal"))

        obs = [self.observation(i) for i in range(self.n_agents)]
        # collisions here are penalties, not terminals: nobody teleports,
        # so value bootstrapping continues through them
        info = {"mean_landmark_distance": float(min_dist.mean()),
                "colliding_agents": int((collisions_per_agent > 0).sum()),
                "segment_done": np.zeros(self.n_agents, dtype=bool),
                "terminal": False}
        return StepResult(obs, rewards, events, done, info)

    def episode_stats(self) -> dict:
        """Counters for the metrics row; valid once the episode has ended."""
        st = self._stats
        steps = max(self.steps, 1)
        succeeded = st["reached_goal"] & ~st["collided"]
        return {
            "success_per_agent": succeeded,
            "collision_pct": st["collision_events"] / (self.n_agents * steps),
            "avg_landmark_distance": st["landmark_distance_sum"] / steps,
            "steps_per_agent": np.where(st["first_goal_step"] > 0,
                                        st["first_goal_step"], self.steps),
            "episode_steps": self.steps,
        }
