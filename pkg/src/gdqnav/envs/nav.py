"""2D multi-robot mapless navigation world.

Disc robots with unicycle kinematics drive toward per-robot goals inside a
walled arena with fixed obstacles. Each robot senses 35 lidar ranges over
[-120, 120] degrees plus the polar coordinates of its own goal; policies
never see a map. Rewards: +1 and a fresh goal on arrival, -1 and a reset to
the start pose on any collision, otherwise a progress term minus a constant
step cost. The shared episode ends at the step cap.

All ray geometry is exact (segment/slab/circle intersections), vectorized
across robots and beams.
"""

from __future__ import annotations

import numpy as np

from ..dueling import ActionSpec
from ..errors import ConfigurationError, SceneError
from . import StepResult
from .scenes import Scene

N_BEAMS = 35
BEAM_BEARINGS = np.deg2rad(np.linspace(-120.0, 120.0, N_BEAMS))

ANGULAR_DEG_S = (-90.0, -45.0, 0.0, 45.0, 90.0)
LINEAR_M_S = (0.0, 0.05, 0.1, 0.15, 0.2)

ACTION_SPEC = ActionSpec(branches=(
    ("angular_velocity_deg_s", ANGULAR_DEG_S),
    ("linear_velocity_m_s", LINEAR_M_S),
))


def nav_reward(d_prev: float, d_now: float, collided: bool, alpha: float,
               goal_radius: float = 0.1, step_penalty: float = 0.005):
    """Per-robot reward and the event it carries.

    Collision dominates: -1 and a terminal event. Arrival within the goal
    radius pays +1. Otherwise the robot earns progress toward the goal,
    alpha * (d_prev - d_now), minus a constant per-step penalty.
    """
    if d_prev < 0 or d_now < 0:
        raise ConfigurationError("distances must be nonnegative")
    if collided:
        return -1.0, "collision"
    if d_now <= goal_radius:
        return 1.0, "goal"
    return alpha * (d_prev - d_now) - step_penalty, None


def _ray_rect_bounds(origins, dirs, bounds):
    """Distance to leave an axis-aligned box from inside, per ray."""
    xmin, ymin, xmax, ymax = bounds
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dirs[:, 0] > 0, (xmax - origins[:, 0]) / dirs[:, 0],
                      np.where(dirs[:, 0] < 0, (xmin - origins[:, 0]) / dirs[:, 0], np.inf))
        ty = np.where(dirs[:, 1] > 0, (ymax - origins[:, 1]) / dirs[:, 1],
                      np.where(dirs[:, 1] < 0, (ymin - origins[:, 1]) / dirs[:, 1], np.inf))
    return np.minimum(tx, ty)


def _ray_circle_inside(origins, dirs, circle):
    """Distance to a circular boundary from inside, per ray."""
    cx, cy, r = circle
    oc = origins - np.array([cx, cy])
    b = np.einsum("kd,kd->k", oc, dirs)
    c = np.einsum("kd,kd->k", oc, oc) - r * r
    disc = np.maximum(b * b - c, 0.0)
    return -b + np.sqrt(disc)


def _ray_rects(origins, dirs, rects):
    """First hit on solid axis-aligned rects; (rays, rects), inf = miss."""
    if len(rects) == 0:
        return np.full((origins.shape[0], 0), np.inf)
    r = np.asarray(rects)
    o = origins[:, None, :]
    d = dirs[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (r[None, :, 0:2] - o) / d
        t2 = (r[None, :, 2:4] - o) / d
    near = np.fmin(t1, t2)
    far = np.fmax(t1, t2)
    t_near = np.max(near, axis=-1)
    t_far = np.min(far, axis=-1)
    hit = (t_near <= t_far) & (t_near > 0.0)
    return np.where(hit, t_near, np.inf)


def _ray_circles(origins, dirs, circles):
    """First hit on solid circles; (rays, circles), inf = miss."""
    if len(circles) == 0:
        return np.full((origins.shape[0], 0), np.inf)
    c = np.asarray(circles)
    oc = origins[:, None, :] - c[None, :, 0:2]
    b = np.einsum("kmd,kd->km", oc, dirs)
    cc = np.einsum("kmd,kmd->km", oc, oc) - c[None, :, 2] ** 2
    disc = b * b - cc
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    hit = (disc > 0.0) & (t > 0.0)
    return np.where(hit, t, np.inf)


def lidar_scan(world: "NavWorld", robot: int) -> np.ndarray:
    """Ranges for one robot's 35 beams, clamped to the sensor's max range.

    Beams hit walls, rectangular and circular obstacles, and the other
    robots' bodies; the scanning robot's own body is ignored.
    """
    return world.scan_all()[robot]


class NavWorld:

    def __init__(self, scene: Scene, n_agents: int, seed: int = 0,
                 max_steps: int = 500, obs_stack: int = 3,
                 max_range: float = 3.5, robot_radius: float = 0.105,
                 dt: float = 0.05, reward_alpha: float = 5.0,
                 goal_radius: float = 0.1, step_penalty: float = 0.005,
                 goal_separation: float = 0.5,
                 collision_resets_episode: bool = False):
        scene.validate()
        if n_agents > len(scene.spawns):
            raise SceneError(
                f"scene has {len(scene.spawns)} spawn poses, need {n_agents}")
        self.scene = scene
        self.n_agents = n_agents
        self.max_steps = max_steps
        self.obs_stack = obs_stack
        self.max_range = max_range
        self.robot_radius = robot_radius
        self.dt = dt
        self.reward_alpha = reward_alpha
        self.goal_radius = goal_radius
        self.step_penalty = step_penalty
        self.goal_separation = goal_separation
        self.collision_resets_episode = collision_resets_episode
        self.action_spec = ACTION_SPEC
        self.goal_rng = np.random.default_rng(seed)

        self._spawns = np.array(scene.spawns[:n_agents], dtype=np.float64)
        if not np.all(scene.inside_arena(self._spawns[:, :2], margin=robot_radius)):
            raise SceneError("a spawn pose is outside the arena (robot radius included)")
        if not np.all(scene.clear_of_obstacles(self._spawns[:, :2], margin=robot_radius)):
            raise SceneError("a spawn pose intersects an obstacle")

        self.pose = self._spawns.copy()
        self.goals = np.zeros((n_agents, 2))
        self._frames = np.zeros((n_agents, obs_stack, self.frame_dim))
        self._d_prev = np.zeros(n_agents)
        self.steps = 0
        self._scan_cache = None
        self._stats = {}
        self.event_log: list = []

    @property
    def frame_dim(self) -> int:
        return N_BEAMS + 2

    @property
    def obs_dim(self) -> int:
        return self.obs_stack * self.frame_dim

    @property
    def branch_sizes(self):
        return self.action_spec.sizes

    # ------------------------------------------------------------------
    # geometry

    def scan_all(self) -> np.ndarray:
        """Lidar ranges for every robot, shape (n_agents, 35)."""
        if self._scan_cache is not None:
            return self._scan_cache
        n = self.n_agents
        angles = self.pose[:, 2][:, None] + BEAM_BEARINGS[None, :]
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1).reshape(-1, 2)
        origins = np.repeat(self.pose[:, :2], N_BEAMS, axis=0)

        if self.scene.arena_rect is not None:
            t = _ray_rect_bounds(origins, dirs, self.scene.arena_rect)
        else:
            t = _ray_circle_inside(origins, dirs, self.scene.arena_circle)
        t_rects = _ray_rects(origins, dirs, self.scene.rects)
        if t_rects.size:
            t = np.minimum(t, t_rects.min(axis=1))

        bodies = np.concatenate([
            np.asarray(self.scene.circles).reshape(-1, 3),
            np.column_stack([self.pose[:, :2],
                             np.full(n, self.robot_radius)]),
        ])
        t_circ = _ray_circles(origins, dirs, bodies)
        n_obst = len(self.scene.circles)
        ray_owner = np.repeat(np.arange(n), N_BEAMS)
        t_circ[np.arange(len(origins)), n_obst + ray_owner] = np.inf
        if t_circ.shape[1]:
            t = np.minimum(t, t_circ.min(axis=1))

        scans = np.minimum(t, self.max_range).reshape(n, N_BEAMS)
        self._scan_cache = scans
        return scans

    def _collides(self, points: np.ndarray) -> np.ndarray:
        """Robot-vs-world contact for disc centers (walls and obstacles)."""
        r = self.robot_radius
        outside = ~self.scene.inside_arena(points, margin=r)
        blocked = ~self.scene.clear_of_obstacles(points, margin=r)
        return outside | blocked

    # ------------------------------------------------------------------
    # goals

    def _sample_goal(self, others: np.ndarray) -> np.ndarray:
        """One rejection-sampled goal: obstacle-free (robot radius margin),
        inside the arena, and at least goal_separation from `others`."""
        xmin, ymin, xmax, ymax = self.scene.bbox()
        r = self.robot_radius
        for _ in range(1000):
            g = self.goal_rng.uniform([xmin + r, ymin + r], [xmax - r, ymax - r])
            if not self.scene.inside_arena(g[None, :], margin=r)[0]:
                continue
            if not self.scene.clear_of_obstacles(g[None, :], margin=r)[0]:
                continue
            if len(others) and np.any(np.linalg.norm(others - g, axis=1) < self.goal_separation):
                continue
            return g
        raise SceneError("goal sampling failed after 1000 attempts; scene too crowded")

    def spawn_goals(self) -> np.ndarray:
        """Fresh goals for every robot."""
        goals = np.zeros((self.n_agents, 2))
        for i in range(self.n_agents):
            goals[i] = self._sample_goal(goals[:i])
        return goals

    def _respawn_goal(self, i: int) -> None:
        others = np.delete(self.goals, i, axis=0)
        self.goals[i] = self._sample_goal(others)

    # ------------------------------------------------------------------
    # observations

    def _frame(self, i: int) -> np.ndarray:
        scan = self.scan_all()[i]
        delta = self.goals[i] - self.pose[i, :2]
        d = float(np.hypot(*delta))
        bearing = np.arctan2(delta[1], delta[0]) - self.pose[i, 2]
        bearing = (bearing + np.pi) % (2 * np.pi) - np.pi
        out = np.empty(self.frame_dim)
        out[:N_BEAMS] = scan / self.max_range
        out[N_BEAMS] = d / self.scene.diagonal
        out[N_BEAMS + 1] = bearing / np.pi
        return out

    def _refill_stack(self, i: int) -> None:
        self._frames[i, :, :] = self._frame(i)[None, :]

    def observation(self, i: int) -> np.ndarray:
        """Last obs_stack frames concatenated, newest last."""
        return self._frames[i].ravel()

    def _goal_distance(self, i: int) -> float:
        return float(np.linalg.norm(self.goals[i] - self.pose[i, :2]))

    # ------------------------------------------------------------------
    # episode flow

    def reset(self) -> list:
        self.pose = self._spawns.copy()
        self._scan_cache = None
        self.goals = self.spawn_goals()
        self.steps = 0
        self.event_log = []
        self._stats = {
            "collision_events": 0,
            "collided": np.zeros(self.n_agents, dtype=bool),
            "goals_reached": np.zeros(self.n_agents, dtype=np.int64),
            "first_goal_step": np.full(self.n_agents, -1, dtype=np.int64),
        }
        for i in range(self.n_agents):
            self._d_prev[i] = self._goal_distance(i)
            self._refill_stack(i)
        return [self.observation(i) for i in range(self.n_agents)]

    def step(self, actions) -> StepResult:
        if len(actions) != self.n_agents:
            raise ConfigurationError("need one action pair per robot")
        idx = np.asarray([(int(a[0]), int(a[1])) for a in actions])
        if idx.min() < 0 or idx.max() >= 5:
            raise ConfigurationError("action index out of range")
        v_ang = np.deg2rad(np.asarray(ANGULAR_DEG_S))[idx[:, 0]]
        v_lin = np.asarray(LINEAR_M_S)[idx[:, 1]]

        heading = self.pose[:, 2] + v_ang * self.dt
        heading = (heading + np.pi) % (2 * np.pi) - np.pi
        self.pose[:, 2] = heading
        self.pose[:, 0] += v_lin * self.dt * np.cos(heading)
        self.pose[:, 1] += v_lin * self.dt * np.sin(heading)
        self._scan_cache = None

        collided = self._collides(self.pose[:, :2])
        if self.n_agents > 1:
            diff = self.pose[:, None, :2] - self.pose[None, :, :2]
            dist = np.linalg.norm(diff, axis=-1)
            np.fill_diagonal(dist, np.inf)
            collided |= (dist < 2 * self.robot_radius).any(axis=1)

        self.steps += 1
        rewards = np.zeros(self.n_agents)
        events: list = [None] * self.n_agents
        st = self._stats
        for i in range(self.n_agents):
            d_now = self._goal_distance(i)
            rewards[i], events[i] = nav_reward(
                self._d_prev[i], d_now, bool(collided[i]), self.reward_alpha,
                self.goal_radius, self.step_penalty)
            if events[i] == "collision":
                st["collision_events"] += 1
                st["collided"][i] = True
                self.pose[i] = self._spawns[i]
                self._scan_cache = None
                self._respawn_goal(i)
            elif events[i] == "goal":
                st["goals_reached"][i] += 1
                if st["first_goal_step"][i] < 0:
                    st["first_goal_step"][i] = self.steps
                self._respawn_goal(i)
            if events[i] is not None:
                self.event_log.append((self.steps, i, events[i]))

        for i in range(self.n_agents):
            if events[i] is not None:
                self._d_prev[i] = self._goal_distance(i)
                self._refill_stack(i)
            else:
                self._d_prev[i] = self._goal_distance(i)
                self._frames[i] = np.roll(self._frames[i], -1, axis=0)
                self._frames[i, -1] = self._frame(i)

        done = self.steps >= self.max_steps
        terminal = False
        if self.collision_resets_episode and collided.any():
            done = True
            terminal = True
        obs = [self.observation(i) for i in range(self.n_agents)]
        # goal arrival and collision both end the robot's trajectory
        # segment: the state jumps (new goal / teleport), so bootstrapping
        # across the boundary would chase an unrelated future
        info = {"goal_distances": np.array([self._goal_distance(i)
                                            for i in range(self.n_agents)]),
                "segment_done": np.array([e is not None for e in events]),
                "terminal": terminal}
        return StepResult(obs, rewards, events, done, info)

    def episode_stats(self) -> dict:
        st = self._stats
        steps = max(self.steps, 1)
        succeeded = (st["goals_reached"] > 0) & ~st["collided"]
        return {
            "success_per_agent": succeeded,
            "collision_pct": st["collision_events"] / (self.n_agents * steps),
            "avg_landmark_distance": None,
            "steps_per_agent": np.where(st["first_goal_step"] > 0,
                                        st["first_goal_step"], self.steps),
            "episode_steps": self.steps,
            "goals_reached": st["goals_reached"].copy(),
        }
