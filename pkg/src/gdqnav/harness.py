"""Experiment harness: build, train, checkpoint, evaluate, aggregate.

A run is fully determined by (config, seed): the trainer, the environment
and every sampling stream derive from them, so rerunning writes
byte-identical metric files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .baselines import IqlTrainer, VdnTrainer
from .config import RunConfig
from .dueling import DuelingNetwork, select_action
from .envs import NavWorld, ParticleWorld, builtin_scene_path, load_scene
from .errors import ConfigurationError
from .metrics import MetricsWriter, aggregate_metrics
from .trainer import GdqTrainer, TrainSchedule
from . import weights_io

CHECKPOINT_META = "meta.json"


def resolve_scene_path(name: str) -> str:
    if name in ("train", "test"):
        return builtin_scene_path(name)
    return str(name)


def build_env(config: RunConfig, seed: int):
    if config.env == "particle":
        if config.n_agents not in (2, 3, 4, 8):
            raise ConfigurationError("particle world supports 2-8 agents")
        return ParticleWorld(n_agents=config.n_agents, seed=seed,
                             max_steps=config.max_episode_steps)
    scene = load_scene(resolve_scene_path(config.scene))
    return NavWorld(scene, config.n_agents, seed=seed,
                    max_steps=config.max_episode_steps,
                    obs_stack=config.obs_stack,
                    max_range=config.lidar_max_range,
                    reward_alpha=config.reward_alpha,
                    goal_radius=config.goal_radius,
                    step_penalty=config.step_penalty,
                    collision_resets_episode=config.collision_resets_episode)


def build_schedule(config: RunConfig) -> TrainSchedule:
    return TrainSchedule(
        gamma=config.gamma, batch_size=config.batch_size,
        train_every=config.train_every, epsilon_start=config.epsilon_start,
        epsilon_end=config.epsilon_end,
        epsilon_decay_steps=config.epsilon_decay_steps,
        central_sync_every=config.central_sync_every,
        target_sync_every=config.target_sync_every,
        max_epochs=config.max_epochs, per_beta_start=config.per_beta_start,
        per_beta_end=config.per_beta_end, per_beta_steps=config.per_beta_steps)


def build_trainer(config: RunConfig, env, seed: int):
    schedule = build_schedule(config)
    net_kwargs = {"trunk_hidden": config.trunk_hidden,
                  "stream_hidden": config.stream_hidden}
    common = dict(lr=config.lr, replay_capacity=config.replay_capacity,
                  n_step=config.n_step, per_alpha=config.per_alpha,
                  priority_epsilon=config.priority_epsilon,
                  net_kwargs=net_kwargs)
    if config.algorithm == "gdq":
        return GdqTrainer(env, schedule, seed, central_hidden=config.central_hidden,
                          team_reward=config.team_reward,
                          update_order=config.update_order,
                          raw_global_value_aggregation=config.raw_global_value_aggregation,
                          central_per=config.central_per, **common)
    if config.algorithm == "iql":
        return IqlTrainer(env, schedule, seed, **common)
    return VdnTrainer(env, schedule, seed, team_reward=config.vdn_team_reward, **common)


def save_checkpoints(trainer, config: RunConfig, out_dir: Path) -> None:
    ckpt = out_dir / "checkpoints"
    ckpt.mkdir(parents=True, exist_ok=True)
    nets = trainer.nets()
    for i, net in enumerate(nets):
        weights_io.write_weights(ckpt / f"agent_{i}.weights", net.weight_arrays())
    if isinstance(trainer, GdqTrainer):
        central = trainer.central.online
        arrays = []
        for layer in central.layers:
            arrays.extend((layer.w, layer.b))
        weights_io.write_weights(ckpt / "central.weights", arrays)
    meta = {
        "format": 1,
        "config_hash": config.config_hash(),
        "seed": trainer.seed,
        "obs_dim": trainer.env.obs_dim,
        "branch_sizes": list(trainer.env.branch_sizes),
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(config).items()},
    }
    with open(ckpt / CHECKPOINT_META, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_checkpoint_nets(ckpt_dir: Path):
    """Rebuild the policy networks saved in a checkpoint directory."""
    ckpt_dir = Path(ckpt_dir)
    meta_path = ckpt_dir / CHECKPOINT_META
    if not meta_path.is_file():
        raise ConfigurationError(f"{ckpt_dir}: no {CHECKPOINT_META} (not a checkpoint dir)")
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg = dict(meta["config"])
    for k in ("trunk_hidden", "central_hidden"):
        cfg[k] = tuple(cfg[k])
    config = RunConfig(**cfg)
    nets = []
    for i in range(config.n_agents):
        net = DuelingNetwork(meta["obs_dim"], meta["branch_sizes"],
                             trunk_hidden=config.trunk_hidden,
                             stream_hidden=config.stream_hidden)
        weights_io.load_into(ckpt_dir / f"agent_{i}.weights", net.weight_arrays())
        nets.append(net)
    return nets, config, meta


def run_experiment(config: RunConfig, out_dir) -> Path:
    """Train one seeded run; returns the metrics CSV path.

    Metric rows stream to disk per epoch so a training fault still leaves
    partial output behind.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    env = build_env(config, config.seed)
    trainer = build_trainer(config, env, config.seed)

    (out_dir / "config.resolved").write_text(config.to_text(), encoding="utf-8")
    metrics_path = out_dir / "metrics.csv"
    writer = MetricsWriter(metrics_path, config.config_hash(), config.seed,
                           extra={"algorithm": config.algorithm, "env": config.env,
                                  "n_agents": config.n_agents,
                                  "smoothing_window": config.smoothing_window})
    timing = open(out_dir / "timing.csv", "w", encoding="utf-8", newline="")
    timing_csv = csv.writer(timing)
    timing_csv.writerow(["epoch", "wall_time_s"])
    try:
        def on_epoch(m):
            writer.write(m)
            timing_csv.writerow([m.epoch, f"{m.wall_time:.6f}"])
            timing.flush()
        trainer.train(on_epoch=on_epoch)
    finally:
        writer.close()
        timing.close()
    save_checkpoints(trainer, config, out_dir)
    return metrics_path


def greedy_actions(nets, obs_list, rng):
    return [select_action(net, obs, 0.0, rng) for net, obs in zip(nets, obs_list)]


def evaluate(checkpoint_dir, scene_path, episodes: int, eval_seed: int = 1000,
             out_dir=None) -> dict:
    """Greedy rollouts of a trained policy on a (possibly unseen) scene.

    The environment's goal stream is seeded by ``eval_seed`` alone, so two
    checkpoint directories evaluated with the same seed face the same goal
    sequence. Writes per-episode and summary CSVs plus trajectory logs;
    returns the summary dict.
    """
    nets, config, meta = load_checkpoint_nets(Path(checkpoint_dir))
    if config.env != "nav":
        raise ConfigurationError("evaluation on a scene requires a navigation checkpoint")
    scene = load_scene(resolve_scene_path(scene_path))
    if len(scene.spawns) < config.n_agents:
        raise ConfigurationError(
            f"scene has {len(scene.spawns)} spawns, checkpoint needs {config.n_agents}")
    env = NavWorld(scene, config.n_agents, seed=eval_seed,
                   max_steps=config.max_episode_steps,
                   obs_stack=config.obs_stack, max_range=config.lidar_max_range,
                   reward_alpha=config.reward_alpha, goal_radius=config.goal_radius,
                   step_penalty=config.step_penalty,
                   collision_resets_episode=config.collision_resets_episode)
    rng = np.random.default_rng(eval_seed)

    if out_dir is None:
        out_dir = Path(checkpoint_dir) / f"eval_{Path(str(scene_path)).stem}"
    out_dir = Path(out_dir)
    (out_dir / "trajectories").mkdir(parents=True, exist_ok=True)

    rows = []
    for ep in range(episodes):
        obs = env.reset()
        ep_reward = np.zeros(env.n_agents)
        traj_path = out_dir / "trajectories" / f"episode_{ep:03d}.csv"
        with open(traj_path, "w", encoding="utf-8", newline="") as fh:
            traj = csv.writer(fh)
            header = ["step"]
            for i in range(env.n_agents):
                header += [f"x_{i}", f"y_{i}", f"heading_{i}", f"ang_idx_{i}",
                           f"lin_idx_{i}", f"reward_{i}", f"event_{i}"]
            traj.writerow(header)
            done = False
            while not done:
                actions = greedy_actions(nets, obs, rng)
                result = env.step(actions)
                row = [env.steps]
                for i in range(env.n_agents):
                    row += [repr(float(env.pose[i, 0])), repr(float(env.pose[i, 1])),
                            repr(float(env.pose[i, 2])), int(actions[i][0]),
                            int(actions[i][1]), repr(float(result.rewards[i])),
                            result.events[i] or ""]
                traj.writerow(row)
                ep_reward += result.rewards
                obs = result.obs
                done = result.done
        stats = env.episode_stats()
        rows.append({
            "episode": ep,
            "avg_reward": float(ep_reward.mean()),
            "avg_steps": float(np.mean(stats["steps_per_agent"])),
            "collision_pct": 100.0 * stats["collision_pct"],
            "success_rate": float(np.mean(stats["success_per_agent"])),
            "goals_reached": float(np.mean(stats["goals_reached"])),
        })

    keys = ("avg_reward", "avg_steps", "collision_pct", "success_rate", "goals_reached")
    with open(out_dir / "eval_episodes.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("episode",) + keys)
        for r in rows:
            w.writerow([r["episode"]] + [repr(r[k]) for k in keys])
    summary = {}
    for k in keys:
        vals = np.array([r[k] for r in rows])
        summary[k] = (float(vals.mean()), float(vals.std()))
    with open(out_dir / "eval_summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "mean", "std"])
        for k in keys:
            w.writerow([k, repr(summary[k][0]), repr(summary[k][1])])
    summary["episodes"] = episodes
    summary["config_hash"] = meta["config_hash"]
    summary["out_dir"] = str(out_dir)
    return summary


def aggregate_runs(in_dir, out_file, window: int | None = None) -> None:
    """Aggregate every metrics.csv under ``in_dir`` into one summary file."""
    in_dir = Path(in_dir)
    paths = sorted(in_dir.rglob("metrics.csv"))
    if not paths:
        paths = sorted(p for p in in_dir.glob("*.csv") if p.name != Path(str(out_file)).name)
    if not paths:
        raise ConfigurationError(f"no metric files found under {in_dir}")
    aggregate_metrics(paths, out_file, window)
