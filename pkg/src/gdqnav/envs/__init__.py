"""Multi-agent environments: a particle cooperative-navigation world and a
2D multi-robot lidar navigation world, both deterministic under a seed."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class StepResult:
    """What one environment step hands back to the trainer."""

    obs: list
    rewards: np.ndarray
    events: list
    done: bool
    info: dict = field(default_factory=dict)


from .particle import ParticleWorld  # noqa: E402
from .nav import NavWorld, lidar_scan, nav_reward  # noqa: E402
from .scenes import Scene, load_scene, parse_scene, scene_to_text, builtin_scene_path  # noqa: E402

__all__ = [
    "StepResult", "ParticleWorld", "NavWorld", "lidar_scan", "nav_reward",
    "Scene", "load_scene", "parse_scene", "scene_to_text", "builtin_scene_path",
]
