"""Multi-agent value-based RL with a centralized joint state-value estimator.

Decentralized dueling Q-learners share nothing at execution time; during
training, a central network learns a joint state value from the agents'
own state-value streams and feeds it back into their TD targets. Ships
with independent-learner and additive-decomposition baselines, two
multi-agent environments, and a seeded experiment harness.
"""

from .central import CentralEstimator
from .config import RunConfig, load_config, parse_config
from .dueling import ActionSpec, DuelingNetwork, aggregate_q, select_action
from .errors import ConfigurationError, SceneError, TrainingFault
from .metrics import EpochMetrics
from .replay import AgentReplay, NStepAccumulator, PrioritizedBuffer, SumTree, Transition
from .trainer import GdqAgent, GdqTrainer, TrainSchedule, agent_td_target
from .baselines import (IqlAgent, IqlTrainer, VdnTrainer, igm_check,
                        igm_check_networks, vdn_joint_q)

__version__ = "0.1.0"

__all__ = [
    "ActionSpec", "AgentReplay", "CentralEstimator", "ConfigurationError",
    "DuelingNetwork", "EpochMetrics", "GdqAgent", "GdqTrainer", "IqlAgent",
    "IqlTrainer", "NStepAccumulator", "PrioritizedBuffer", "RunConfig",
    "SceneError", "SumTree", "TrainSchedule", "TrainingFault", "Transition",
    "VdnTrainer", "agent_td_target", "aggregate_q", "igm_check",
    "igm_check_networks", "load_config", "parse_config", "select_action",
    "vdn_joint_q",
]
