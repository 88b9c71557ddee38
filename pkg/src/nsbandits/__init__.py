"""Simulation library for non-stationary multi-armed bandits with significant-change detection."""
from .env import (
    GAP_MODE,
    MEAN_MODE,
    EnvError,
    EnvironmentSpec,
    MeanFunction,
    NoiseModel,
    NoiseTable,
    best_arm_at,
    gap_at,
    mean_at,
    sample_reward,
)
from .prudent import PrudentParams
from .selective import SelectiveParams
from .trace import DetectionEvent, RunTrace

__all__ = [
    "GAP_MODE",
    "MEAN_MODE",
    "DetectionEvent",
    "EnvError",
    "EnvironmentSpec",
    "MeanFunction",
    "NoiseModel",
    "NoiseTable",
    "PrudentParams",
    "RunTrace",
    "SelectiveParams",
    "best_arm_at",
    "gap_at",
    "mean_at",
    "sample_reward",
]
__version__ = "0.1.0"
