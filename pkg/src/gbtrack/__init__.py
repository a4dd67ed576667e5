"""Ground-bounce tracking for ground-penetrating-radar volumes.

Four trackers (global maximum, constrained maximum, Kalman filter, particle
filter with an adaptive template), a synthetic volume simulator with ground
truth, and an evaluation harness (bias/variance, prescreener ROC/AUC).
"""
__version__ = "0.1.0"

from .baseline import ConstrainedMaxConfig, track_constrained_max, track_global_max
from .core import (
    AScanView,
    CellIndex,
    FormatError,
    GprVolume,
    GroundBounceSurface,
    load_truth,
    load_volume,
    save_truth,
    save_volume,
)
from .evaluation import (
    Alarm,
    PrescreenConfig,
    RocCurve,
    TrackError,
    bias_variance,
    prescreen,
    roc,
)
from .kalman import KfConfig, KfState, track_kalman
from .pf import GbTemplate, ParticleSet, PfConfig, run_pf, track_pf
from .simulator import Interference, Mine, SimConfig, SnowLayer, simulate

__all__ = [
    "AScanView", "Alarm", "CellIndex", "ConstrainedMaxConfig", "FormatError", "GbTemplate",
    "GprVolume", "GroundBounceSurface", "Interference", "KfConfig", "KfState", "Mine",
    "ParticleSet", "PfConfig", "PrescreenConfig", "RocCurve", "SimConfig", "SnowLayer",
    "TrackError", "bias_variance", "load_truth", "load_volume", "prescreen", "roc", "run_pf",
    "save_truth", "save_volume", "simulate", "track_constrained_max", "track_global_max",
    "track_kalman", "track_pf",
]
