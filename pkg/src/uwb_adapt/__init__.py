"""Run-time adaptation of UWB PHY settings from ranging traces.

Energy model, link-state feature pipeline, tabular and deep Q-learning with
prioritized replay, and the static/dynamic evaluation protocols against
linear-search and fixed-setting baselines.
"""

__version__ = "0.1.0"

from .dataset import DatasetStore, RangeRecord, SynthConfig, generate_synthetic, load_dataset
from .energy import EnergyModel, FrameModelParams, range_energy
from .env import ReplayEnvironment, StepOutcome, objective_g, reward
from .linkstate import FeatureScaler, RawDiagnostics, TernaryDiscretizer, build_state
from .phy import ActionSpace, PhySetting, encode_setting, enumerate_actions

__all__ = [
    "ActionSpace",
    "DatasetStore",
    "EnergyModel",
    "FeatureScaler",
    "FrameModelParams",
    "PhySetting",
    "RangeRecord",
    "RawDiagnostics",
    "ReplayEnvironment",
    "StepOutcome",
    "SynthConfig",
    "TernaryDiscretizer",
    "build_state",
    "encode_setting",
    "enumerate_actions",
    "generate_synthetic",
    "load_dataset",
    "objective_g",
    "range_energy",
    "reward",
    "__version__",
]
