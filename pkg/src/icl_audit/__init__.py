"""Text-only membership inference audits for in-context-learning prompts."""

__version__ = "0.1.0"

from .attacks import (  # noqa: E402
    AttackOutcome,
    BrainwashConfig,
    RepeatConfig,
    brainwash_attack,
    gap_attack,
    inquiry_attack,
    repeat_attack,
)
from .calibration import ThresholdMembershipClassifier, calibrate_threshold  # noqa: E402
from .config import ExperimentConfig, expand_sweep, load_config  # noqa: E402
from .data import Dataset, LabeledSample, load_dataset, split_dataset  # noqa: E402
from .harness import ExperimentResult, run_experiment, run_trial, write_artifacts  # noqa: E402
from .hybrid import HybridMembershipClassifier, HybridModel, train_hybrid  # noqa: E402
from .metrics import compute_advantage, compute_auc, compute_roc, tpr_at_fpr  # noqa: E402
from .simulator import SimulatedProvider, SimulatedTargetParams  # noqa: E402

__all__ = [
    "AttackOutcome", "BrainwashConfig", "RepeatConfig", "brainwash_attack", "gap_attack",
    "inquiry_attack", "repeat_attack", "ThresholdMembershipClassifier", "calibrate_threshold",
    "ExperimentConfig", "expand_sweep", "load_config", "Dataset", "LabeledSample",
    "load_dataset", "split_dataset", "ExperimentResult", "run_experiment", "run_trial",
    "write_artifacts", "HybridMembershipClassifier", "HybridModel", "train_hybrid",
    "compute_advantage", "compute_auc", "compute_roc", "tpr_at_fpr", "SimulatedProvider",
    "SimulatedTargetParams",
]
