"""Noise-robust classification with an attention-addressed prototype memory.

Attention reads over learned prototypes refine noisy labels during training;
an entropic optimal-transport assignment keeps the prototypes spread over the
latent space, and momentum updates maintain a denoised soft label per
prototype. Plain cross-entropy, soft bootstrapping, and early-learning
regularization are included as baseline methods.
"""

from .datagen import (
    NoiseSpec,
    NoisyDataset,
    batches,
    gen_blobs,
    gen_rings,
    inject_agent,
    inject_symmetric,
    load_csv,
    save_csv,
    split_dataset,
)
from .errors import (
    ArnetError,
    ChecksumError,
    ConfigError,
    DataError,
    NumericError,
    ParseError,
    ShapeError,
    VersionError,
)
from .estimator import ArNetClassifier
from .evaluation import Metrics, aggregate_runs, evaluate, purity, slot_sweep
from .memory import Memory, cache_push, read, renormalize_prototypes, sinkhorn_targets, write_labels
from .model import ModelDims, ModelParams, forward, init_params
from .trainer import TrainConfig, TrainLog, initial_state, train

__version__ = "0.1.0"

__all__ = [
    "ArNetClassifier",
    "ArnetError",
    "ChecksumError",
    "ConfigError",
    "DataError",
    "Memory",
    "Metrics",
    "ModelDims",
    "ModelParams",
    "NoiseSpec",
    "NoisyDataset",
    "NumericError",
    "ParseError",
    "ShapeError",
    "TrainConfig",
    "TrainLog",
    "VersionError",
    "aggregate_runs",
    "batches",
    "cache_push",
    "evaluate",
    "forward",
    "gen_blobs",
    "gen_rings",
    "init_params",
    "initial_state",
    "inject_agent",
    "inject_symmetric",
    "load_csv",
    "purity",
    "read",
    "renormalize_prototypes",
    "save_csv",
    "sinkhorn_targets",
    "slot_sweep",
    "split_dataset",
    "train",
    "write_labels",
]
