"""Decoder-only causal transformer: model, training loop, sampling, checkpoints."""

from .checkpoint import (
    Checkpoint,
    CheckpointError,
    apply_checkpoint,
    checkpoint_from,
    config_fingerprint,
    load_checkpoint,
    save_checkpoint,
)
from .model import CausalTransformer, ModelError, TransformerConfig, build_model
from .sampling import sample
from .train import NonFiniteLossError, TrainConfig, sequence_loss, train

__all__ = [
    "CausalTransformer",
    "Checkpoint",
    "CheckpointError",
    "ModelError",
    "NonFiniteLossError",
    "TrainConfig",
    "TransformerConfig",
    "apply_checkpoint",
    "build_model",
    "checkpoint_from",
    "config_fingerprint",
    "load_checkpoint",
    "sample",
    "save_checkpoint",
    "sequence_loss",
    "train",
]
