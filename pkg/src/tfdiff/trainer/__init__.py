"""Training loop, checkpoints and evaluation."""

from tfdiff.trainer.checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_predictor,
    oracle_checkpoint,
    save_checkpoint,
)
from tfdiff.trainer.evaluate import evaluate, score_pairs
from tfdiff.trainer.loop import TrainResult, Trainer, train

__all__ = [
    "Checkpoint",
    "TrainResult",
    "Trainer",
    "evaluate",
    "load_checkpoint",
    "load_predictor",
    "oracle_checkpoint",
    "save_checkpoint",
    "score_pairs",
    "train",
]
