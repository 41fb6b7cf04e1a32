"""train: fit an HDT on a dataset directory."""

import logging
from pathlib import Path

from tfdiff.commands.common import load_train_config
from tfdiff.datagen.io import load_dataset
from tfdiff.trainer.loop import TrainResult, train

logger = logging.getLogger(__name__)


def run_training(
    data_path: str | Path,
    out_dir: str | Path,
    config_path: str | Path | None = None,
    preset: str | None = None,
    seed: int | None = None,
    max_steps: int | None = None,
    resume: str | Path | None = None,
) -> TrainResult:
    """Load the dataset index and run (or resume) training.

    Raises:
        DatasetError: If the index is empty or unreadable
        DivergenceError: If the loss runs away
    """
    cfg = load_train_config(config_path, preset, seed)
    if max_steps is not None:
        cfg = cfg.model_copy(update={"max_steps": max_steps})
    dataset = load_dataset(data_path, length=cfg.schedule.N)
    logger.info(f"Training on {len(dataset)} sequences for {cfg.max_steps} steps")
    return train(cfg, dataset, out_dir, resume=resume)
