"""Helpers shared by the subcommands."""

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel

from tfdiff.config import ScheduleConfig, TrainConfig

logger = logging.getLogger(__name__)


def load_train_config(
    config_path: str | Path | None,
    preset: str | None = None,
    seed: int | None = None,
) -> TrainConfig:
    """Read a JSON training config and apply a schedule preset and seed.

    Fields set explicitly in the file win over the preset.

    Raises:
        FileNotFoundError: If ``config_path`` does not exist
        pydantic.ValidationError: If the file or the combination is invalid
        ValueError: If the preset name is unknown
    """
    cfg = TrainConfig.from_file(config_path)
    if preset is not None:
        overrides = cfg.schedule.model_dump(exclude_unset=True)
        schedule = ScheduleConfig.preset(preset, **overrides)
        cfg = TrainConfig.model_validate({**cfg.model_dump(exclude_unset=True), "schedule": schedule})
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    logger.debug(f"Training config: {cfg.model_dump_json()}")
    return cfg


def write_report(out_dir: str | Path | None, name: str, report: BaseModel | dict[str, Any]) -> Path | None:
    """Write a JSON report into ``out_dir`` when one is given."""
    if out_dir is None:
        return None
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(report, BaseModel):
        text = report.model_dump_json(indent=2)
    else:
        text = json.dumps(report, indent=2)
    path.write_text(text, encoding="utf-8")
    return path
