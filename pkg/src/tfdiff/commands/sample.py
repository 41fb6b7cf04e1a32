"""sample: draw conditional sequences from a checkpoint."""

import logging
from pathlib import Path

from pydantic import BaseModel, Field

from tfdiff.diffusion.reverse import sample_batch
from tfdiff.models import ConditionLabel
from tfdiff.signal.cseq import write_cseq
from tfdiff.signal.sequence import ComplexSequence
from tfdiff.trainer.checkpoint import load_predictor
from tfdiff.utils import make_rng

logger = logging.getLogger(__name__)

# RNG stream id for the reverse chain
_SAMPLE_STREAM = 4


class SampleReport(BaseModel):
    """Files written by ``sample``."""

    checkpoint: str
    condition: dict[str, str]
    count: int
    weights: str
    outputs: list[str] = Field(default_factory=list)


def run_sampling(
    ckpt_path: str | Path,
    condition: str | None,
    count: int,
    out_dir: str | Path,
    seed: int = 0,
    raw: bool = False,
) -> SampleReport:
    """Run the reverse chain ``count`` times for one condition.

    Raises:
        ValueError: If the condition string or count is invalid
        ConditionError: If the condition is unknown to the checkpoint
    """
    if count < 0:
        raise ValueError(f"Invalid count: {count}. Must be >= 0")
    label = ConditionLabel.parse(condition)
    weights = "raw" if raw else "ema"
    predictor, sched, _ = load_predictor(ckpt_path, weights=weights)
    predictor.validate_condition(label)
    report = SampleReport(
        checkpoint=str(ckpt_path), condition=label.values, count=count, weights=weights
    )
    if count == 0:
        return report

    samples = sample_batch(predictor, [label] * count, sched, make_rng(seed, _SAMPLE_STREAM))
    root = Path(out_dir)
    for i, data in enumerate(samples):
        target = write_cseq(
            root / f"sample_{i:04d}.cseq",
            ComplexSequence(data=data),
            {"condition": label.values, "seed": seed, "index": i, "checkpoint": str(ckpt_path)},
        )
        report.outputs.append(str(target))
    logger.info(f"Wrote {count} sample(s) for condition '{label}' to {root}")
    return report
