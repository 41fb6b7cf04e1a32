"""eval: score a checkpoint on held-out data and/or paired files."""

import logging
from pathlib import Path

from tfdiff.datagen.io import load_dataset
from tfdiff.models import EvaluationReport
from tfdiff.trainer.checkpoint import load_predictor
from tfdiff.trainer.evaluate import evaluate, score_pairs

logger = logging.getLogger(__name__)


def run_evaluation(
    ckpt_path: str | Path | None = None,
    data_path: str | Path | None = None,
    estimates: tuple[str, ...] = (),
    truths: tuple[str, ...] = (),
    samples_per_condition: int = 4,
    alpha: float = 0.01,
    seed: int = 0,
    raw: bool = False,
    threads: int | None = None,
) -> EvaluationReport:
    """Evaluate sampling quality, paired reconstructions, or both.

    Raises:
        ValueError: If the inputs are incomplete or estimate/truth counts differ
        InvalidSignalError: If a pair has mismatched shapes
    """
    if (ckpt_path is None) != (data_path is None):
        raise ValueError("--ckpt and --data must be given together")
    if len(estimates) != len(truths):
        raise ValueError(
            f"Got {len(estimates)} --estimate file(s) but {len(truths)} --truth file(s)"
        )
    if ckpt_path is None and not estimates:
        raise ValueError("Nothing to evaluate: pass --ckpt/--data or --estimate/--truth pairs")

    weights = "raw" if raw else "ema"
    if ckpt_path is not None and data_path is not None:
        predictor, sched, _ = load_predictor(ckpt_path, weights=weights)
        eval_set = load_dataset(data_path, length=sched.N)
        report = evaluate(
            predictor,
            eval_set,
            sched,
            samples_per_condition=samples_per_condition,
            seed=seed,
            alpha=alpha,
            threads=threads,
        )
        report.checkpoint = str(ckpt_path)
        report.weights = weights
    else:
        report = EvaluationReport(weights=weights)
    if estimates:
        report.pairs = score_pairs(list(zip(estimates, truths, strict=True)))
        logger.info(f"Scored {len(report.pairs)} estimate/truth pair(s)")
    return report
