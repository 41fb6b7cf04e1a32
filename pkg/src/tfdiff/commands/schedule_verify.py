"""schedule-verify: build a schedule and check its convergence conditions."""

import logging
from pathlib import Path

import numpy as np

from tfdiff.commands.common import load_train_config, write_report
from tfdiff.constants import Files
from tfdiff.diffusion.schedule import (
    DiffusionSchedule,
    build_schedule,
    convergence_bound,
    dump_schedule,
    verify_convergence,
)
from tfdiff.models import ConvergenceReport

logger = logging.getLogger(__name__)

REPORT_NAME = "convergence.json"


def summary_steps(T: int, rows: int = 10) -> list[int]:
    """Roughly ``rows`` evenly spaced steps including 1 and T."""
    return sorted({int(t) for t in np.linspace(1, T, min(rows, T))})


def summary_table(sched: DiffusionSchedule, rows: int = 10) -> str:
    """Per-step text table of the schedule coefficients."""
    header = (
        f"{'t':>5} {'beta':>10} {'blur_s':>10} {'gamma_min':>10} {'gamma_max':>10} "
        f"{'gbar_max':>10} {'sbar_min':>10} {'sbar_max':>10}"
    )
    lines = [header, "-" * len(header)]
    for t in summary_steps(sched.T, rows):
        lines.append(
            f"{t:>5} {sched.beta[t]:>10.3e} {sched.s[t]:>10.3e} {sched.gamma[t].min():>10.3e} "
            f"{sched.gamma[t].max():>10.3e} {sched.gamma_bar[t].max():>10.3e} "
            f"{sched.sigma_bar[t].min():>10.3e} {sched.sigma_bar[t].max():>10.3e}"
        )
    bound = convergence_bound(sched)
    finite = bound[np.isfinite(bound)]
    bound_text = f"{finite.min():.4e}" if finite.size else "inf"
    lines.append("")
    lines.append(f"gamma_bar[T] max = {sched.gamma_bar[sched.T].max():.4e}")
    lines.append(f"sigma_bar[T] bound min = {bound_text}")
    return "\n".join(lines)


def schedule_verify(
    config_path: str | Path | None = None,
    preset: str | None = None,
    max_residual: float | None = None,
    out_dir: str | Path | None = None,
) -> tuple[ConvergenceReport, str]:
    """Build the configured schedule without validation and verify it.

    Args:
        config_path: JSON training config (its ``schedule`` section is used)
        preset: Optional schedule preset (``published`` or ``desk``)
        max_residual: Optional tolerance on ``max gamma_bar[T]``
        out_dir: When given, receives the schedule dump and the report

    Returns:
        Tuple of (report, printable summary table)
    """
    cfg = load_train_config(config_path, preset)
    sched = build_schedule(cfg.schedule, validate=False)
    report = verify_convergence(sched, max_residual=max_residual)
    if out_dir is not None:
        dump_schedule(sched, Path(out_dir) / Files.SCHEDULE_DUMP)
        write_report(out_dir, REPORT_NAME, report)
        logger.info(f"Wrote schedule audit files to {out_dir}")
    return report, summary_table(sched)
