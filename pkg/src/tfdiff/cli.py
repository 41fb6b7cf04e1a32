"""tfdiff command-line entry point."""

import logging
import sys
from pathlib import Path
from typing import Any

import click
from pydantic import BaseModel, ValidationError

from tfdiff.commands import destruct, evaluate, gen_data, sample, schedule_verify, train
from tfdiff.commands.common import write_report
from tfdiff.config import RuntimeSettings, format_validation_error
from tfdiff.constants import ExitCode
from tfdiff.errors import DivergenceError, NonFiniteLossError, TfdiffError

logger = logging.getLogger(__name__)

_PRESETS = click.Choice(["published", "desk"])


class CliState(BaseModel):
    """Global options shared with every subcommand."""

    settings: RuntimeSettings
    config: Path | None = None
    out: Path
    seed_given: bool = False


def _handle_command_error(command: str, error: Exception) -> int:
    """Centralized error handler for subcommands.

    Logs the error with traceback and maps it to the process exit code.

    Args:
        command: Name of the subcommand that failed
        error: The exception that was raised

    Returns:
        Exit code
    """
    logger.error(f"Error executing {command}: {error}", exc_info=True)
    if isinstance(error, DivergenceError | NonFiniteLossError):
        code = ExitCode.DIVERGED
        message = str(error)
    elif isinstance(error, ValidationError):
        code = ExitCode.USAGE
        message = f"Invalid configuration: {format_validation_error(error)}"
    elif isinstance(error, FileNotFoundError):
        code = ExitCode.USAGE
        message = f"File not found: {error.filename or error}"
    else:
        code = ExitCode.USAGE
        message = str(error)
    click.echo(f"Error: {message}", err=True)
    return code


def _run(command: str, fn: Any, *args: Any, **kwargs: Any) -> Any:
    """Call a command implementation, exiting with the mapped code on failure."""
    try:
        return fn(*args, **kwargs)
    except (TfdiffError, ValueError, KeyError, OSError) as e:
        sys.exit(_handle_command_error(command, e))


def _emit(report: BaseModel) -> None:
    click.echo(report.model_dump_json(indent=2))


@click.group()
@click.option("--seed", type=click.IntRange(min=0), help="Random seed (overrides TFDIFF_SEED env var)")
@click.option(
    "--config",
    "config_path",
    type=click.Path(path_type=Path),
    help="JSON training config; missing fields take their defaults",
)
@click.option(
    "--out",
    type=click.Path(file_okay=False, path_type=Path),
    default=Path("tfdiff-out"),
    show_default=True,
    help="Output directory",
)
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging")
@click.pass_context
def main(
    ctx: click.Context, seed: int | None, config_path: Path | None, out: Path, verbose: bool
) -> None:
    """tfdiff - time-frequency diffusion for complex RF sequences.

    Configuration can be provided via environment variables (LOG_LEVEL,
    TFDIFF_THREADS, TFDIFF_SEED) or the global options.

    Examples:
      tfdiff schedule-verify --preset desk --max-residual 1e-3

      tfdiff --out data gen-data --kind multipath_csi

      tfdiff --out run --seed 1 train --data data/index.json
    """
    settings = RuntimeSettings.from_env()
    settings.apply_cli_overrides(seed=seed, verbose=verbose)
    logging.basicConfig(
        level=settings.log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    logging.getLogger().setLevel(settings.log_level)
    ctx.obj = CliState(settings=settings, config=config_path, out=out, seed_given=seed is not None)


@main.command("schedule-verify")
@click.option("--preset", type=_PRESETS, help="Schedule preset applied under the config file")
@click.option("--max-residual", type=float, help="Fail if max gamma_bar[T] exceeds this value")
@click.pass_obj
def schedule_verify_cmd(state: CliState, preset: str | None, max_residual: float | None) -> None:
    """Build the schedule and check its convergence conditions."""
    report, table = _run(
        "schedule-verify",
        schedule_verify.schedule_verify,
        config_path=state.config,
        preset=preset,
        max_residual=max_residual,
        out_dir=state.out,
    )
    click.echo(table)
    _emit(report)
    if not report.passed:
        click.echo(f"Verification failed: {'; '.join(report.reasons)}", err=True)
        sys.exit(ExitCode.VERIFICATION_FAILED)


@main.command("destruct")
@click.option("--input", "input_path", required=True, type=click.Path(path_type=Path))
@click.option("--steps", required=True, help='Comma-separated steps, e.g. "0,10,300"')
@click.option("--preset", type=_PRESETS, help="Schedule preset applied under the config file")
@click.option("--plot", is_flag=True, help="Also write magnitude-spectrogram PNGs")
@click.pass_obj
def destruct_cmd(
    state: CliState, input_path: Path, steps: str, preset: str | None, plot: bool
) -> None:
    """Write x_t for each requested step."""
    report = _run(
        "destruct",
        destruct.destruct,
        input_path,
        steps,
        state.out,
        seed=state.settings.seed,
        config_path=state.config,
        preset=preset,
        plot=plot,
    )
    _emit(report)


@main.command("train")
@click.option("--data", "data_path", required=True, type=click.Path(path_type=Path))
@click.option("--resume", type=click.Path(path_type=Path), help="Checkpoint to resume from")
@click.option("--max-steps", type=click.IntRange(min=0), help="Override the configured step count")
@click.option("--preset", type=_PRESETS, help="Schedule preset applied under the config file")
@click.pass_obj
def train_cmd(
    state: CliState,
    data_path: Path,
    resume: Path | None,
    max_steps: int | None,
    preset: str | None,
) -> None:
    """Train an HDT; writes checkpoints, metrics and the run manifest."""
    result = _run(
        "train",
        train.run_training,
        data_path,
        state.out,
        config_path=state.config,
        preset=preset,
        seed=state.settings.seed if state.seed_given else None,
        max_steps=max_steps,
        resume=resume,
    )
    _emit(result)


@main.command("sample")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(path_type=Path))
@click.option("--condition", default="", help='Condition label, e.g. "class=1"')
@click.option("--count", type=click.IntRange(min=0), default=1, show_default=True)
@click.option("--raw", is_flag=True, help="Use raw instead of EMA weights")
@click.pass_obj
def sample_cmd(state: CliState, ckpt_path: Path, condition: str, count: int, raw: bool) -> None:
    """Generate sequences for one condition."""
    report = _run(
        "sample",
        sample.run_sampling,
        ckpt_path,
        condition,
        count,
        state.out,
        seed=state.settings.seed,
        raw=raw,
    )
    _emit(report)


@main.command("eval")
@click.option("--ckpt", "ckpt_path", type=click.Path(path_type=Path))
@click.option("--data", "data_path", type=click.Path(path_type=Path))
@click.option("--estimate", "estimates", multiple=True, help="Estimate CSEQ1 file (repeatable)")
@click.option("--truth", "truths", multiple=True, help="Truth CSEQ1 file (repeatable)")
@click.option("--samples", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--alpha", type=click.FloatRange(0, 1, min_open=True), default=0.01, show_default=True)
@click.option("--raw", is_flag=True, help="Use raw instead of EMA weights")
@click.pass_obj
def eval_cmd(
    state: CliState,
    ckpt_path: Path | None,
    data_path: Path | None,
    estimates: tuple[str, ...],
    truths: tuple[str, ...],
    samples: int,
    alpha: float,
    raw: bool,
) -> None:
    """Score samples (--ckpt/--data) and paired reconstructions (--estimate/--truth)."""
    report = _run(
        "eval",
        evaluate.run_evaluation,
        ckpt_path=ckpt_path,
        data_path=data_path,
        estimates=estimates,
        truths=truths,
        samples_per_condition=samples,
        alpha=alpha,
        seed=state.settings.seed,
        raw=raw,
        threads=state.settings.threads,
    )
    write_report(state.out, "eval.json", report)
    _emit(report)


@main.command("gen-data")
@click.option("--spec", "spec_path", type=click.Path(path_type=Path), help="SyntheticSpec JSON")
@click.option("--kind", type=click.Choice(["multipath_csi", "fmcw_chirp"]))
@click.pass_obj
def gen_data_cmd(state: CliState, spec_path: Path | None, kind: str | None) -> None:
    """Generate a synthetic labeled dataset."""
    report = _run(
        "gen-data",
        gen_data.gen_data,
        state.out,
        spec_path=spec_path,
        kind=kind,
        seed=state.settings.seed if state.seed_given else None,
        threads=state.settings.threads,
    )
    _emit(report)


if __name__ == "__main__":
    main()
