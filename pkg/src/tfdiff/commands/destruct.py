"""destruct: corrupt a sequence to chosen diffusion steps."""

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import BaseModel, Field  # noqa: E402
from scipy.signal import stft  # noqa: E402

from tfdiff.commands.common import load_train_config  # noqa: E402
from tfdiff.diffusion.forward import NoiseDraw, destruct_to  # noqa: E402
from tfdiff.diffusion.schedule import build_schedule  # noqa: E402
from tfdiff.errors import StepOutOfRangeError  # noqa: E402
from tfdiff.signal.cseq import read_cseq, write_cseq  # noqa: E402
from tfdiff.signal.sequence import ComplexSequence, resample  # noqa: E402
from tfdiff.utils import make_rng, parse_int_list  # noqa: E402

logger = logging.getLogger(__name__)

# RNG stream id for forward-process noise
_DESTRUCT_STREAM = 3


class DestructReport(BaseModel):
    """Files written by ``destruct``."""

    input: str
    steps: list[int]
    outputs: list[str] = Field(default_factory=list)
    plots: list[str] = Field(default_factory=list)


def spectrogram_db(x: ComplexSequence, nperseg: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Row-averaged two-sided STFT power in dB, frequency axis centred.

    Returns:
        Tuple of (power in dB with shape (freq, frames), centred frequency bins)
    """
    segment = min(nperseg, x.N)
    freqs, _, z = stft(x.data, nperseg=segment, return_onesided=False, axis=-1)
    power = np.mean(np.abs(z) ** 2, axis=0)
    power = np.fft.fftshift(power, axes=0)
    return 10.0 * np.log10(power + 1e-12), np.fft.fftshift(freqs)


def plot_spectrogram(x: ComplexSequence, path: str | Path, title: str) -> Path:
    """Save a magnitude spectrogram PNG."""
    power_db, freqs = spectrogram_db(x)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    image = ax.imshow(
        power_db,
        aspect="auto",
        origin="lower",
        extent=(0, x.N, float(freqs[0]), float(freqs[-1])),
    )
    ax.set_title(title)
    ax.set_xlabel("Sample index")
    ax.set_ylabel("Normalized frequency")
    fig.colorbar(image, ax=ax, label="Power (dB)")
    target = Path(path)
    fig.savefig(target, dpi=100)
    plt.close(fig)
    return target


def destruct(
    input_path: str | Path,
    steps: str,
    out_dir: str | Path,
    seed: int = 0,
    config_path: str | Path | None = None,
    preset: str | None = None,
    plot: bool = False,
) -> DestructReport:
    """Write ``x_t`` for every requested step using the closed-form jump.

    Each step draws its noise from its own stream ``(seed, t)`` so the
    output for a step does not depend on which other steps are requested.

    Raises:
        ValueError: If ``steps`` does not parse
        StepOutOfRangeError: If a step exceeds T
        FileNotFoundError: If the input is missing
    """
    parsed, error = parse_int_list(steps, "steps")
    if error or parsed is None:
        raise ValueError(error)
    sched = build_schedule(load_train_config(config_path, preset).schedule)
    for t in parsed:
        if t > sched.T:
            raise StepOutOfRangeError(t, 0, sched.T)

    x0, _ = read_cseq(input_path)
    if x0.N != sched.N:
        logger.info(f"Resampling input from N={x0.N} to schedule length N={sched.N}")
        x0 = resample(x0, sched.N)

    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    report = DestructReport(input=str(input_path), steps=parsed)
    for t in parsed:
        eps = NoiseDraw.draw(make_rng(seed, _DESTRUCT_STREAM, t), x0.M, x0.N, seed=seed)
        # step 0 is the input itself
        x_t = x0 if t == 0 else destruct_to(x0, t, sched, eps)
        target = root / f"x_t{t:04d}.cseq"
        write_cseq(target, x_t, {"t": t, "seed": seed, "source": str(input_path)})
        report.outputs.append(str(target))
        if plot:
            image = plot_spectrogram(x_t, root / f"x_t{t:04d}.png", f"t = {t}")
            report.plots.append(str(image))
    logger.info(f"Wrote {len(parsed)} destructed sequence(s) to {root}")
    return report
