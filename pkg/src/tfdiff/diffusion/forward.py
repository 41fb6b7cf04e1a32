"""Forward destruction: stepwise and closed-form corruption, terminal sampling."""

import logging
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import circulant

from tfdiff.diffusion.schedule import DiffusionSchedule
from tfdiff.errors import InvalidSignalError
from tfdiff.signal.sequence import ComplexSequence, Spectrum, dft, idft

logger = logging.getLogger(__name__)


def complex_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """CN(0, 1) draws: real and imaginary parts each N(0, 1/2)."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) * np.sqrt(0.5)


def _as_noise_matrix(value: Any) -> np.ndarray:
    arr = np.array(value, dtype=np.complex128)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2 or not np.all(np.isfinite(arr)):
        raise InvalidSignalError("Noise must be a finite M×N complex matrix")
    return arr


class NoiseDraw(BaseModel):
    """A complex standard Gaussian noise matrix and the seed it came from."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    eps: np.ndarray
    seed: int | None = None

    def __init__(self, **values: Any) -> None:
        if "eps" in values:
            values["eps"] = _as_noise_matrix(values["eps"])
        super().__init__(**values)

    @classmethod
    def draw(
        cls, rng: np.random.Generator, m: int, n: int, seed: int | None = None
    ) -> "NoiseDraw":
        return cls(eps=complex_normal(rng, (m, n)), seed=seed)

    @classmethod
    def zeros(cls, m: int, n: int) -> "NoiseDraw":
        return cls(eps=np.zeros((m, n), dtype=np.complex128))


def _check_shapes(x: ComplexSequence, sched: DiffusionSchedule, eps: NoiseDraw) -> None:
    if x.N != sched.N:
        raise InvalidSignalError(f"Sequence length N={x.N} does not match schedule N={sched.N}")
    if eps.eps.shape != x.shape:
        raise InvalidSignalError(f"Noise shape {eps.eps.shape} does not match signal {x.shape}")


def destruct_step(
    x_prev: ComplexSequence, t: int, sched: DiffusionSchedule, eps: NoiseDraw
) -> ComplexSequence:
    """One forward step in the time domain: ``gamma_t * x_prev + beta_t * eps``.

    Raises:
        StepOutOfRangeError: If t is outside [1, T]
        InvalidSignalError: If shapes disagree with the schedule
    """
    sched.check_step(t)
    _check_shapes(x_prev, sched, eps)
    return ComplexSequence(data=sched.gamma[t] * x_prev.data + sched.beta[t] * eps.eps)


def destruct_step_spectral(
    x_prev: ComplexSequence, t: int, sched: DiffusionSchedule, eps: NoiseDraw
) -> ComplexSequence:
    """One forward step through the explicit spectral path.

    DFT, cyclic convolution with the frequency kernel G_t, inverse DFT, then
    attenuation and noise. Agrees with :func:`destruct_step` up to rounding.
    """
    sched.check_step(t)
    _check_shapes(x_prev, sched, eps)
    spectrum = dft(x_prev).data
    conv = circulant(sched.spectral_kernel(t))
    blurred = idft(Spectrum(data=spectrum @ conv.T)).data
    return ComplexSequence(
        data=np.sqrt(sched.alpha[t]) * blurred + sched.beta[t] * eps.eps
    )


def destruct_to(
    x0: ComplexSequence, t: int, sched: DiffusionSchedule, eps: NoiseDraw
) -> ComplexSequence:
    """Closed-form jump ``x_t = gamma_bar_t * x0 + sigma_bar_t * eps``.

    Raises:
        StepOutOfRangeError: If t is outside [1, T]
        InvalidSignalError: If shapes disagree with the schedule
    """
    sched.check_step(t)
    _check_shapes(x0, sched, eps)
    return ComplexSequence(data=sched.gamma_bar[t] * x0.data + sched.sigma_bar[t] * eps.eps)


def destruct_to_batch(
    x0: np.ndarray, t: np.ndarray, sched: DiffusionSchedule, eps: np.ndarray
) -> np.ndarray:
    """Vectorized :func:`destruct_to` over a batch.

    Args:
        x0: Clean signals, shape (B, M, N)
        t: Steps, shape (B,), each in [1, T]
        sched: Schedule
        eps: Noise, shape (B, M, N)

    Returns:
        Corrupted signals, shape (B, M, N)
    """
    gb = sched.gamma_bar[t][:, None, :]
    sb = sched.sigma_bar[t][:, None, :]
    return gb * x0 + sb * eps


def terminal_sample(sched: DiffusionSchedule, eps: NoiseDraw) -> ComplexSequence:
    """Sampling start ``x_T = sigma_bar_T * eps``."""
    if eps.eps.shape[1] != sched.N:
        raise InvalidSignalError(
            f"Noise length N={eps.eps.shape[1]} does not match schedule N={sched.N}"
        )
    return ComplexSequence(data=sched.sigma_bar[sched.T] * eps.eps)
