"""Complex sequence container, unitary DFT and preprocessing."""

import logging
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

from tfdiff.errors import InvalidSignalError

logger = logging.getLogger(__name__)


def _as_complex_matrix(value: Any) -> np.ndarray:
    """Copy ``value`` into a finite, read-only complex128 M×N matrix."""
    arr = np.array(value, dtype=np.complex128, copy=True)
    if arr.ndim == 1:
        arr = arr[np.newaxis, :]
    if arr.ndim != 2:
        raise InvalidSignalError(f"Expected an M×N matrix, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidSignalError(f"Both dimensions must be >= 1, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidSignalError("Sequence contains non-finite entries")
    arr.setflags(write=False)
    return arr


class _ComplexMatrix(BaseModel):
    """Shared M×N complex matrix behaviour."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: np.ndarray

    def __init__(self, **values: Any) -> None:
        # Must raise InvalidSignalError itself, outside pydantic validation. 1-D input becomes one row.
        if "data" in values:
            values["data"] = _as_complex_matrix(values["data"])
        super().__init__(**values)

    @property
    def M(self) -> int:
        """Spatial dimension."""
        return int(self.data.shape[0])

    @property
    def N(self) -> int:
        """Temporal length."""
        return int(self.data.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M, self.N)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, type(self)):
            return NotImplemented
        return bool(np.array_equal(self.data, other.data))

    __hash__ = None  # type: ignore[assignment]


class ComplexSequence(_ComplexMatrix):
    """An M×N complex signal: M spatial samples per step, N temporal steps."""

    @classmethod
    def zeros(cls, m: int, n: int) -> "ComplexSequence":
        return cls(data=np.zeros((m, n), dtype=np.complex128))


class Spectrum(_ComplexMatrix):
    """Frequency-domain view of a sequence along its temporal axis (index 0 = DC)."""


def dft(x: ComplexSequence) -> Spectrum:
    """Unitary DFT along the temporal axis of every spatial row.

    Args:
        x: Time-domain sequence

    Returns:
        Spectrum with 1/sqrt(N) scaling, so ``idft(dft(x)) == x``
    """
    return Spectrum(data=np.fft.fft(x.data, axis=-1, norm="ortho"))


def idft(spectrum: Spectrum) -> ComplexSequence:
    """Inverse of :func:`dft`."""
    return ComplexSequence(data=np.fft.ifft(spectrum.data, axis=-1, norm="ortho"))


def resample(x: ComplexSequence, target_len: int) -> ComplexSequence:
    """Linearly interpolate (or decimate) the temporal axis to ``target_len``.

    Real and imaginary parts are interpolated independently on a grid that
    maps the first and last samples onto each other, so endpoints and linear
    ramps are preserved exactly.

    Args:
        x: Input sequence with N >= 2
        target_len: Output temporal length (>= 2)

    Returns:
        Resampled sequence of shape M×target_len

    Raises:
        InvalidSignalError: If N < 2 or target_len < 2
    """
    if target_len < 2:
        raise InvalidSignalError(f"target_len must be >= 2, got {target_len}")
    if x.N < 2:
        raise InvalidSignalError(f"Resampling needs N >= 2, got N={x.N}")
    if target_len == x.N:
        return ComplexSequence(data=x.data)

    source = np.arange(x.N, dtype=np.float64)
    positions = np.linspace(0.0, x.N - 1.0, target_len)
    out = np.empty((x.M, target_len), dtype=np.complex128)
    for row in range(x.M):
        out[row].real = np.interp(positions, source, x.data[row].real)
        out[row].imag = np.interp(positions, source, x.data[row].imag)
    return ComplexSequence(data=out)


def normalize_power(x: ComplexSequence) -> ComplexSequence:
    """Divide every sample by the mean L2-norm of the N temporal columns.

    Raises:
        InvalidSignalError: If every sample is zero
    """
    mean_norm = float(np.mean(np.linalg.norm(x.data, axis=0)))
    if mean_norm == 0.0:
        raise InvalidSignalError("Cannot normalize an all-zero sequence (degenerate power)")
    return ComplexSequence(data=x.data / mean_norm)


def preprocess(x: ComplexSequence, length: int) -> ComplexSequence:
    """Bring a raw sequence to canonical form: fixed length, unit mean column norm."""
    if x.N != length:
        logger.debug(f"Resampling sequence from N={x.N} to N={length}")
        x = resample(x, length)
    return normalize_power(x)
