"""Quality metrics for complex sequences: complex SSIM and SNR."""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tfdiff.constants import Ssim
from tfdiff.errors import InvalidSignalError
from tfdiff.signal.sequence import ComplexSequence


def _check_same_shape(a: ComplexSequence, b: ComplexSequence) -> None:
    if a.shape != b.shape:
        raise InvalidSignalError(f"Shape mismatch: {a.shape} vs {b.shape}")


def _windows(data: np.ndarray, window: int, stride: int) -> np.ndarray:
    """(M, N) -> (num_windows, M, window) temporal windows spanning every row."""
    n = data.shape[1]
    if n <= window:
        return data[np.newaxis, :, :]
    views = sliding_window_view(data, window, axis=1)[:, ::stride, :]
    return np.moveaxis(views, 1, 0)


def complex_ssim(
    a: ComplexSequence,
    b: ComplexSequence,
    window: int = Ssim.WINDOW,
    stride: int = Ssim.STRIDE,
    k1: float = Ssim.K1,
    k2: float = Ssim.K2,
) -> float:
    """Structural similarity for complex sequences.

    Each temporal window covers all M spatial rows. Means are complex,
    variances use ``|.|^2`` and the covariance term is the real part of the
    Hermitian cross moment. Window scores are averaged.

    Args:
        a: First sequence
        b: Second sequence, same shape as ``a``
        window: Temporal window length
        stride: Temporal hop between windows
        k1: Luminance stabilizer factor
        k2: Contrast/structure stabilizer factor

    Returns:
        Mean SSIM in [-1, 1]; two all-zero inputs score 1

    Raises:
        InvalidSignalError: If shapes differ
    """
    _check_same_shape(a, b)
    dynamic_range = float(max(np.max(np.abs(a.data)), np.max(np.abs(b.data))))
    if dynamic_range == 0.0:
        return 1.0
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2

    wa = _windows(a.data, window, stride)
    wb = _windows(b.data, window, stride)
    mu_a = wa.mean(axis=(1, 2))
    mu_b = wb.mean(axis=(1, 2))
    da = wa - mu_a[:, None, None]
    db = wb - mu_b[:, None, None]
    var_a = np.mean(np.abs(da) ** 2, axis=(1, 2))
    var_b = np.mean(np.abs(db) ** 2, axis=(1, 2))
    cov = np.real(np.mean(da * np.conj(db), axis=(1, 2)))

    luminance = (2.0 * np.real(mu_a * np.conj(mu_b)) + c1) / (
        np.abs(mu_a) ** 2 + np.abs(mu_b) ** 2 + c1
    )
    structure = (2.0 * cov + c2) / (var_a + var_b + c2)
    return float(np.mean(luminance * structure))


def snr_db(estimate: ComplexSequence, truth: ComplexSequence) -> float:
    """Reconstruction SNR ``-10 log10(||truth - estimate||^2 / ||truth||^2)``.

    Returns:
        SNR in dB, ``math.inf`` for an exact match

    Raises:
        InvalidSignalError: If shapes differ or ``truth`` is all zero
    """
    _check_same_shape(estimate, truth)
    reference = float(np.sum(np.abs(truth.data) ** 2))
    if reference == 0.0:
        raise InvalidSignalError("SNR is undefined for an all-zero reference")
    residual = float(np.sum(np.abs(truth.data - estimate.data) ** 2))
    if residual == 0.0:
        return math.inf
    return -10.0 * math.log10(residual / reference)
