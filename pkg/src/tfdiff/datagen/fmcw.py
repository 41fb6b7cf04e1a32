"""Linear-FM chirp sequences with class-clustered chirp rate and start frequency."""

import numpy as np

from tfdiff.config import SyntheticSpec
from tfdiff.datagen.base import SyntheticGenerator, class_band
from tfdiff.models import LabeledSequence


def render_chirp(rate: float, start_freq: float, n: int) -> np.ndarray:
    """``x(k) = exp(j pi rate k^2 / N + j 2 pi f0 k / N)``.

    The instantaneous frequency is ``f0 + rate * k`` cycles per sequence.
    """
    k = np.arange(n)
    return np.exp(1j * np.pi * rate * k**2 / n + 2j * np.pi * start_freq * k / n)


def instantaneous_frequency(x: np.ndarray) -> np.ndarray:
    """Per-sample frequency in cycles per sequence from adjacent phase differences.

    Rows are combined coherently in the lag product so per-row phase
    offsets cancel.
    """
    x = np.atleast_2d(x)
    n = x.shape[-1]
    lag = np.sum(x[:, 1:] * np.conj(x[:, :-1]), axis=0)
    return np.angle(lag) * n / (2.0 * np.pi)


def chirp_parameters(x: np.ndarray) -> tuple[float, float]:
    """Least-squares (rate, start frequency) of a chirp.

    The lag product at sample ``k`` sits at ``f0 + rate * (k + 1/2)``.
    """
    freq = instantaneous_frequency(x)
    rate, intercept = np.polyfit(np.arange(freq.size), freq, 1)
    return float(rate), float(intercept - rate / 2.0)


class FmcwChirpGenerator(SyntheticGenerator):
    """Class k owns the k-th chirp-rate and start-frequency sub-band.

    Every row carries the same chirp with an independent phase offset,
    standing in for the receive antennas of one frame.
    """

    def _bands(self, class_id: int) -> tuple[tuple[float, float], tuple[float, float]]:
        spec = self.spec
        return (
            class_band(spec.chirp_rate_range, spec.class_count, class_id),
            class_band(spec.start_freq_range, spec.class_count, class_id),
        )

    def synthesize(self, class_id: int, rng: np.random.Generator) -> np.ndarray:
        spec = self.spec
        jitter = spec.cluster_jitter
        values = []
        for low, high in self._bands(class_id):
            centre, half = 0.5 * (low + high), 0.5 * (high - low) * jitter
            values.append(rng.uniform(centre - half, centre + half))
        rate, start_freq = values
        amplitude = rng.uniform(*spec.amplitude_range)
        offsets = np.exp(2j * np.pi * rng.uniform(0.0, 1.0, size=(spec.spatial_dim, 1)))
        return amplitude * offsets * render_chirp(rate, start_freq, spec.length)[None, :]

    def features(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(chirp_parameters(x))

    def class_centers(self) -> np.ndarray:
        return np.array(
            [[0.5 * sum(band) for band in self._bands(k)] for k in range(self.spec.class_count)]
        )

    def feature_scale(self) -> np.ndarray:
        spec = self.spec
        return np.array(
            [
                (spec.chirp_rate_range[1] - spec.chirp_rate_range[0]) / spec.class_count,
                (spec.start_freq_range[1] - spec.start_freq_range[0]) / spec.class_count,
            ]
        )


def gen_fmcw_chirp(spec: SyntheticSpec, threads: int | None = None) -> list[LabeledSequence]:
    """Generate a labeled FMCW chirp dataset from ``spec``."""
    return FmcwChirpGenerator(spec).generate(threads)
