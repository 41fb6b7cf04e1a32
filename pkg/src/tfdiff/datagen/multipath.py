"""Multipath channel-state sequences with class-clustered delay and Doppler."""

import numpy as np

from tfdiff.config import SyntheticSpec
from tfdiff.datagen.base import SyntheticGenerator, class_band
from tfdiff.models import LabeledSequence


def render_multipath(
    amplitudes: np.ndarray,
    dopplers: np.ndarray,
    delays: np.ndarray,
    phases: np.ndarray,
    m: int,
    n: int,
) -> np.ndarray:
    """Superpose paths across M subcarrier rows.

    ``x[r, k] = sum_p a_p exp(j 2 pi (f_p k / N + phi_p)) exp(-j 2 pi r tau_p / M)``
    with Doppler ``f_p`` in cycles per sequence and delay ``tau_p`` in samples.
    """
    rows = np.arange(m)[:, None, None]
    cols = np.arange(n)[None, :, None]
    temporal = np.exp(2j * np.pi * (dopplers * cols / n + phases))
    spatial = np.exp(-2j * np.pi * rows * delays / m)
    return np.sum(amplitudes * temporal * spatial, axis=-1)


def peak_frequency(x: np.ndarray) -> float:
    """Signed frequency (cycles per sequence) of the strongest DFT bin, summed over rows."""
    n = x.shape[-1]
    power = np.sum(np.abs(np.fft.fft(x, axis=-1)) ** 2, axis=0)
    k = int(np.argmax(power))
    return float(k if k < n / 2 else k - n)


class MultipathCsiGenerator(SyntheticGenerator):
    """Class k owns the k-th Doppler and delay sub-band."""

    def _bands(self, class_id: int) -> tuple[tuple[float, float], tuple[float, float]]:
        spec = self.spec
        return (
            class_band(spec.doppler_range, spec.class_count, class_id),
            class_band(spec.delay_range, spec.class_count, class_id),
        )

    def synthesize(self, class_id: int, rng: np.random.Generator) -> np.ndarray:
        spec = self.spec
        doppler_band, delay_band = self._bands(class_id)
        paths = spec.paths

        def draw(band: tuple[float, float]) -> np.ndarray:
            centre = 0.5 * (band[0] + band[1])
            half = 0.5 * (band[1] - band[0]) * spec.cluster_jitter
            return rng.uniform(centre - half, centre + half, size=paths)

        dopplers = draw(doppler_band)
        delays = draw(delay_band)
        amplitudes = rng.uniform(*spec.amplitude_range, size=paths)
        phases = rng.uniform(0.0, 1.0, size=paths)
        return render_multipath(amplitudes, dopplers, delays, phases, spec.spatial_dim, spec.length)

    def features(self, x: np.ndarray) -> np.ndarray:
        return np.array([peak_frequency(x)])

    def class_centers(self) -> np.ndarray:
        centers = [
            0.5 * sum(self._bands(k)[0]) for k in range(self.spec.class_count)
        ]
        return np.asarray(centers, dtype=np.float64)[:, None]


def gen_multipath_csi(spec: SyntheticSpec, threads: int | None = None) -> list[LabeledSequence]:
    """Generate a labeled multipath CSI dataset from ``spec``."""
    return MultipathCsiGenerator(spec).generate(threads)
