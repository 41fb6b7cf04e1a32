"""Abstract base for deterministic synthetic dataset generators."""

import logging
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from tfdiff.config import SyntheticSpec
from tfdiff.diffusion.forward import complex_normal
from tfdiff.models import ConditionLabel, LabeledSequence
from tfdiff.signal.sequence import ComplexSequence, normalize_power
from tfdiff.utils import make_rng, worker_count

logger = logging.getLogger(__name__)

CLASS_FIELD = "class"


def class_band(value_range: tuple[float, float], class_count: int, k: int) -> tuple[float, float]:
    """Sub-band ``k`` of ``class_count`` equal splits of ``value_range``."""
    low, high = value_range
    width = (high - low) / class_count
    return (low + k * width, low + (k + 1) * width)


class SyntheticGenerator(ABC):
    """Generates labeled sequences whose class controls a parameter cluster."""

    def __init__(self, spec: SyntheticSpec):
        """Initialize the generator.

        Args:
            spec: Dataset parameters
        """
        self.spec = spec

    @abstractmethod
    def synthesize(self, class_id: int, rng: np.random.Generator) -> np.ndarray:
        """Draw one noiseless (M, N) sequence of class ``class_id``.

        Args:
            class_id: Class index in ``[0, class_count)``
            rng: Per-item generator

        Returns:
            Complex array of shape (spatial_dim, length)
        """
        pass

    @abstractmethod
    def features(self, x: np.ndarray) -> np.ndarray:
        """Class-discriminative features of one (M, N) sequence."""
        pass

    @abstractmethod
    def class_centers(self) -> np.ndarray:
        """Feature-space centre of every class, shape (class_count, F)."""
        pass

    def feature_scale(self) -> np.ndarray:
        """Per-feature scale used for nearest-centre distances."""
        centers = self.class_centers()
        return np.ones(centers.shape[1])

    def label(self, class_id: int) -> ConditionLabel:
        return ConditionLabel(values={CLASS_FIELD: str(class_id)})

    def add_noise(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Add CN noise ``noise_db`` below the sequence's mean sample power."""
        if self.spec.noise_db is None:
            return x
        power = float(np.mean(np.abs(x) ** 2))
        std = np.sqrt(power * 10.0 ** (self.spec.noise_db / 10.0))
        return x + std * complex_normal(rng, x.shape)

    def _item(self, index: int) -> LabeledSequence:
        spec = self.spec
        class_id = index // spec.sequences_per_class
        rng = make_rng(spec.seed, index)
        x = self.add_noise(self.synthesize(class_id, rng), rng)
        return LabeledSequence(
            sequence=normalize_power(ComplexSequence(data=x)),
            condition=self.label(class_id),
            item_id=f"{spec.kind}-{index:05d}",
        )

    def generate(self, threads: int | None = None) -> list[LabeledSequence]:
        """Generate the whole dataset, class by class.

        Items are independent: item ``i`` uses the stream ``(seed, i)``, so
        the output does not depend on the worker count.
        """
        total = self.spec.class_count * self.spec.sequences_per_class
        with ThreadPoolExecutor(max_workers=worker_count(threads)) as pool:
            items = list(pool.map(self._item, range(total)))
        logger.info(
            f"Generated {total} {self.spec.kind} sequences "
            f"({self.spec.class_count} classes x {self.spec.sequences_per_class})"
        )
        return items

    def classify(self, x: np.ndarray) -> int:
        """Nearest class centre in scaled feature space."""
        scale = self.feature_scale()
        distances = np.linalg.norm((self.class_centers() - self.features(x)) / scale, axis=1)
        return int(np.argmin(distances))

    def oracle_accuracy(self, dataset: list[LabeledSequence]) -> float:
        """Fraction of items the nearest-centre oracle assigns to their own class."""
        if not dataset:
            return 0.0
        hits = sum(
            self.classify(item.sequence.data) == int(item.condition.values[CLASS_FIELD])
            for item in dataset
        )
        return hits / len(dataset)
