"""Pytest configuration and fixtures."""

from collections.abc import Callable

import numpy as np
import pytest

from tfdiff.config import ModelConfig, ScheduleConfig, TrainConfig
from tfdiff.diffusion.forward import complex_normal
from tfdiff.diffusion.schedule import DiffusionSchedule, build_schedule
from tfdiff.models import ConditionLabel, LabeledSequence
from tfdiff.nn.layers import Module
from tfdiff.signal.sequence import ComplexSequence, normalize_power
from tfdiff.utils import make_rng


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for test inputs."""
    return make_rng(1234)


@pytest.fixture
def small_schedule() -> DiffusionSchedule:
    """Default schedule shape at a short length and few steps."""
    return build_schedule(ScheduleConfig(T=20, N=16))


@pytest.fixture
def default_schedule() -> DiffusionSchedule:
    """Published constants at the desk length."""
    return build_schedule(ScheduleConfig())


@pytest.fixture
def desk_schedule() -> DiffusionSchedule:
    """Converging preset at N=16."""
    return build_schedule(ScheduleConfig.preset("desk", N=16))


@pytest.fixture
def tiny_model_config() -> ModelConfig:
    """Smallest useful HDT: 2 rows, 8 samples, d=8, one block per stage."""
    return ModelConfig(
        spatial_dim=2,
        temporal_length=8,
        hidden_dim=8,
        heads=2,
        spatial_blocks=1,
        temporal_blocks=1,
        step_embed_dim=8,
        ff_multiplier=1,
        condition_vocab={"class": ["0", "1"]},
    )


@pytest.fixture
def tiny_train_config(tiny_model_config: ModelConfig) -> TrainConfig:
    """Training config matching ``tiny_model_config`` with a short schedule."""
    return TrainConfig(
        schedule=ScheduleConfig(T=10, N=8),
        model=tiny_model_config,
        batch_size=2,
        max_steps=4,
        checkpoint_interval=2,
        log_interval=1,
        seed=7,
    )


def _random_sequences(count: int, m: int, n: int, seed: int) -> list[ComplexSequence]:
    rng = make_rng(seed)
    return [normalize_power(ComplexSequence(data=complex_normal(rng, (m, n)))) for _ in range(count)]


@pytest.fixture
def tiny_dataset() -> list[LabeledSequence]:
    """Four 2x8 sequences, two per class."""
    return [
        LabeledSequence(
            sequence=seq,
            condition=ConditionLabel(values={"class": str(i % 2)}),
            item_id=f"item-{i}",
        )
        for i, seq in enumerate(_random_sequences(4, 2, 8, seed=99))
    ]


@pytest.fixture
def randomize_parameters() -> Callable[[Module, int, float], None]:
    """Overwrite every parameter of a module with seeded random values.

    Fresh blocks are exact identities (zero-initialized output projections),
    which hides most of the graph from gradient checks.
    """

    def apply(module: Module, seed: int = 0, scale: float = 0.3) -> None:
        gen = make_rng(seed)
        for _, p in module.named_parameters():
            values = gen.standard_normal(p.shape) * scale
            if not p.is_real:
                values = values + 1j * gen.standard_normal(p.shape) * scale
            p.data[...] = values

    return apply
