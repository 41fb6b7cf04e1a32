"""Tests for the hierarchical diffusion transformer."""

from collections.abc import Callable

import numpy as np
import pytest
from pydantic import ValidationError

from tfdiff.config import ModelConfig
from tfdiff.errors import ConditionError, InvalidSignalError
from tfdiff.models import ConditionLabel
from tfdiff.nn.autograd import Tensor, gradcheck, no_grad
from tfdiff.nn.hdt import HdtModel, hdt_forward, sinusoidal_embedding
from tfdiff.nn.layers import Module
from tfdiff.signal.sequence import ComplexSequence
from tfdiff.utils import make_rng


def _inputs(cfg: ModelConfig, batch: int, seed: int = 3) -> np.ndarray:
    gen = make_rng(seed)
    shape = (batch, cfg.spatial_dim, cfg.temporal_length)
    return gen.standard_normal(shape) + 1j * gen.standard_normal(shape)


def _labels(*classes: str) -> list[ConditionLabel]:
    return [ConditionLabel(values={"class": c}) for c in classes]


def test_fresh_model_returns_input(tiny_model_config: ModelConfig) -> None:
    """Both stages add zero-initialized deltas, so a fresh model predicts x_t."""
    model = HdtModel(tiny_model_config)
    x = _inputs(tiny_model_config, 3)
    out = model.predict(x, _labels("0", "1", "0"), np.array([1, 5, 10]))
    np.testing.assert_array_equal(out, x)


def test_single_sequence_forward(tiny_model_config: ModelConfig) -> None:
    """hdt_forward maps one (M, N) sequence to the same shape."""
    model = HdtModel(tiny_model_config)
    x = ComplexSequence(data=_inputs(tiny_model_config, 1)[0])
    out = hdt_forward(model, x, ConditionLabel(values={"class": "1"}), 4)
    assert out.shape == (2, 8)


def test_input_shape_checked(tiny_model_config: ModelConfig) -> None:
    """Inputs must be (B, M, N) with the configured M and N."""
    model = HdtModel(tiny_model_config)
    with pytest.raises(InvalidSignalError, match="Expected input"):
        model.predict(np.zeros((1, 3, 8), dtype=np.complex128), _labels("0"), np.array([1]))


def test_condition_outside_vocabulary(tiny_model_config: ModelConfig) -> None:
    """Unknown values, unknown fields and missing fields raise ConditionError."""
    model = HdtModel(tiny_model_config)
    x = np.zeros((1, 2, 8), dtype=np.complex128)
    with pytest.raises(ConditionError, match="Unknown value"):
        model.predict(x, _labels("7"), np.array([1]))
    with pytest.raises(ConditionError, match="Unknown condition field"):
        model.predict(x, [ConditionLabel(values={"class": "0", "room": "a"})], np.array([1]))
    with pytest.raises(ConditionError, match="missing field"):
        model.predict(x, [ConditionLabel(values={})], np.array([1]))


def test_condition_tokens_include_null(tiny_model_config: ModelConfig) -> None:
    """Condition tokens are (B, F + 1, d); the null token is shared by every item."""
    model = HdtModel(tiny_model_config)
    indices = model.condition_embedding.encode_batch(_labels("0", "1"))
    tokens = model.condition_embedding(indices).data
    assert tokens.shape == (2, 2, 8)
    np.testing.assert_array_equal(tokens[0, 0], tokens[1, 0])
    assert not np.array_equal(tokens[0, 1], tokens[1, 1])


def test_stage_one_commutes_with_temporal_permutation(
    tiny_model_config: ModelConfig, randomize_parameters: Callable[[Module, int, float], None]
) -> None:
    """Stage 1 refines every temporal sample independently with shared weights."""
    model = HdtModel(tiny_model_config)
    randomize_parameters(model, 4, 0.3)
    x = _inputs(tiny_model_config, 2)
    perm = make_rng(8).permutation(tiny_model_config.temporal_length)
    with no_grad():
        cond = model.condition_embedding(model.condition_embedding.encode_batch(_labels("0", "1")))
        step = model.step_embedding(np.array([2, 9]))
        out = model.spatial_denoise(Tensor(x), cond, step).data
        permuted = model.spatial_denoise(Tensor(x[:, :, perm]), cond, step).data
    assert not np.allclose(out, x)
    np.testing.assert_allclose(permuted, out[:, :, perm], atol=1e-12)


def test_stage_two_depends_on_order(
    tiny_model_config: ModelConfig, randomize_parameters: Callable[[Module, int, float], None]
) -> None:
    """PME positions make stage 2 order-aware."""
    model = HdtModel(tiny_model_config)
    randomize_parameters(model, 5, 0.3)
    x = _inputs(tiny_model_config, 1)
    perm = np.roll(np.arange(tiny_model_config.temporal_length), 1)
    with no_grad():
        cond = model.condition_embedding(model.condition_embedding.encode_batch(_labels("0")))
        step = model.step_embedding(np.array([3]))
        out = model.temporal_deblur(Tensor(x), cond, step).data
        permuted = model.temporal_deblur(Tensor(x[:, :, perm]), cond, step).data
    assert not np.allclose(permuted, out[:, :, perm], atol=1e-6)


def test_flat_model_skips_stage_one(tiny_model_config: ModelConfig) -> None:
    """hierarchical=False builds no spatial stage and leaves inputs to stage 2."""
    cfg = tiny_model_config.model_copy(update={"hierarchical": False})
    model = HdtModel(cfg)
    assert model.spatial_in is None
    assert not model.spatial_blocks
    assert not any(name.startswith("spatial") for name, _ in model.named_parameters())
    x = Tensor(_inputs(cfg, 1))
    assert model.spatial_denoise(x, Tensor(np.zeros((1, 2, 8))), Tensor(np.zeros((1, 8)))) is x
    assert model.num_parameters() < HdtModel(tiny_model_config).num_parameters()


def test_same_seed_same_weights(tiny_model_config: ModelConfig) -> None:
    """Initialization is a pure function of the seed."""
    a = HdtModel(tiny_model_config, seed=1).state_dict()
    b = HdtModel(tiny_model_config, seed=1).state_dict()
    c = HdtModel(tiny_model_config, seed=2).state_dict()
    assert a.keys() == b.keys()
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])
    assert any(not np.array_equal(a[name], c[name]) for name in a)


def test_sinusoidal_embedding() -> None:
    """Step 0 gives sin = 0 and cos = 1."""
    emb = sinusoidal_embedding(np.array([0, 7]), 6)
    assert emb.shape == (2, 6)
    np.testing.assert_array_equal(emb[0], [0, 0, 0, 1, 1, 1])


@pytest.mark.slow
def test_full_model_gradients(randomize_parameters: Callable[[Module, int, float], None]) -> None:
    """Backprop through two blocks per stage agrees with finite differences."""
    cfg = ModelConfig(
        spatial_dim=2,
        temporal_length=3,
        hidden_dim=4,
        heads=2,
        spatial_blocks=2,
        temporal_blocks=2,
        step_embed_dim=4,
        ff_multiplier=1,
        condition_vocab={"class": ["0", "1"]},
    )
    model = HdtModel(cfg)
    randomize_parameters(model, 6, 0.3)
    x = _inputs(cfg, 2)
    target = _inputs(cfg, 2, seed=9)
    indices = model.condition_embedding.encode_batch(_labels("0", "1"))
    t = np.array([1, 2])

    def loss() -> Tensor:
        return (model(x, indices, t) - target).abs2().mean()

    assert gradcheck(loss, model.parameters()) <= 1e-4


def test_model_config_validation() -> None:
    """hidden_dim must divide over heads; step_embed_dim must be even; vocab values distinct."""
    with pytest.raises(ValidationError, match="divisible"):
        ModelConfig(hidden_dim=10, heads=4)
    with pytest.raises(ValidationError, match="even"):
        ModelConfig(step_embed_dim=7)
    with pytest.raises(ValidationError, match="duplicate"):
        ModelConfig(condition_vocab={"class": ["a", "a"]})
    with pytest.raises(ValidationError, match="empty"):
        ModelConfig(condition_vocab={"class": []})


def test_model_presets() -> None:
    """Size presets split blocks over the two stages."""
    cfg = ModelConfig.preset("32B-128")
    assert cfg.hidden_dim == 128
    assert cfg.spatial_blocks + cfg.temporal_blocks == 32
    assert cfg.heads == 4
    assert ModelConfig.preset("toy", hidden_dim=16).hidden_dim == 16
    with pytest.raises(ValueError, match="Unknown model preset"):
        ModelConfig.preset("huge")
