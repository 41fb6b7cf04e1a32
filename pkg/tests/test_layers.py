"""Tests for complex linear, activation, attention, PME, adaLN and the ADB block."""

from collections.abc import Callable

import numpy as np
import pytest

from tfdiff.nn.autograd import Tensor, gradcheck
from tfdiff.nn.layers import (
    AdaLayerNorm,
    AdbBlock,
    Linear,
    Module,
    MultiHeadAttention,
    ada_layer_norm,
    adb_forward,
    attention_scores,
    complex_activation,
    complex_attention,
    complex_linear,
    pme_angles,
    pme_encode,
)
from tfdiff.utils import make_rng


def _complex(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# -- complex_linear ---------------------------------------------------------


def test_linear_identity(rng: np.random.Generator) -> None:
    """w = I, b = 0 leaves the input unchanged."""
    x = _complex(rng, 3, 4)
    out = complex_linear(Tensor(x), Tensor(np.eye(4, dtype=np.complex128)), Tensor(np.zeros(4)))
    np.testing.assert_array_equal(out.data, x)


def test_linear_rotation() -> None:
    """w = j maps 1 to j."""
    out = complex_linear(Tensor(np.array([1.0 + 0j])), Tensor(np.array([[1j]])))
    np.testing.assert_allclose(out.data, [1j])


def test_linear_matches_real_block_form(rng: np.random.Generator) -> None:
    """The complex map equals the real 2x2 block evaluation."""
    x, w, b = _complex(rng, 5, 3), _complex(rng, 3, 2), _complex(rng, 2)
    out = complex_linear(Tensor(x), Tensor(w), Tensor(b)).data

    real_x = np.concatenate([x.real, x.imag], axis=1)
    real_w = np.block([[w.real, w.imag], [-w.imag, w.real]])
    real_out = real_x @ real_w + np.concatenate([b.real, b.imag])
    np.testing.assert_allclose(out, real_out[:, :2] + 1j * real_out[:, 2:], atol=1e-12)


def test_linear_shape_mismatch() -> None:
    """Inner dimensions must agree."""
    with pytest.raises(ValueError, match="shape mismatch"):
        complex_linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 1))))


def test_linear_layer_zero_init(rng: np.random.Generator) -> None:
    """Zero-initialized layers output exactly zero."""
    layer = Linear(4, 3, rng, zero_init=True)
    out = layer(Tensor(_complex(rng, 2, 4)))
    np.testing.assert_array_equal(out.data, 0.0)
    assert layer.num_parameters() == 4 * 3 + 3


def test_linear_layer_gradients(rng: np.random.Generator) -> None:
    """Weight and bias gradients agree with finite differences."""
    layer = Linear(3, 2, rng)
    layer.bias.data[...] = _complex(rng, 2)  # type: ignore[union-attr]
    x = Tensor(_complex(rng, 4, 3))
    error = gradcheck(lambda: layer(x).abs2().sum(), layer.parameters())
    assert error < 1e-6


# -- complex_activation -----------------------------------------------------


def test_activation_zero_and_real_inputs() -> None:
    """0 maps to 0 and real inputs stay real."""
    assert complex_activation(Tensor(np.array([0.0 + 0.0j]))).data[0] == 0.0
    out = complex_activation(Tensor(np.array([-1.0 + 0j, 0.5 + 0j, 2.0 + 0j])))
    np.testing.assert_array_equal(out.data.imag, 0.0)


def test_activation_is_split(rng: np.random.Generator) -> None:
    """Real and imaginary parts are activated independently."""
    z = _complex(rng, 6)
    out = complex_activation(Tensor(z)).data
    np.testing.assert_allclose(out.real, complex_activation(Tensor(z.real)).data)
    np.testing.assert_allclose(out.imag, complex_activation(Tensor(z.imag)).data)


def test_activation_under_conjugation(rng: np.random.Generator) -> None:
    """Conjugating the input keeps the real branch and feeds -Im(x) to the imaginary one."""
    z = _complex(rng, 6)
    out = complex_activation(Tensor(z)).data
    conj_out = complex_activation(Tensor(np.conj(z))).data
    np.testing.assert_allclose(conj_out.real, out.real)
    np.testing.assert_allclose(conj_out.imag, complex_activation(Tensor(-z.imag)).data)


# -- complex_attention ------------------------------------------------------


def test_attention_single_key_returns_value(rng: np.random.Generator) -> None:
    """One key equal to the query gives weight 1 and returns v."""
    q = _complex(rng, 1, 4)
    v = _complex(rng, 1, 3)
    out = complex_attention(Tensor(q), Tensor(q), Tensor(v))
    np.testing.assert_allclose(out.data, v, atol=1e-12)


def test_attention_weight_magnitudes_sum_to_one(rng: np.random.Generator) -> None:
    """With identity values the output rows are the weights; their moduli sum to 1."""
    q = Tensor(_complex(rng, 3, 4))
    k = Tensor(_complex(rng, 5, 4))
    weights = complex_attention(q, k, Tensor(np.eye(5, dtype=np.complex128))).data
    np.testing.assert_allclose(np.abs(weights).sum(axis=-1), 1.0, atol=1e-12)


def test_attention_weight_phase_follows_score(rng: np.random.Generator) -> None:
    """Each weight carries the phase of its Hermitian score."""
    q = Tensor(_complex(rng, 2, 4))
    k = Tensor(_complex(rng, 3, 4))
    weights = complex_attention(q, k, Tensor(np.eye(3, dtype=np.complex128))).data
    scores = attention_scores(q, k).data
    np.testing.assert_allclose(np.angle(weights), np.angle(scores), atol=1e-12)


def test_attention_scores_hermitian(rng: np.random.Generator) -> None:
    """s(q, k) = conj(s(k, q))^T."""
    q = Tensor(_complex(rng, 4, 8))
    k = Tensor(_complex(rng, 4, 8))
    np.testing.assert_allclose(
        attention_scores(q, k).data, np.conj(attention_scores(k, q).data).T, atol=1e-12
    )


def test_attention_shape_errors(rng: np.random.Generator) -> None:
    """Head dimensions and key/value lengths must agree."""
    with pytest.raises(ValueError, match="dimension"):
        complex_attention(Tensor(_complex(rng, 2, 4)), Tensor(_complex(rng, 2, 3)), Tensor(_complex(rng, 2, 3)))
    with pytest.raises(ValueError, match="length"):
        complex_attention(Tensor(_complex(rng, 2, 4)), Tensor(_complex(rng, 3, 4)), Tensor(_complex(rng, 2, 4)))


def test_attention_dropout_is_seeded(rng: np.random.Generator) -> None:
    """Dropout masks depend only on the generator state."""
    q, k, v = (Tensor(_complex(rng, 2, 3, 4)) for _ in range(3))
    first = complex_attention(q, k, v, dropout=0.5, rng=make_rng(1)).data
    second = complex_attention(q, k, v, dropout=0.5, rng=make_rng(1)).data
    np.testing.assert_array_equal(first, second)
    assert not np.allclose(first, complex_attention(q, k, v).data)


def test_multi_head_requires_divisible_dim(rng: np.random.Generator) -> None:
    """dim must split evenly over heads."""
    with pytest.raises(ValueError, match="divisible"):
        MultiHeadAttention(6, 4, rng)


# -- phase modulation encoding ----------------------------------------------


def test_pme_zero_position_is_identity(rng: np.random.Generator) -> None:
    """Position 0 leaves a token unchanged."""
    x = _complex(rng, 8)
    np.testing.assert_array_equal(pme_encode(Tensor(x), 0).data, x)


def test_pme_first_feature_rotates_by_one_radian() -> None:
    """theta_0 = 1, so feature 0 at position 1 is multiplied by exp(j)."""
    out = pme_encode(Tensor(np.ones(4, dtype=np.complex128)), 1).data
    assert out[0] == pytest.approx(np.exp(1j), abs=1e-15)
    np.testing.assert_allclose(pme_angles(np.array([1]), 4)[0], 10000.0 ** (-np.arange(4) / 4))


@pytest.mark.parametrize("d", [4, 8, 32])
def test_pme_relative_position_identity(d: int) -> None:
    """conj(PME(q, n)) * PME(k, m) == PME(conj(q) * k, m - n) elementwise."""
    rng = make_rng(d)
    q = _complex(rng, d)
    k = _complex(rng, d)
    for n in range(8):
        for m in range(8):
            lhs = np.conj(pme_encode(Tensor(q), n).data) * pme_encode(Tensor(k), m).data
            rhs = pme_encode(Tensor(np.conj(q) * k), m - n).data
            np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_pme_preserves_magnitudes(rng: np.random.Generator) -> None:
    """Rotation changes phases only."""
    x = _complex(rng, 5, 8)
    out = pme_encode(Tensor(x), np.arange(5)).data
    np.testing.assert_allclose(np.abs(out), np.abs(x), rtol=1e-14)


def test_pme_scores_depend_on_offset_only(rng: np.random.Generator) -> None:
    """Shifting both positions leaves the Hermitian score unchanged."""
    q = Tensor(_complex(rng, 8))
    k = Tensor(_complex(rng, 8))

    def score(n: int, m: int) -> complex:
        return complex(np.sum(np.conj(pme_encode(q, n).data) * pme_encode(k, m).data))

    assert score(2, 5) == pytest.approx(score(10, 13), abs=1e-12)


# -- adaLN --------------------------------------------------------------------


def test_fresh_adaln_is_pure_normalization(rng: np.random.Generator) -> None:
    """Zero-weight heads give scale 1 and shift 0: zero mean, unit std per token."""
    norm = AdaLayerNorm(8, 6)
    x = Tensor(10.0 * _complex(rng, 2, 3, 8) + 4.0 - 2.0j)
    step = Tensor(rng.standard_normal((2, 6)))
    out = norm(x, step).data
    np.testing.assert_allclose(out.mean(axis=-1), 0.0, atol=1e-12)
    std = np.sqrt(np.mean(np.abs(out) ** 2, axis=-1) / 2.0)
    np.testing.assert_allclose(std, 1.0, rtol=1e-6)


def test_adaln_scale_and_shift(rng: np.random.Generator) -> None:
    """Output mean is the shift and per-coordinate std the scale modulus."""
    a, b = 0.5 - 1.5j, 2.0 + 1.0j
    x = Tensor(10.0 * _complex(rng, 4, 16))
    out = ada_layer_norm(x, Tensor(np.array(a)), Tensor(np.array(b))).data
    np.testing.assert_allclose(out.mean(axis=-1), b, atol=1e-12)
    std = np.sqrt(np.mean(np.abs(out - b) ** 2, axis=-1) / 2.0)
    np.testing.assert_allclose(std, abs(a), rtol=1e-6)


def test_adaln_constant_token_maps_to_shift() -> None:
    """A constant token has zero variance and normalizes to 0."""
    x = Tensor(np.full((1, 8), 0.3 + 0.1j))
    out = ada_layer_norm(x, Tensor(np.array(1.0 + 0j)), Tensor(np.array(0.0 + 0j))).data
    np.testing.assert_allclose(out, 0.0, atol=1e-12)


# -- attention-based diffusion block ------------------------------------------


def _block_inputs(rng: np.random.Generator, d: int = 8) -> tuple[Tensor, Tensor, Tensor]:
    x = Tensor(_complex(rng, 2, 3, d))
    cond = Tensor(_complex(rng, 2, 2, d))
    step = Tensor(rng.standard_normal((2, d)))
    return x, cond, step


def test_fresh_block_is_identity(rng: np.random.Generator) -> None:
    """Every branch ends in a zero projection, so a fresh block returns its input."""
    block = AdbBlock(8, 2, 2, 8, make_rng(0))
    x, cond, step = _block_inputs(rng)
    out = adb_forward(block, x, cond, step, positions=np.arange(3))
    np.testing.assert_array_equal(out.data, x.data)


def test_block_preserves_shape(
    rng: np.random.Generator, randomize_parameters: Callable[[Module, int, float], None]
) -> None:
    """A trained (randomized) block maps (B, L, d) to (B, L, d) and is not the identity."""
    block = AdbBlock(8, 2, 2, 8, make_rng(0))
    randomize_parameters(block, 1, 0.3)
    x, cond, step = _block_inputs(rng)
    out = adb_forward(block, x, cond, step, positions=np.arange(3))
    assert out.shape == (2, 3, 8)
    assert not np.allclose(out.data, x.data)


@pytest.mark.slow
def test_block_gradients(
    rng: np.random.Generator, randomize_parameters: Callable[[Module, int, float], None]
) -> None:
    """Finite differences agree with backprop through a randomized block (d=8, 2 heads, 3 tokens)."""
    block = AdbBlock(8, 2, 2, 8, make_rng(0))
    randomize_parameters(block, 2, 0.3)
    x, cond, step = _block_inputs(rng)
    x.requires_grad = True
    gen = make_rng(5)
    c = gen.standard_normal((2, 3, 8)) + 1j * gen.standard_normal((2, 3, 8))

    def loss() -> Tensor:
        out = block(x, cond, step, positions=np.arange(3))
        return (out * Tensor(c)).real().sum()

    error = gradcheck(loss, [*block.parameters(), x])
    assert error <= 1e-4
