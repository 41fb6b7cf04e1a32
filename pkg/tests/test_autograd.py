"""Tests for the reverse-mode differentiation engine."""

from collections.abc import Callable

import numpy as np
import pytest

from tfdiff.nn.autograd import Tensor, concat, gelu, gradcheck, no_grad, phase, softmax
from tfdiff.utils import make_rng

OpCase = Callable[[list[Tensor]], Tensor]


def _leaf(shape: tuple[int, ...], seed: int, real: bool = False, offset: complex = 0.0) -> Tensor:
    gen = make_rng(seed)
    data = gen.standard_normal(shape)
    if not real:
        data = data + 1j * gen.standard_normal(shape)
    return Tensor(data * 0.5 + offset, requires_grad=True)


def _projection_loss(out: Tensor, seed: int = 77) -> Tensor:
    """Real scalar that depends on every output entry: Re(sum(out * c)) + 0.1 sum |out|^2."""
    gen = make_rng(seed)
    c = gen.standard_normal(out.shape) + 1j * gen.standard_normal(out.shape)
    return (out * Tensor(c)).real().sum() + out.abs2().sum() * 0.1


CASES: dict[str, tuple[OpCase, list[Tensor]]] = {
    "mul": (lambda p: p[0] * p[1], [_leaf((3, 4), 1), _leaf((3, 4), 2)]),
    "div": (lambda p: p[0] / p[1], [_leaf((3, 4), 3), _leaf((3, 4), 4, offset=2.0)]),
    "broadcast_add": (lambda p: p[0] + p[1], [_leaf((3, 4), 5), _leaf((4,), 6)]),
    "sub_real_complex": (lambda p: p[0] - p[1], [_leaf((2, 3), 7, real=True), _leaf((2, 3), 8)]),
    "matmul": (lambda p: p[0] @ p[1], [_leaf((3, 4), 9), _leaf((4, 2), 10)]),
    "batched_matmul": (lambda p: p[0] @ p[1], [_leaf((2, 3, 4), 11), _leaf((4, 2), 12)]),
    "conj": (lambda p: p[0].conj() * p[1], [_leaf((5,), 13), _leaf((5,), 14)]),
    "exp": (lambda p: p[0].exp(), [_leaf((2, 3), 15)]),
    "sqrt": (lambda p: p[0].sqrt(), [_leaf((2, 3), 16, offset=3.0)]),
    "pow": (lambda p: p[0] ** 3, [_leaf((2, 3), 17)]),
    "abs": (lambda p: p[0].abs(), [_leaf((2, 3), 18, offset=0.5 + 0.5j)]),
    "real_imag": (lambda p: p[0].real() * p[0].imag(), [_leaf((4,), 19)]),
    "phase": (lambda p: phase(p[0]), [_leaf((3, 3), 20, offset=1.0)]),
    "softmax": (lambda p: softmax(p[0], axis=-1), [_leaf((3, 5), 21, real=True)]),
    "gelu_complex": (lambda p: gelu(p[0]), [_leaf((2, 4), 22)]),
    "gelu_real": (lambda p: gelu(p[0]), [_leaf((2, 4), 23, real=True)]),
    "shape_ops": (
        lambda p: concat([p[0].reshape(2, 6).swapaxes(0, 1), p[1]], axis=1)[1:5].mean(axis=0),
        [_leaf((3, 4), 24), _leaf((6, 2), 25)],
    ),
    "sum_keepdims": (lambda p: p[0] / p[0].sum(axis=1, keepdims=True), [_leaf((2, 3), 26, offset=2.0)]),
    "index_repeat": (lambda p: p[0][np.array([0, 2, 0])], [_leaf((3, 2), 27)]),
    "index_basic": (lambda p: p[0][..., 1:3][0], [_leaf((2, 3, 4), 28)]),
    "matmul_real_weight": (lambda p: p[0] @ p[1], [_leaf((2, 3, 4), 29), _leaf((4, 2), 30, real=True)]),
    "gelu_wide": (lambda p: gelu(p[0] * 4.0), [_leaf((3, 4), 31)]),
}


@pytest.mark.parametrize("name", sorted(CASES))
def test_op_gradients_match_finite_differences(name: str) -> None:
    """Analytic gradients of every primitive agree with central differences."""
    op, params = CASES[name]
    error = gradcheck(lambda: _projection_loss(op(params)), params)
    assert error < 1e-6


def test_gradient_convention_squared_modulus() -> None:
    """The stored gradient of |z|^2 is dL/da + j dL/db = 2z."""
    z = Tensor(np.array([3.0 + 4.0j]), requires_grad=True)
    z.abs2().sum().backward()
    assert z.grad is not None
    np.testing.assert_allclose(z.grad, [6.0 + 8.0j])


def test_real_leaf_receives_real_gradient() -> None:
    """Real parameters keep real gradients even inside complex graphs."""
    w = Tensor(np.array([0.5, -1.0]), requires_grad=True)
    x = Tensor(np.array([1.0 + 2.0j, -1.0j]))
    (w * x).abs2().sum().backward()
    assert w.grad is not None
    assert not np.iscomplexobj(w.grad)
    np.testing.assert_allclose(w.grad, 2.0 * w.data * np.abs(x.data) ** 2)


def test_gradients_accumulate_over_reuse() -> None:
    """A tensor used twice gets the sum of both contributions."""
    x = Tensor(np.array([2.0]), requires_grad=True)
    (x * x + x).sum().backward()
    assert x.grad is not None
    np.testing.assert_allclose(x.grad, [5.0])


def test_no_grad_records_nothing() -> None:
    """Inside no_grad results are plain constants."""
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        y = x * 2.0
    assert not y.requires_grad
    z = x * 2.0
    assert z.requires_grad


def test_backward_requires_scalar_or_gradient() -> None:
    """Non-scalar outputs need an explicit upstream gradient."""
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ValueError, match="scalar"):
        (x * 2.0).backward()
    (x * 2.0).backward(np.ones(3))
    assert x.grad is not None
    np.testing.assert_allclose(x.grad, 2.0)


def test_softmax_rejects_complex() -> None:
    """softmax is defined on real scores only."""
    with pytest.raises(ValueError, match="real"):
        softmax(Tensor(np.array([1.0j])))


def test_phase_of_zero_is_zero() -> None:
    """phase(0) is 0 with zero gradient."""
    z = Tensor(np.array([0.0 + 0.0j, 2.0j]), requires_grad=True)
    out = phase(z)
    np.testing.assert_allclose(out.data, [0.0, 1.0j])
    out.real().sum().backward()
    assert z.grad is not None
    assert z.grad[0] == 0.0


def test_matmul_shape_errors() -> None:
    """matmul validates operand shapes."""
    with pytest.raises(ValueError, match="mismatch"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))
    with pytest.raises(ValueError, match="ndim"):
        Tensor(np.ones(3)) @ Tensor(np.ones((3, 1)))


def test_numpy_operand_on_the_left() -> None:
    """ndarray @ Tensor and ndarray * Tensor dispatch to the tensor."""
    x = Tensor(np.eye(2), requires_grad=True)
    out = np.ones((1, 2)) @ x
    assert isinstance(out, Tensor)
    scaled = np.full((2, 2), 3.0) * x
    assert isinstance(scaled, Tensor)
    np.testing.assert_allclose(scaled.data, 3.0 * np.eye(2))


def test_gelu_values() -> None:
    """Split GELU matches the tanh formula on each part."""
    x = np.array([-3.0, -0.5, 0.0, 0.7, 2.5])
    expected = 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))
    np.testing.assert_allclose(gelu(Tensor(x)).data, expected, rtol=1e-12, atol=1e-15)
    z = gelu(Tensor(x + 1j * x[::-1])).data
    np.testing.assert_allclose(z.real, expected, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(z.imag, expected[::-1], rtol=1e-12, atol=1e-15)


def test_matmul_constant_operand_gets_no_gradient() -> None:
    """Only operands that require gradients receive them."""
    x = Tensor(np.ones((2, 3, 4)))
    w = Tensor(np.full((4, 2), 0.5), requires_grad=True)
    (x @ w).sum().backward()
    assert x.grad is None
    assert w.grad is not None
    np.testing.assert_allclose(w.grad, np.full((4, 2), 6.0))
