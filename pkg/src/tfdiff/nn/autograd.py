"""Reverse-mode differentiation over numpy arrays with complex support.

A :class:`Tensor` records the operation that produced it. ``backward`` walks
the recorded graph in reverse topological order.

Gradient convention: for a real scalar loss L and a complex entry
``z = a + jb`` the stored gradient is ``dL/da + j dL/db``. The real and
imaginary parts of every complex parameter therefore behave as independent
real coordinates. For a holomorphic op ``w = f(z)`` this gives
``grad_z = conj(f'(z)) * grad_w``. Real tensors keep only the real part of
what flows into them.
"""

import logging
import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715

_state = threading.local()


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    previous = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


def _grad_enabled() -> bool:
    return bool(getattr(_state, "enabled", True))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _swap_last(arr: np.ndarray) -> np.ndarray:
    return np.swapaxes(arr, -1, -2)


def _is_basic_index(index: Any) -> bool:
    """Slices, ints, Ellipsis and None only: no entry is selected twice."""
    parts = index if isinstance(index, tuple) else (index,)
    return all(
        p is None or p is Ellipsis or isinstance(p, slice | int | np.integer) for p in parts
    )


class Tensor:
    """An array node in the differentiation graph."""

    __array_ufunc__ = None

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        _parents: tuple["Tensor", ...] = (),
        _backward: BackwardFn | None = None,
        _op: str = "",
    ):
        arr = np.asarray(data)
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        self.data: np.ndarray = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._backward = _backward
        self._op = _op

    # -- properties -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        kind = "real" if self.is_real else "complex"
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, {kind}{label}, requires_grad={self.requires_grad})"

    # -- graph construction ----------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple["Tensor", ...], backward: BackwardFn, op: str) -> "Tensor":
        needs_grad = _grad_enabled() and any(p.requires_grad for p in parents)
        if not needs_grad:
            return Tensor(data)
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward, _op=op)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.is_real:
            grad = np.real(grad)
        else:
            grad = grad.astype(np.complex128, copy=False)
        if grad.shape != self.shape:
            raise ValueError(f"Gradient shape {grad.shape} does not match tensor shape {self.shape}")
        self.grad = np.array(grad, copy=True) if self.grad is None else self.grad + grad

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients into every leaf that requires them.

        Args:
            grad: Upstream gradient; defaults to 1 for a scalar output

        Raises:
            ValueError: If no grad is given for a non-scalar output
        """
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones(self.shape, dtype=np.float64)
        if not self.requires_grad:
            return

        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

        pending: dict[int, np.ndarray] = {id(self): np.asarray(grad)}
        for node in reversed(order):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g), strict=True):
                if pg is None or not parent.requires_grad:
                    continue
                pg = _unbroadcast(np.asarray(pg), parent.shape)
                if parent.is_real:
                    pg = np.real(pg)
                key = id(parent)
                pending[key] = pending[key] + pg if key in pending else pg

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other: Any) -> "Tensor":
        o = as_tensor(other)
        return Tensor._make(self.data + o.data, (self, o), lambda g: (g, g), "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other: Any) -> "Tensor":
        o = as_tensor(other)
        return Tensor._make(self.data - o.data, (self, o), lambda g: (g, -g), "sub")

    def __rsub__(self, other: Any) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: Any) -> "Tensor":
        o = as_tensor(other)
        a, b = self.data, o.data
        return Tensor._make(a * b, (self, o), lambda g: (g * np.conj(b), g * np.conj(a)), "mul")

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        o = as_tensor(other)
        a, b = self.data, o.data
        out = a / b

        def backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return g / np.conj(b), -g * np.conj(out / b)

        return Tensor._make(out, (self, o), backward, "div")

    def __rtruediv__(self, other: Any) -> "Tensor":
        return as_tensor(other) / self

    def __pow__(self, exponent: float) -> "Tensor":
        x = self.data
        out = x**exponent

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            return (g * np.conj(exponent * x ** (exponent - 1)),)

        return Tensor._make(out, (self,), backward, "pow")

    def __matmul__(self, other: Any) -> "Tensor":
        o = as_tensor(other)
        a, b = self.data, o.data
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError(f"matmul needs operands with ndim >= 2, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, np.ndarray | None]:
            grad_a = g @ np.conj(_swap_last(b)) if self.requires_grad else None
            if not o.requires_grad:
                grad_b = None
            elif b.ndim == 2:
                # shared weight: fold the batch axes into one product
                grad_b = np.conj(a.reshape(-1, a.shape[-1])).T @ g.reshape(-1, g.shape[-1])
            else:
                grad_b = np.conj(_swap_last(a)) @ g
            return grad_a, grad_b

        return Tensor._make(a @ b, (self, o), backward, "matmul")

    def __rmatmul__(self, other: Any) -> "Tensor":
        return as_tensor(other) @ self

    # -- elementwise -------------------------------------------------------

    def conj(self) -> "Tensor":
        return Tensor._make(np.conj(self.data), (self,), lambda g: (np.conj(g),), "conj")

    def real(self) -> "Tensor":
        return Tensor._make(np.real(self.data).copy(), (self,), lambda g: (np.real(g),), "real")

    def imag(self) -> "Tensor":
        return Tensor._make(np.imag(self.data).copy(), (self,), lambda g: (1j * np.real(g),), "imag")

    def abs(self) -> "Tensor":
        """Modulus; the gradient at 0 is taken as 0."""
        x = self.data
        r = np.abs(x)

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            safe = np.where(r > 0, r, 1.0)
            return (np.where(r > 0, np.real(g) * x / safe, 0.0),)

        return Tensor._make(r, (self,), backward, "abs")

    def abs2(self) -> "Tensor":
        """Squared modulus ``|z|^2`` (real output)."""
        x = self.data
        return Tensor._make(
            np.real(x * np.conj(x)), (self,), lambda g: (2.0 * np.real(g) * x,), "abs2"
        )

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._make(out, (self,), lambda g: (g * np.conj(out),), "exp")

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)
        return Tensor._make(out, (self,), lambda g: (g / np.conj(2.0 * out),), "sqrt")

    # -- reductions and shape ----------------------------------------------

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward, "sum")

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape: int) -> "Tensor":
        original = self.shape
        return Tensor._make(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(original),), "reshape"
        )

    def swapaxes(self, a: int, b: int) -> "Tensor":
        return Tensor._make(
            np.swapaxes(self.data, a, b), (self,), lambda g: (np.swapaxes(g, a, b),), "swapaxes"
        )

    def __getitem__(self, index: Any) -> "Tensor":
        shape = self.shape

        basic = _is_basic_index(index)

        def backward(g: np.ndarray) -> tuple[np.ndarray]:
            full = np.zeros(shape, dtype=g.dtype)
            if basic:
                full[index] = g
            else:
                np.add.at(full, index, g)
            return (full,)

        return Tensor._make(self.data[index], (self,), backward, "getitem")


def as_tensor(value: Any) -> Tensor:
    """Wrap constants; tensors pass through."""
    return value if isinstance(value, Tensor) else Tensor(value)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``."""
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.shape[axis] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._make(
        np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward, "concat"
    )


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax of a real tensor along ``axis``."""
    if not x.is_real:
        raise ValueError("softmax expects a real tensor")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        g = np.real(g)
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._make(y, (x,), backward, "softmax")


def _gelu_tanh(x: np.ndarray) -> np.ndarray:
    return np.tanh(_GELU_C * x * (1.0 + _GELU_A * (x * x)))


def _gelu_grad(x: np.ndarray, th: np.ndarray) -> np.ndarray:
    # th is the forward tanh term
    sech2 = 1.0 - th * th
    return 0.5 * (1.0 + th) + (0.5 * _GELU_C) * x * sech2 * (1.0 + (3.0 * _GELU_A) * (x * x))


def gelu(x: Tensor) -> Tensor:
    """GELU (tanh form) applied separately to real and imaginary parts."""
    data = x.data
    if x.is_real:
        th = _gelu_tanh(data)
        return Tensor._make(
            0.5 * data * (1.0 + th), (x,), lambda g: (np.real(g) * _gelu_grad(data, th),), "gelu"
        )
    re, im = data.real, data.imag
    th_re, th_im = _gelu_tanh(re), _gelu_tanh(im)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.empty(g.shape, dtype=np.complex128)
        grad.real = g.real * _gelu_grad(re, th_re)
        grad.imag = g.imag * _gelu_grad(im, th_im)
        return (grad,)

    out = np.empty(data.shape, dtype=np.complex128)
    out.real = 0.5 * re * (1.0 + th_re)
    out.imag = 0.5 * im * (1.0 + th_im)
    return Tensor._make(out, (x,), backward, "gelu")


def phase(z: Tensor) -> Tensor:
    """Unit phasor ``z / |z|``; zero entries map to 0 with zero gradient."""
    data = z.data
    r = np.abs(data)
    nonzero = r > 0
    safe = np.where(nonzero, r, 1.0)
    u = np.where(nonzero, data / safe, 0.0)

    def backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = (g - np.conj(g) * u**2) / (2.0 * safe)
        return (np.where(nonzero, grad, 0.0),)

    return Tensor._make(u.astype(np.complex128), (z,), backward, "phase")


def gradcheck(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
) -> float:
    """Compare analytic gradients with central finite differences.

    Every real coordinate (real and imaginary part of complex entries) of
    every parameter is perturbed by ``±h``.

    Args:
        loss_fn: Recomputes a real scalar loss from the current parameter data
        params: Leaf tensors with ``requires_grad=True``
        h: Perturbation size

    Returns:
        Largest norm-wise relative error over the parameters
    """
    for p in params:
        p.zero_grad()
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = np.zeros(p.shape, dtype=p.data.dtype) if p.grad is None else p.grad
        numeric = np.zeros_like(analytic)
        flat = p.data.reshape(-1)
        units = (1.0,) if p.is_real else (1.0, 1j)
        for i in range(flat.size):
            original = flat[i]
            for unit in units:
                flat[i] = original + h * unit
                up = float(np.real(loss_fn().data))
                flat[i] = original - h * unit
                down = float(np.real(loss_fn().data))
                flat[i] = original
                numeric.reshape(-1)[i] += unit * (up - down) / (2.0 * h)
        scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-8)
        error = float(np.linalg.norm(analytic - numeric)) / scale
        if error > worst:
            worst = error
        logger.debug(f"gradcheck {p.name or p.shape}: relative error {error:.3e}")
    return worst
