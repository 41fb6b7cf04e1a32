"""Complex-valued building blocks: linear maps, activation, attention, PME, adaLN."""

import logging
from collections.abc import Iterator

import numpy as np

from tfdiff.constants import Model
from tfdiff.nn.autograd import Tensor, as_tensor, gelu, phase, softmax

logger = logging.getLogger(__name__)


class Module:
    """Parameter container with recursive name discovery.

    Parameters are leaf tensors with ``requires_grad=True`` stored as
    attributes; submodules may be attributes or lists of modules. Names
    follow attribute insertion order, so they are stable across runs.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for attr, value in vars(self).items():
            name = f"{prefix}{attr}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, dict):
                for key, item in value.items():
                    if isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{key}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{key}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self) -> int:
        """Number of scalar entries (a complex entry counts once)."""
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """Copy arrays into the parameters in place.

        Raises:
            KeyError: If a parameter is missing from ``state``
            ValueError: If a shape or dtype kind differs
        """
        for name, p in self.named_parameters():
            if name not in state:
                raise KeyError(f"Missing parameter '{name}'")
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"Parameter '{name}' has shape {value.shape}, expected {p.shape}")
            if np.iscomplexobj(value) and p.is_real:
                raise ValueError(f"Parameter '{name}' is real but got complex values")
            p.data[...] = value


def xavier_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...], complex_valued: bool
) -> np.ndarray:
    """Uniform in ±sqrt(6 / (fan_in + fan_out)), drawn per real coordinate."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    re = rng.uniform(-limit, limit, size=shape)
    if not complex_valued:
        return re
    im = rng.uniform(-limit, limit, size=shape)
    return re + 1j * im


def parameter(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, copy=True), requires_grad=True, name=name)


def complex_linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + b`` over the last axis.

    Raises:
        ValueError: If the inner dimensions disagree
    """
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"complex_linear shape mismatch: input {x.shape}, weight {w.shape}")
    if x.ndim == 1:
        x = x.reshape(1, x.shape[0])
        out = x @ w
        out = out.reshape(w.shape[1])
    else:
        out = x @ w
    return out if b is None else out + b


def complex_activation(x: Tensor) -> Tensor:
    """Split GELU: ``gelu(Re x) + j gelu(Im x)``."""
    return gelu(x)


def complex_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Magnitude-softmax attention with phase-preserving weights.

    Scores are Hermitian products ``s_ij = q_i^H k_j / sqrt(d)``; the weight
    is ``softmax_j(|s_ij|) * exp(j angle(s_ij))``.

    Args:
        q: Queries, shape (..., Lq, d)
        k: Keys, shape (..., Lk, d)
        v: Values, shape (..., Lk, dv)
        dropout: Drop rate applied to the weights
        rng: Generator for the dropout mask

    Returns:
        Attended values, shape (..., Lq, dv)

    Raises:
        ValueError: If head dimensions or key/value lengths disagree
    """
    if q.shape[-1] != k.shape[-1]:
        raise ValueError(f"Query/key dimension mismatch: {q.shape} vs {k.shape}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"Key/value length mismatch: {k.shape} vs {v.shape}")
    scores = attention_scores(q, k)
    weights = softmax(scores.abs(), axis=-1) * phase(scores)
    weights = dropout_layer(weights, dropout, rng)
    return weights @ v


def attention_scores(q: Tensor, k: Tensor) -> Tensor:
    """Scaled Hermitian score matrix ``conj(q) @ k^T / sqrt(d)``."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    return (q.conj() @ k.swapaxes(-1, -2)) * scale


def pme_angles(positions: np.ndarray, d: int, base: float = Model.PME_BASE) -> np.ndarray:
    """Rotation angles ``n * theta_i`` with ``theta_i = base^(-i/d)``, shape (L, d)."""
    theta = base ** (-np.arange(d, dtype=np.float64) / d)
    return np.asarray(positions, dtype=np.float64)[:, None] * theta[None, :]


def pme_encode(x: Tensor, positions: np.ndarray | int, base: float = Model.PME_BASE) -> Tensor:
    """Phase modulation encoding: rotate feature i at position n by ``n * theta_i``.

    Args:
        x: Tokens, shape (..., L, d), or a single token of shape (d,)
        positions: One position per token (length L), or a scalar for one token
        base: Frequency base

    Returns:
        Rotated tokens with unchanged magnitudes
    """
    d = x.shape[-1]
    pos = np.atleast_1d(np.asarray(positions))
    rotation = np.exp(1j * pme_angles(pos, d, base))
    if x.ndim == 1:
        rotation = rotation[0]
    return x * rotation


def dropout_layer(x: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout with one real mask shared by real and imaginary parts."""
    if rate <= 0.0 or rng is None:
        return x
    keep = rng.random(x.shape) >= rate
    return x * (keep / (1.0 - rate))


def ada_layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = Model.NORM_EPS) -> Tensor:
    """Normalize each token over its 2d real coordinates, then ``scale * x + shift``.

    Args:
        x: Tokens, shape (..., L, d)
        scale: Complex scale broadcastable to ``x`` (e.g. (B, 1, d))
        shift: Complex shift broadcastable to ``x``
        eps: Variance floor
    """
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = centered.abs2().mean(axis=-1, keepdims=True) * 0.5
    normed = centered / (var + eps).sqrt()
    return normed * scale + shift


class Linear(Module):
    """Complex (or real) affine layer with uniform initialization."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: np.random.Generator,
        complex_valued: bool = True,
        zero_init: bool = False,
        bias: bool = True,
    ):
        shape = (in_dim, out_dim)
        dtype = np.complex128 if complex_valued else np.float64
        if zero_init:
            w = np.zeros(shape, dtype=dtype)
        else:
            w = xavier_uniform(rng, in_dim, out_dim, shape, complex_valued)
        self.weight = parameter(w)
        self.bias = parameter(np.zeros(out_dim, dtype=dtype)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return complex_linear(x, self.weight, self.bias)


class FeedForward(Module):
    """Two linear layers with the split activation between them."""

    def __init__(self, dim: int, multiplier: int, rng: np.random.Generator):
        self.up = Linear(dim, dim * multiplier, rng)
        self.down = Linear(dim * multiplier, dim, rng, zero_init=True)

    def __call__(
        self, x: Tensor, dropout: float = 0.0, rng: np.random.Generator | None = None
    ) -> Tensor:
        h = dropout_layer(complex_activation(self.up(x)), dropout, rng)
        return self.down(h)


class MultiHeadAttention(Module):
    """Complex multi-head attention; keys and values come from ``context`` when given."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        if dim % heads:
            raise ValueError(f"dim ({dim}) must be divisible by heads ({heads})")
        self.heads = heads
        self.query = Linear(dim, dim, rng)
        self.key = Linear(dim, dim, rng)
        self.value = Linear(dim, dim, rng)
        self.out = Linear(dim, dim, rng, zero_init=True)

    def _split(self, x: Tensor) -> Tensor:
        batch, length, dim = x.shape
        return x.reshape(batch, length, self.heads, dim // self.heads).swapaxes(1, 2)

    def __call__(
        self,
        x: Tensor,
        context: Tensor | None = None,
        positions: np.ndarray | None = None,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Attend from ``x`` (B, L, d) to ``context`` (B, Lc, d) or to itself.

        ``positions`` (length L) applies PME to the per-head queries and keys;
        only meaningful for self-attention.
        """
        source = x if context is None else context
        q = self._split(self.query(x))
        k = self._split(self.key(source))
        v = self._split(self.value(source))
        if positions is not None:
            q = pme_encode(q, positions)
            k = pme_encode(k, positions)
        attended = complex_attention(q, k, v, dropout, rng)
        batch, length = x.shape[0], x.shape[1]
        merged = attended.swapaxes(1, 2).reshape(batch, length, x.shape[2])
        return self.out(merged)


class AdaLayerNorm(Module):
    """Layer norm whose scale and shift are regressed from the step embedding."""

    def __init__(self, dim: int, cond_dim: int):
        self.dim = dim
        self.weight = parameter(np.zeros((cond_dim, 2 * dim), dtype=np.complex128))
        bias = np.zeros(2 * dim, dtype=np.complex128)
        bias[:dim] = 1.0
        self.bias = parameter(bias)

    def __call__(self, x: Tensor, step_emb: Tensor) -> Tensor:
        """Normalize ``x`` (B, L, d) with scale/shift from ``step_emb`` (B, c)."""
        params = complex_linear(step_emb, self.weight, self.bias)
        batch = params.shape[0]
        params = params.reshape(batch, 1, 2 * self.dim)
        scale = params[:, :, : self.dim]
        shift = params[:, :, self.dim :]
        return ada_layer_norm(x, scale, shift)


class AdbBlock(Module):
    """Attention-based diffusion block.

    ``x -> adaLN -> self-attention (PME) -> +x -> adaLN -> cross-attention
    -> +x -> adaLN -> feed-forward -> +x``. Every branch ends in a
    zero-initialized projection, so a fresh block is the identity map.
    """

    def __init__(
        self,
        dim: int,
        heads: int,
        ff_multiplier: int,
        cond_dim: int,
        rng: np.random.Generator,
    ):
        self.norm_self = AdaLayerNorm(dim, cond_dim)
        self.self_attention = MultiHeadAttention(dim, heads, rng)
        self.norm_cross = AdaLayerNorm(dim, cond_dim)
        self.cross_attention = MultiHeadAttention(dim, heads, rng)
        self.norm_ff = AdaLayerNorm(dim, cond_dim)
        self.feed_forward = FeedForward(dim, ff_multiplier, rng)

    def __call__(
        self,
        x: Tensor,
        cond_emb: Tensor,
        step_emb: Tensor,
        positions: np.ndarray | None = None,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Run the block.

        Args:
            x: Tokens, shape (B, L, d)
            cond_emb: Condition tokens, shape (B, F, d)
            step_emb: Step embedding, shape (B, c)
            positions: PME positions for self-attention (length L)
            dropout: Drop rate on attention weights and feed-forward activations
            rng: Generator for dropout masks

        Returns:
            Tokens of the same shape as ``x``
        """
        h = self.norm_self(x, step_emb)
        x = x + self.self_attention(h, positions=positions, dropout=dropout, rng=rng)
        h = self.norm_cross(x, step_emb)
        x = x + self.cross_attention(h, context=cond_emb, dropout=dropout, rng=rng)
        h = self.norm_ff(x, step_emb)
        return x + self.feed_forward(h, dropout=dropout, rng=rng)


def adb_forward(
    block: AdbBlock,
    x: Tensor,
    cond_emb: Tensor,
    step_emb: Tensor,
    positions: np.ndarray | None = None,
) -> Tensor:
    """Deterministic (dropout-free) block evaluation."""
    return block(as_tensor(x), as_tensor(cond_emb), as_tensor(step_emb), positions)
