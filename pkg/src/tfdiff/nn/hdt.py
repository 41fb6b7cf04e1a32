"""Hierarchical diffusion transformer.

Stage 1 (spatial denoising) treats every temporal sample independently:
its M spatial entries are embedded as M tokens and refined with shared
weights. Stage 2 (time-frequency deblurring) treats the N denoised samples
as one token sequence with PME positions ``0..N-1``. Both stages add their
output to a skip path through zero-initialized projections, so a fresh
model returns ``x_t`` unchanged.
"""

import logging
from collections.abc import Sequence

import numpy as np

from tfdiff.config import ModelConfig
from tfdiff.errors import ConditionError, InvalidSignalError
from tfdiff.models import ConditionLabel
from tfdiff.nn.autograd import Tensor, concat, gelu, no_grad
from tfdiff.nn.layers import AdbBlock, Linear, Module, parameter, xavier_uniform
from tfdiff.signal.sequence import ComplexSequence
from tfdiff.utils import make_rng

logger = logging.getLogger(__name__)


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal features of integer steps, shape (B, dim)."""
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / half)
    args = np.asarray(t, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(args), np.cos(args)], axis=1)


class StepEmbedding(Module):
    """Sinusoidal step features followed by a two-layer real network."""

    def __init__(self, embed_dim: int, dim: int, rng: np.random.Generator):
        self.embed_dim = embed_dim
        self.fc1 = Linear(embed_dim, dim, rng, complex_valued=False)
        self.fc2 = Linear(dim, dim, rng, complex_valued=False)

    def __call__(self, t: np.ndarray) -> Tensor:
        features = Tensor(sinusoidal_embedding(t, self.embed_dim))
        return self.fc2(gelu(self.fc1(features)))


class ConditionEmbedding(Module):
    """One learned table per condition field plus an always-present null token."""

    def __init__(self, vocab: dict[str, list[str]], dim: int, rng: np.random.Generator):
        self.vocab = {field: list(values) for field, values in sorted(vocab.items())}
        self.null = parameter(xavier_uniform(rng, 1, dim, (1, dim), True))
        self.tables = {
            field: parameter(xavier_uniform(rng, len(values), dim, (len(values), dim), True))
            for field, values in self.vocab.items()
        }

    @property
    def fields(self) -> list[str]:
        return list(self.vocab)

    def encode(self, label: ConditionLabel) -> list[int]:
        """Map a label to one table index per field.

        Raises:
            ConditionError: If a field is missing, unknown, or has an unseen value
        """
        unknown = sorted(set(label.values) - set(self.vocab))
        if unknown:
            raise ConditionError(f"Unknown condition field(s) {unknown}; model knows {self.fields}")
        indices = []
        for field, values in self.vocab.items():
            if field not in label.values:
                raise ConditionError(f"Condition is missing field '{field}'")
            value = label.values[field]
            if value not in values:
                raise ConditionError(
                    f"Unknown value '{value}' for condition field '{field}'; expected one of {values}"
                )
            indices.append(values.index(value))
        return indices

    def encode_batch(self, labels: Sequence[ConditionLabel]) -> np.ndarray:
        return np.asarray([self.encode(label) for label in labels], dtype=np.int64).reshape(
            len(labels), len(self.vocab)
        )

    def __call__(self, indices: np.ndarray) -> Tensor:
        """Condition tokens of shape (B, F + 1, d)."""
        batch = indices.shape[0]
        null = self.null[np.zeros(batch, dtype=np.int64)].reshape(batch, 1, self.null.shape[1])
        tokens = [null]
        for column, table in enumerate(self.tables.values()):
            rows = table[indices[:, column]]
            tokens.append(rows.reshape(batch, 1, table.shape[1]))
        return concat(tokens, axis=1)


class HdtModel(Module):
    """Two-stage hierarchical diffusion transformer predicting the posterior mean."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.config = cfg
        rng = make_rng(seed, 0x4D4F444C)
        d = cfg.hidden_dim
        self.step_embedding = StepEmbedding(cfg.step_embed_dim, d, rng)
        self.condition_embedding = ConditionEmbedding(cfg.condition_vocab, d, rng)

        self.spatial_in: Linear | None = None
        self.spatial_blocks: list[AdbBlock] = []
        self.spatial_out: Linear | None = None
        if cfg.hierarchical:
            self.spatial_in = Linear(1, d, rng)
            self.spatial_blocks = [
                AdbBlock(d, cfg.heads, cfg.ff_multiplier, d, rng) for _ in range(cfg.spatial_blocks)
            ]
            self.spatial_out = Linear(d, 1, rng, zero_init=True)

        self.temporal_in = Linear(cfg.spatial_dim, d, rng)
        self.temporal_blocks = [
            AdbBlock(d, cfg.heads, cfg.ff_multiplier, d, rng) for _ in range(cfg.temporal_blocks)
        ]
        self.temporal_out = Linear(d, cfg.spatial_dim, rng, zero_init=True)
        logger.info(
            f"HDT initialized: {self.num_parameters()} parameters, "
            f"hierarchical={cfg.hierarchical}, d={d}, heads={cfg.heads}"
        )

    def _check_input(self, x: np.ndarray) -> None:
        cfg = self.config
        if x.ndim != 3 or x.shape[1:] != (cfg.spatial_dim, cfg.temporal_length):
            raise InvalidSignalError(
                f"Expected input of shape (B, {cfg.spatial_dim}, {cfg.temporal_length}), "
                f"got {x.shape}"
            )

    def spatial_denoise(
        self,
        x: Tensor,
        cond: Tensor,
        step: Tensor,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Stage 1: per-sample refinement, (B, M, N) -> (B, M, N)."""
        if self.spatial_in is None or self.spatial_out is None:
            return x
        batch, m, n = x.shape
        owner = np.repeat(np.arange(batch), n)
        tokens = x.swapaxes(1, 2).reshape(batch * n, m, 1)
        h = self.spatial_in(tokens)
        cond_rep = cond[owner]
        step_rep = step[owner]
        positions = np.arange(m)
        for block in self.spatial_blocks:
            h = block(h, cond_rep, step_rep, positions, dropout, rng)
        delta = self.spatial_out(h).reshape(batch, n, m).swapaxes(1, 2)
        return x + delta

    def temporal_deblur(
        self,
        x: Tensor,
        cond: Tensor,
        step: Tensor,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Stage 2: sequence-level refinement over the N samples, (B, M, N) -> (B, M, N)."""
        n = x.shape[2]
        h = self.temporal_in(x.swapaxes(1, 2))
        positions = np.arange(n)
        for block in self.temporal_blocks:
            h = block(h, cond, step, positions, dropout, rng)
        delta = self.temporal_out(h).swapaxes(1, 2)
        return x + delta

    def __call__(
        self,
        x_t: np.ndarray | Tensor,
        condition_indices: np.ndarray,
        t: np.ndarray,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Predict the posterior mean for a batch.

        Args:
            x_t: Noisy inputs, shape (B, M, N)
            condition_indices: Table indices, shape (B, F)
            t: Diffusion steps, shape (B,)
            dropout: Drop rate (0 disables)
            rng: Generator for dropout masks

        Returns:
            Predicted mean, shape (B, M, N)

        Raises:
            InvalidSignalError: If the input shape does not match the config
        """
        x = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t, dtype=np.complex128))
        self._check_input(x.data)
        step = self.step_embedding(np.asarray(t))
        cond = self.condition_embedding(np.asarray(condition_indices, dtype=np.int64))
        mu_hat = self.spatial_denoise(x, cond, step, dropout, rng)
        return self.temporal_deblur(mu_hat, cond, step, dropout, rng)

    def predict(
        self, x_t: np.ndarray, labels: Sequence[ConditionLabel], t: np.ndarray
    ) -> np.ndarray:
        """Dropout-free prediction without graph recording."""
        indices = self.condition_embedding.encode_batch(labels)
        with no_grad():
            return self(x_t, indices, t).data


def hdt_forward(
    model: HdtModel, x_t: ComplexSequence, c: ConditionLabel, t: int
) -> ComplexSequence:
    """Predicted posterior mean for a single sequence.

    Raises:
        InvalidSignalError: If ``x_t`` does not match the model shape
        ConditionError: If ``c`` is outside the model vocabulary
    """
    out = model.predict(x_t.data[np.newaxis], [c], np.asarray([t]))
    return ComplexSequence(data=out[0])
