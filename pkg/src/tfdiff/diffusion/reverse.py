"""Reverse restoration: posterior, training objective, train step and sampler."""

import logging
import time
from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.special import logsumexp

from tfdiff.config import TrainConfig
from tfdiff.diffusion.forward import complex_normal, destruct_to_batch
from tfdiff.diffusion.schedule import DiffusionSchedule
from tfdiff.errors import ConditionError, InvalidSignalError, NonFiniteLossError
from tfdiff.models import ConditionLabel, LabeledSequence
from tfdiff.nn.autograd import Tensor
from tfdiff.nn.hdt import HdtModel
from tfdiff.nn.optim import AdamW, Ema, clip_grad_norm, learning_rate
from tfdiff.signal.sequence import ComplexSequence

logger = logging.getLogger(__name__)


class PosteriorParams(BaseModel):
    """Mean and per-index std of q(x_{t-1} | x_t, x_0)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    mu_tilde: np.ndarray  # (M, N) complex
    sigma_tilde: np.ndarray  # (N,) real


def _check_posterior_step(t: int, sched: DiffusionSchedule) -> None:
    sched.check_step(t)
    if np.any(sched.sigma_bar[t] == 0.0):
        raise InvalidSignalError(f"Degenerate schedule: sigma_bar[{t}] contains zeros")


def posterior_std(t: int, sched: DiffusionSchedule) -> np.ndarray:
    """``sigma_tilde_{t-1} = sigma_bar_{t-1} * sigma_t / sigma_bar_t``, shape (N,)."""
    _check_posterior_step(t, sched)
    return sched.sigma_bar[t - 1] * sched.sigma[t] / sched.sigma_bar[t]


def posterior_mean(
    x_t: np.ndarray, x0: np.ndarray, t: int | np.ndarray, sched: DiffusionSchedule
) -> np.ndarray:
    """Posterior mean for one step or a batch of steps.

    Args:
        x_t: Noisy signals, shape (..., M, N)
        x0: Clean signals, same shape
        t: A step, or one step per leading batch item
        sched: Schedule

    Returns:
        ``(gamma_t sigma_bar_{t-1}^2 x_t + gamma_bar_{t-1} sigma_t^2 x0) / sigma_bar_t^2``

    Raises:
        StepOutOfRangeError: If any step is outside [1, T]
    """
    steps = np.asarray(t)
    if steps.ndim == 0:
        step = int(steps)
        _check_posterior_step(step, sched)
        if step == 1:
            return np.array(x0, dtype=np.complex128, copy=True)
        gamma = sched.gamma[step]
        sb_prev2 = sched.sigma_bar[step - 1] ** 2
        gb_prev = sched.gamma_bar[step - 1]
        sigma2 = sched.sigma[step] ** 2
        sb2 = sched.sigma_bar[step] ** 2
    else:
        for step in np.unique(steps):
            _check_posterior_step(int(step), sched)
        gamma = sched.gamma[steps][:, None, :]
        sb_prev2 = sched.sigma_bar[steps - 1][:, None, :] ** 2
        gb_prev = sched.gamma_bar[steps - 1][:, None, :]
        sigma2 = (sched.sigma[steps] ** 2)[:, None, None]
        sb2 = sched.sigma_bar[steps][:, None, :] ** 2
    return (gamma * sb_prev2 * x_t + gb_prev * sigma2 * x0) / sb2


def posterior_params(
    x_t: ComplexSequence, x0: ComplexSequence, t: int, sched: DiffusionSchedule
) -> PosteriorParams:
    """Gaussian posterior q(x_{t-1} | x_t, x_0).

    At ``t = 1`` the result is ``(x0, 0)`` exactly.

    Raises:
        StepOutOfRangeError: If t is outside [1, T]
        InvalidSignalError: On shape mismatch or a zero ``sigma_bar[t]``
    """
    if x_t.shape != x0.shape:
        raise InvalidSignalError(f"Shape mismatch: x_t {x_t.shape} vs x0 {x0.shape}")
    if x_t.N != sched.N:
        raise InvalidSignalError(f"Sequence length N={x_t.N} does not match schedule N={sched.N}")
    mu = posterior_mean(x_t.data, x0.data, t, sched)
    sigma = np.zeros(sched.N) if t == 1 else posterior_std(t, sched)
    return PosteriorParams(mu_tilde=mu, sigma_tilde=sigma)


def training_loss(
    mu_pred: ComplexSequence | np.ndarray, mu_tilde: ComplexSequence | np.ndarray
) -> float:
    """Mean squared modulus ``mean |mu_pred - mu_tilde|^2``.

    Raises:
        InvalidSignalError: On shape mismatch
    """
    a = mu_pred.data if isinstance(mu_pred, ComplexSequence) else np.asarray(mu_pred)
    b = mu_tilde.data if isinstance(mu_tilde, ComplexSequence) else np.asarray(mu_tilde)
    if a.shape != b.shape:
        raise InvalidSignalError(f"Shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b) ** 2))


class MeanPredictor(ABC):
    """Anything that predicts the posterior mean of x_{t-1} given x_t and c."""

    @property
    @abstractmethod
    def shape(self) -> tuple[int, int]:
        """(M, N) of the sequences handled."""

    @abstractmethod
    def predict_mean(
        self, x_t: np.ndarray, conditions: Sequence[ConditionLabel], t: int
    ) -> np.ndarray:
        """Predict mu for a batch.

        Args:
            x_t: Noisy sequences, shape (B, M, N)
            conditions: One label per batch item
            t: Current step (1..T)

        Returns:
            Predicted means, shape (B, M, N)

        Raises:
            ConditionError: If a label is not supported
        """

    def validate_condition(self, condition: ConditionLabel) -> None:
        """Raise ConditionError when ``condition`` cannot be sampled."""


class HdtPredictor(MeanPredictor):
    """Adapter exposing an :class:`HdtModel` as a mean predictor."""

    def __init__(self, model: HdtModel):
        self.model = model

    @property
    def shape(self) -> tuple[int, int]:
        cfg = self.model.config
        return (cfg.spatial_dim, cfg.temporal_length)

    def validate_condition(self, condition: ConditionLabel) -> None:
        self.model.condition_embedding.encode(condition)

    def predict_mean(
        self, x_t: np.ndarray, conditions: Sequence[ConditionLabel], t: int
    ) -> np.ndarray:
        steps = np.full(x_t.shape[0], t, dtype=np.int64)
        return self.model.predict(x_t, conditions, steps)


def complex_gaussian_loglik(
    x: np.ndarray, mean: np.ndarray, std: np.ndarray, axes: tuple[int, ...] = (-2, -1)
) -> np.ndarray:
    """Log density of independent CN(mean, std^2) entries, summed over ``axes``.

    ``std`` broadcasts against ``x``; zero-variance entries are not allowed.
    """
    var = np.broadcast_to(np.asarray(std, dtype=np.float64) ** 2, np.shape(x))
    dev = np.abs(x - mean) ** 2
    return np.sum(-dev / var - np.log(np.pi * var), axis=axes)


class PosteriorOracle(MeanPredictor):
    """Exact E[x_{t-1} | x_t, c] for a finite exemplar set.

    The data distribution of each condition is the uniform mixture of its
    exemplars. The posterior mean is the mixture of per-exemplar posterior
    means weighted by ``q(x_t | x0)``.
    """

    def __init__(self, exemplars: Sequence[LabeledSequence], sched: DiffusionSchedule):
        if not exemplars:
            raise InvalidSignalError("PosteriorOracle needs at least one exemplar")
        self.sched = sched
        self.exemplars = list(exemplars)
        self.data = np.stack([e.sequence.data for e in self.exemplars])
        if self.data.shape[2] != sched.N:
            raise InvalidSignalError(
                f"Exemplar length N={self.data.shape[2]} does not match schedule N={sched.N}"
            )
        self._members: dict[ConditionLabel, np.ndarray] = {}
        for i, e in enumerate(self.exemplars):
            self._members.setdefault(e.condition, np.empty(0, dtype=np.int64))
            self._members[e.condition] = np.append(self._members[e.condition], i)

    @property
    def shape(self) -> tuple[int, int]:
        return (int(self.data.shape[1]), int(self.data.shape[2]))

    @property
    def conditions(self) -> list[ConditionLabel]:
        return list(self._members)

    def _candidates(self, condition: ConditionLabel) -> np.ndarray:
        if not condition.values:
            return np.arange(len(self.exemplars))
        if condition not in self._members:
            known = ", ".join(str(c) for c in self._members)
            raise ConditionError(f"No exemplars for condition '{condition}'; known: {known}")
        return self._members[condition]

    def validate_condition(self, condition: ConditionLabel) -> None:
        self._candidates(condition)

    def predict_mean(
        self, x_t: np.ndarray, conditions: Sequence[ConditionLabel], t: int
    ) -> np.ndarray:
        sched = self.sched
        out = np.empty_like(x_t, dtype=np.complex128)
        groups: dict[ConditionLabel, list[int]] = {}
        for item, condition in enumerate(conditions):
            groups.setdefault(condition, []).append(item)
        for condition, items in groups.items():
            cand = self.data[self._candidates(condition)]  # (K, M, N)
            xt = x_t[items][:, None]  # (b, 1, M, N)
            loglik = complex_gaussian_loglik(
                xt, sched.gamma_bar[t] * cand[None], sched.sigma_bar[t]
            )  # (b, K)
            weights = np.exp(loglik - logsumexp(loglik, axis=1, keepdims=True))
            means = posterior_mean(
                np.broadcast_to(xt, (len(items), *cand.shape)),
                np.broadcast_to(cand[None], (len(items), *cand.shape)),
                t,
                sched,
            )  # (b, K, M, N)
            out[items] = np.einsum("bk,bkmn->bmn", weights, means)
        return out


def sample_batch(
    predictor: MeanPredictor,
    conditions: Sequence[ConditionLabel],
    sched: DiffusionSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run the reverse chain for a batch of conditions.

    Starts from ``x_T = sigma_bar_T * eps``; each step sets
    ``x_{t-1} = mu + sigma_tilde_{t-1} * eps``. The last step adds no noise.

    Returns:
        Samples, shape (B, M, N)

    Raises:
        InvalidSignalError: If the predictor shape disagrees with the schedule
        ConditionError: If a condition is not supported by the predictor
    """
    m, n = predictor.shape
    if n != sched.N:
        raise InvalidSignalError(f"Predictor length N={n} does not match schedule N={sched.N}")
    for condition in set(conditions):
        predictor.validate_condition(condition)
    batch = len(conditions)
    x = sched.sigma_bar[sched.T] * complex_normal(rng, (batch, m, n))
    for t in range(sched.T, 0, -1):
        mu = predictor.predict_mean(x, conditions, t)
        if t > 1:
            x = mu + posterior_std(t, sched) * complex_normal(rng, (batch, m, n))
        else:
            x = mu
    return x


def sample(
    predictor: MeanPredictor | HdtModel,
    c: ConditionLabel,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
) -> ComplexSequence:
    """Generate one sequence for condition ``c``."""
    if isinstance(predictor, HdtModel):
        predictor = HdtPredictor(predictor)
    return ComplexSequence(data=sample_batch(predictor, [c], sched, rng)[0])


class TrainingBatch(BaseModel):
    """Clean signals with their encoded conditions."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    x0: np.ndarray  # (B, M, N)
    condition_indices: np.ndarray  # (B, F)
    item_ids: list[str]


class OptimizerState:
    """Mutable optimizer, EMA and step counter owned by one trainer."""

    def __init__(self, model: HdtModel, cfg: TrainConfig):
        self.optimizer = AdamW(
            model,
            beta1=cfg.adam_beta1,
            beta2=cfg.adam_beta2,
            eps=cfg.adam_eps,
            weight_decay=cfg.weight_decay,
        )
        self.ema = Ema(model, cfg.ema_decay)
        self.step = 0


class StepResult(BaseModel):
    """Diagnostics of one optimization step."""

    step: int
    loss: float
    lr: float
    grad_norm: float
    wall_ms: float
    t: list[int]


def train_step(
    model: HdtModel,
    batch: TrainingBatch,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    state: OptimizerState,
    cfg: TrainConfig,
) -> StepResult:
    """One optimization step of the mean-prediction objective.

    Draws an independent step and noise per batch item, corrupts in closed
    form, regresses the model output on the posterior mean, backpropagates,
    clips, applies AdamW and updates the EMA shadow.

    Raises:
        NonFiniteLossError: If the loss or gradient norm is NaN/Inf
    """
    started = time.perf_counter()
    x0 = batch.x0
    size = x0.shape[0]
    t = rng.integers(1, sched.T + 1, size=size)
    eps = complex_normal(rng, x0.shape)
    x_t = destruct_to_batch(x0, t, sched, eps)
    mu_tilde = posterior_mean(x_t, x0, t, sched)

    model.zero_grad()
    mu_pred = model(x_t, batch.condition_indices, t, dropout=cfg.dropout, rng=rng)
    loss = (mu_pred - Tensor(mu_tilde)).abs2().mean()
    loss_value = float(loss.data)

    diagnostics: dict[str, Any] = {"t": t.tolist(), "items": batch.item_ids}
    if not np.isfinite(loss_value):
        raise NonFiniteLossError(f"Non-finite loss at step {state.step + 1}", diagnostics)

    loss.backward()
    grad_norm = clip_grad_norm(model, cfg.grad_clip)
    if not np.isfinite(grad_norm):
        diagnostics["grad_norms"] = {
            name: float(np.linalg.norm(p.grad)) for name, p in model.named_parameters() if p.grad is not None
        }
        raise NonFiniteLossError(f"Non-finite gradient at step {state.step + 1}", diagnostics)

    lr = learning_rate(state.step, cfg.lr, cfg.lr_decay, cfg.lr_decay_interval)
    state.optimizer.step(lr)
    state.ema.update(model)
    state.step += 1
    wall_ms = (time.perf_counter() - started) * 1000.0
    logger.debug(f"step {state.step}: loss={loss_value:.6f} lr={lr:.3e} grad_norm={grad_norm:.4f}")
    return StepResult(
        step=state.step,
        loss=loss_value,
        lr=lr,
        grad_norm=grad_norm,
        wall_ms=wall_ms,
        t=t.tolist(),
    )
