"""AdamW, gradient clipping, step-decay learning rate and EMA shadow weights."""

import logging

import numpy as np

from tfdiff.constants import Train
from tfdiff.nn.layers import Module

logger = logging.getLogger(__name__)


def _real_view(arr: np.ndarray) -> np.ndarray:
    """float64 view of a contiguous array; complex entries become (re, im) pairs."""
    arr = np.ascontiguousarray(arr)
    return arr.view(np.float64) if np.iscomplexobj(arr) else arr


class AdamW:
    """Adaptive-moment optimizer with decoupled weight decay.

    Moments are kept per real coordinate, so the real and imaginary parts of
    complex parameters are updated independently.
    """

    def __init__(
        self,
        model: Module,
        beta1: float = Train.ADAM_BETA1,
        beta2: float = Train.ADAM_BETA2,
        eps: float = Train.ADAM_EPS,
        weight_decay: float = Train.WEIGHT_DECAY,
    ):
        self.model = model
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self.m = {name: np.zeros_like(_real_view(p.data)) for name, p in model.named_parameters()}
        self.v = {name: np.zeros_like(_real_view(p.data)) for name, p in model.named_parameters()}

    def step(self, lr: float) -> None:
        """Apply one update using the accumulated gradients."""
        self.steps += 1
        correction1 = 1.0 - self.beta1**self.steps
        correction2 = 1.0 - self.beta2**self.steps
        for name, p in self.model.named_parameters():
            if p.grad is None:
                continue
            grad = _real_view(p.grad)
            data = p.data.view(np.float64) if np.iscomplexobj(p.data) else p.data
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad**2
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            data -= lr * (update + self.weight_decay * data)

    def state_dict(self) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray], int]:
        return (
            {k: v.copy() for k, v in self.m.items()},
            {k: v.copy() for k, v in self.v.items()},
            self.steps,
        )

    def load_state_dict(
        self, m: dict[str, np.ndarray], v: dict[str, np.ndarray], steps: int
    ) -> None:
        """Restore moments.

        Raises:
            KeyError: If a parameter's moments are missing
        """
        for name in self.m:
            if name not in m or name not in v:
                raise KeyError(f"Missing optimizer state for '{name}'")
            self.m[name][...] = m[name]
            self.v[name][...] = v[name]
        self.steps = steps


def global_grad_norm(model: Module) -> float:
    total = 0.0
    for p in model.parameters():
        if p.grad is not None:
            total += float(np.sum(np.abs(p.grad) ** 2))
    return float(np.sqrt(total))


def clip_grad_norm(model: Module, max_norm: float | None) -> float:
    """Scale gradients so their global norm is at most ``max_norm``.

    Returns:
        The norm before clipping
    """
    norm = global_grad_norm(model)
    if max_norm is not None and norm > max_norm and np.isfinite(norm):
        factor = max_norm / norm
        for p in model.parameters():
            if p.grad is not None:
                p.grad = p.grad * factor
    return norm


def learning_rate(step: int, base_lr: float, decay: float, interval: int) -> float:
    """Step decay: ``base_lr * decay ** (step // interval)``."""
    return base_lr * decay ** (step // interval)


class Ema:
    """Exponential moving average of model weights."""

    def __init__(self, model: Module, decay: float = Train.EMA_DECAY):
        if not 0.0 <= decay < 1.0:
            raise ValueError(f"EMA decay must be in [0, 1), got {decay}")
        self.decay = decay
        self.shadow = model.state_dict()

    def update(self, model: Module) -> None:
        """``shadow <- decay * shadow + (1 - decay) * weights``."""
        d = self.decay
        for name, p in model.named_parameters():
            shadow = self.shadow[name]
            shadow *= d
            shadow += (1.0 - d) * p.data

    def copy_to(self, model: Module) -> None:
        model.load_state_dict(self.shadow)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.shadow.items()}

    def load_state_dict(self, shadow: dict[str, np.ndarray]) -> None:
        missing = set(self.shadow) - set(shadow)
        if missing:
            raise KeyError(f"Missing EMA weights for {sorted(missing)}")
        for name in self.shadow:
            self.shadow[name][...] = shadow[name]
