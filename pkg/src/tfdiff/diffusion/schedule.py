"""Per-step diffusion coefficients and their convergence checks.

Arrays are indexed by step ``t = 0..T``. Row 0 holds the identity step
(``gamma_bar[0] = 1``, ``sigma_bar[0] = 0``); rows ``1..T`` follow the
linear noise and blur schedules. Vector quantities have one entry per
temporal index ``n``.
"""

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict

from tfdiff.config import ScheduleConfig
from tfdiff.errors import FormatError, ScheduleViolationError, StepOutOfRangeError
from tfdiff.models import ConvergenceReport

logger = logging.getLogger(__name__)


class DiffusionSchedule(BaseModel):
    """Immutable table of schedule coefficients."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    config: ScheduleConfig
    alpha: np.ndarray  # (T+1,)
    beta: np.ndarray  # (T+1,)
    s: np.ndarray  # (T+1,) frequency-domain blur std
    g: np.ndarray  # (T+1, N) time-domain blur kernel
    gamma: np.ndarray  # (T+1, N)
    gamma_bar: np.ndarray  # (T+1, N)
    sigma_bar: np.ndarray  # (T+1, N)

    def model_post_init(self, __context: Any) -> None:
        for name in ("alpha", "beta", "s", "g", "gamma", "gamma_bar", "sigma_bar"):
            getattr(self, name).setflags(write=False)

    @property
    def T(self) -> int:
        return self.config.T

    @property
    def N(self) -> int:
        return self.config.N

    @property
    def sigma(self) -> np.ndarray:
        """Per-step noise std (equal to beta)."""
        return self.beta

    def check_step(self, t: int, low: int = 1) -> None:
        """Raise StepOutOfRangeError unless ``low <= t <= T``."""
        if not low <= t <= self.T:
            raise StepOutOfRangeError(t, low, self.T)

    def spectral_kernel(self, t: int) -> np.ndarray:
        """Frequency-domain kernel G_t with unit DC sum.

        Under the unitary DFT, multiplying by ``g_t`` in time equals cyclic
        convolution of the spectrum with ``fft(g_t) / N``.
        """
        self.check_step(t)
        return np.fft.fft(self.g[t]) / self.N

    def to_json_dict(self) -> dict[str, Any]:
        """Audit dump: config plus every per-step array."""
        return {
            "config": self.config.model_dump(),
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "s": self.s.tolist(),
            "g": self.g.tolist(),
            "gamma": self.gamma.tolist(),
            "gamma_bar": self.gamma_bar.tolist(),
            "sigma_bar": self.sigma_bar.tolist(),
        }

    @classmethod
    def from_json_dict(cls, payload: dict[str, Any]) -> "DiffusionSchedule":
        """Rebuild a schedule from :meth:`to_json_dict` output.

        Raises:
            FormatError: If fields are missing or shapes disagree with the config
        """
        try:
            config = ScheduleConfig.model_validate(payload["config"])
            arrays = {
                name: np.asarray(payload[name], dtype=np.float64)
                for name in ("alpha", "beta", "s", "g", "gamma", "gamma_bar", "sigma_bar")
            }
        except (KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Invalid schedule dump: {e}") from e
        steps = config.T + 1
        for name, arr in arrays.items():
            expected = (steps,) if name in ("alpha", "beta", "s") else (steps, config.N)
            if arr.shape != expected:
                raise FormatError(f"Schedule field '{name}' has shape {arr.shape}, expected {expected}")
        return cls(config=config, **arrays)


def _linear(start: float, end: float, steps: int) -> np.ndarray:
    """Inclusive linear ramp over t = 1..steps."""
    return np.linspace(start, end, steps, dtype=np.float64)


def blur_kernel(s: np.ndarray, n: int) -> np.ndarray:
    """Time-domain dual of a unit-DC Gaussian frequency kernel.

    Args:
        s: Blur std per step, shape (K,)
        n: Temporal length

    Returns:
        Kernel of shape (K, n) with ``g[:, 0] == 1``
    """
    idx = np.arange(n)
    distance = np.minimum(idx, n - idx).astype(np.float64)
    return np.exp(-0.5 * (2.0 * np.pi * s[:, None] * distance[None, :] / n) ** 2)


def gamma_violations(gamma: np.ndarray) -> list[tuple[int, int]]:
    """(t, n) pairs with gamma outside the open interval (0, 1), for t >= 1."""
    bad = (gamma[1:] >= 1.0) | (gamma[1:] <= 0.0)
    return [(int(t) + 1, int(n)) for t, n in zip(*np.nonzero(bad), strict=True)]


def build_schedule(cfg: ScheduleConfig, validate: bool = True) -> DiffusionSchedule:
    """Compute every per-step coefficient for ``cfg``.

    Args:
        cfg: Schedule parameters
        validate: Reject schedules that break ``0 < gamma < 1``

    Returns:
        The built schedule

    Raises:
        ScheduleViolationError: If ``validate`` and some gamma[t][n] is outside (0, 1)
    """
    T, N = cfg.T, cfg.N

    if cfg.variant == "blur":
        beta_steps = np.full(T, cfg.beta_start, dtype=np.float64)
    else:
        beta_steps = _linear(cfg.beta_start, cfg.beta_end, T)
    if cfg.variant == "gaussian":
        s_steps = np.zeros(T, dtype=np.float64)
    else:
        s_steps = _linear(cfg.blur_start, cfg.blur_end, T)

    beta = np.concatenate([[0.0], beta_steps])
    s = np.concatenate([[0.0], s_steps])
    alpha = 1.0 - beta**2
    g = blur_kernel(s, N)
    gamma = np.sqrt(alpha)[:, None] * g

    gamma_bar = np.cumprod(gamma, axis=0)
    # Row 0 of gamma is all ones, so the cumulative product starts at 1
    sigma_bar = np.zeros((T + 1, N), dtype=np.float64)
    for t in range(1, T + 1):
        sigma_bar[t] = np.sqrt(gamma[t] ** 2 * sigma_bar[t - 1] ** 2 + beta[t] ** 2)

    if validate:
        violations = gamma_violations(gamma)
        if violations:
            raise ScheduleViolationError("gamma[t][n] must lie in (0, 1)", violations)

    logger.info(
        f"Built {cfg.variant} schedule: T={T}, N={N}, "
        f"gamma_bar[T] max={float(gamma_bar[T].max()):.3e}"
    )
    return DiffusionSchedule(
        config=cfg,
        alpha=alpha,
        beta=beta,
        s=s,
        g=g,
        gamma=gamma,
        gamma_bar=gamma_bar,
        sigma_bar=sigma_bar,
    )


def convergence_bound(sched: DiffusionSchedule) -> np.ndarray:
    """Upper bound on sigma_bar[T]: ``sqrt(1 - alpha_min) / (1 - gamma_max[n])``.

    Entries where ``gamma_max >= 1`` are ``inf`` (no bound).
    """
    alpha_min = float(sched.alpha[1:].min())
    gamma_max = sched.gamma[1:].max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(
            gamma_max < 1.0, np.sqrt(1.0 - alpha_min) / (1.0 - gamma_max), np.inf
        )


def verify_convergence(
    sched: DiffusionSchedule, max_residual: float | None = None
) -> ConvergenceReport:
    """Check that the forward process converges to its closed-form terminal law.

    Checks ``0 < gamma[t][n] < 1`` for every step and index, the elementwise
    bound on ``sigma_bar[T]`` and, when ``max_residual`` is given, that the
    residual signal weight ``max gamma_bar[T]`` does not exceed it.

    Args:
        sched: Built schedule (possibly unvalidated)
        max_residual: Optional tolerance for the residual signal weight

    Returns:
        Structured report; ``passed`` is False on any violation
    """
    T = sched.T
    violations = gamma_violations(sched.gamma)
    condition_ok = not violations
    reasons: list[str] = []
    if not condition_ok:
        reasons.append(f"gamma outside (0, 1) at {len(violations)} (t, n) pairs")

    bound = convergence_bound(sched)
    margin = bound - sched.sigma_bar[T]
    tolerance = 1e-12 * np.maximum(1.0, np.abs(sched.sigma_bar[T]))
    bound_ok = condition_ok and bool(np.all(margin >= -tolerance))
    if condition_ok and not bound_ok:
        bad_n = [int(n) for n in np.nonzero(margin < -tolerance)[0]]
        violations.extend((T, n) for n in bad_n)
        reasons.append(f"sigma_bar[T] exceeds the convergence bound at n={bad_n[:10]}")

    residual = float(sched.gamma_bar[T].max())
    residual_ok = max_residual is None or residual <= max_residual
    if not residual_ok:
        reasons.append(f"gamma_bar[T] max {residual:.3e} exceeds tolerance {max_residual:.3e}")

    report = ConvergenceReport(
        passed=condition_ok and bound_ok and residual_ok,
        T=T,
        N=sched.N,
        variant=sched.config.variant,
        gamma_max=float(sched.gamma[1:].max()),
        condition_ok=condition_ok,
        bound_ok=bound_ok,
        bound_margin_min=float(margin.min()),
        gamma_bar_T_max=residual,
        sigma_bar_T_min=float(sched.sigma_bar[T].min()),
        sigma_bar_T_max=float(sched.sigma_bar[T].max()),
        max_residual=max_residual,
        residual_ok=residual_ok,
        violations=violations,
        reasons=reasons,
    )
    if report.passed:
        logger.info(f"Schedule converges: gamma_bar[T] max={residual:.3e}")
    else:
        logger.warning(f"Schedule failed convergence checks: {'; '.join(reasons)}")
    return report


def dump_schedule(sched: DiffusionSchedule, path: str | Path) -> Path:
    """Write the schedule audit JSON."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(sched.to_json_dict()), encoding="utf-8")
    return target


def load_schedule(path: str | Path) -> DiffusionSchedule:
    """Read a schedule audit JSON.

    Raises:
        FormatError: If the file is not a valid dump
    """
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"Invalid schedule JSON: {e}") from e
    return DiffusionSchedule.from_json_dict(payload)
