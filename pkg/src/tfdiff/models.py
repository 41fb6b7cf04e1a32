"""Data models for labeled sequences, datasets, reports and run provenance."""

from datetime import datetime
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator

from tfdiff.signal.sequence import ComplexSequence
from tfdiff.utils import json_float, parse_key_values


class ConditionLabel(BaseModel):
    """Categorical condition vector c, one string value per condition field."""

    model_config = ConfigDict(frozen=True)

    values: dict[str, str] = Field(default_factory=dict)

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: dict[str, str]) -> dict[str, str]:
        """Keys and values must be non-empty and free of the separators."""
        for key, value in v.items():
            for part in (key, value):
                if not part or "," in part or "=" in part:
                    raise ValueError(f"Invalid condition entry {key!r}={value!r}")
        return dict(sorted(v.items()))

    @classmethod
    def parse(cls, text: str | None) -> "ConditionLabel":
        """Parse ``"k=v,k2=v2"``.

        Raises:
            ValueError: If an entry is not a key=value pair
        """
        values, error = parse_key_values(text, "condition")
        if error:
            raise ValueError(error)
        return cls(values=values or {})

    def key(self) -> str:
        """Canonical ``k=v,...`` string, sorted by field."""
        return ",".join(f"{k}={v}" for k, v in self.values.items())

    def __hash__(self) -> int:
        return hash(self.key())

    def __str__(self) -> str:
        return self.key() or "<unconditional>"


class LabeledSequence(BaseModel):
    """A canonical sequence with its condition label."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    sequence: ComplexSequence
    condition: ConditionLabel
    item_id: str = ""


class DatasetEntry(BaseModel):
    """One row of a dataset index."""

    path: str
    condition: dict[str, str] = Field(default_factory=dict)


class DatasetIndex(BaseModel):
    """Index JSON listing CSEQ1 files and their condition fields."""

    entries: list[DatasetEntry] = Field(default_factory=list)
    spec: dict[str, Any] | None = None


class ConvergenceReport(BaseModel):
    """Outcome of the schedule convergence checks."""

    passed: bool
    T: int
    N: int
    variant: str
    gamma_max: float = Field(..., description="max over t, n of gamma[t][n]")
    condition_ok: bool = Field(..., description="0 < gamma[t][n] < 1 everywhere")
    bound_ok: bool
    bound_margin_min: float = Field(
        ..., description="min over n of (bound[n] - sigma_bar[T][n]); negative means violated"
    )
    gamma_bar_T_max: float = Field(..., description="Residual signal weight after T steps")
    sigma_bar_T_min: float
    sigma_bar_T_max: float
    max_residual: float | None = None
    residual_ok: bool = True
    violations: list[tuple[int, int]] = Field(default_factory=list)
    reasons: list[str] = Field(default_factory=list)

    @field_serializer("bound_margin_min")
    def serialize_margin(self, value: float) -> float | str:
        return json_float(value)


class MetricRecord(BaseModel):
    """One line of the training metric log."""

    step: int
    loss: float
    lr: float
    grad_norm: float
    wall_ms: float


class RunManifest(BaseModel):
    """Provenance of a training run; written before step 0 and never rewritten."""

    model_config = ConfigDict(frozen=True)

    config: dict[str, Any]
    seed: int
    code_version: str
    dataset_digest: str
    dataset_size: int
    metric_log_path: str
    created_at: datetime
    condition_vocab: dict[str, list[str]]
    optimizer: dict[str, float]
    ssim: dict[str, float]


class ConditionScore(BaseModel):
    """SSIM of samples for one condition against held-out exemplars."""

    condition: dict[str, str]
    samples: int
    same_ssim_mean: float
    cross_ssim_mean: float | None = None
    same_count: int
    cross_count: int


class SignificanceTest(BaseModel):
    """One-sided rank test of same-condition against cross-condition SSIM."""

    statistic: float
    p_value: float
    alpha: float
    significant: bool


class PairScore(BaseModel):
    """SSIM and SNR for an (estimate, truth) file pair."""

    estimate: str
    truth: str
    ssim: float
    snr_db: float

    @field_serializer("snr_db")
    def serialize_snr(self, value: float) -> float | str:
        return json_float(value)


class EvaluationReport(BaseModel):
    """Metrics emitted by ``evaluate`` and the ``eval`` command."""

    checkpoint: str | None = None
    weights: str = "ema"
    conditions: list[ConditionScore] = Field(default_factory=list)
    same_ssim_mean: float | None = None
    cross_ssim_mean: float | None = None
    margin: float | None = None
    test: SignificanceTest | None = None
    pairs: list[PairScore] = Field(default_factory=list)
