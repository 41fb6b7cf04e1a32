"""Configuration management for tfdiff."""

import logging
import os
from pathlib import Path
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from tfdiff.constants import Model, Schedule, Signal, Train

logger = logging.getLogger(__name__)

# Load environment variables
load_dotenv()

ScheduleVariant = Literal["time_frequency", "gaussian", "blur"]
SyntheticKind = Literal["multipath_csi", "fmcw_chirp"]
LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR"]


class ScheduleConfig(BaseModel):
    """Noise and blur schedule parameters.

    Zero endpoints are accepted here so that a degenerate schedule can reach
    ``verify_convergence`` and be reported with its violating indices; the
    strict ``0 < gamma < 1`` condition is enforced when the schedule is built.
    """

    T: int = Field(default=Schedule.T, ge=1)
    beta_start: float = Field(default=Schedule.BETA_START, ge=0, lt=1)
    beta_end: float = Field(default=Schedule.BETA_END, ge=0, lt=1)
    blur_start: float = Field(default=Schedule.BLUR_START, ge=0)
    blur_end: float = Field(default=Schedule.BLUR_END, ge=0)
    N: int = Field(default=Signal.DESK_LENGTH, ge=1)
    variant: ScheduleVariant = "time_frequency"

    @model_validator(mode="after")
    def validate_ordering(self) -> "ScheduleConfig":
        """Endpoints must be ordered."""
        if self.beta_start > self.beta_end:
            raise ValueError(
                f"beta_start ({self.beta_start}) must be <= beta_end ({self.beta_end})"
            )
        if self.blur_start > self.blur_end:
            raise ValueError(
                f"blur_start ({self.blur_start}) must be <= blur_end ({self.blur_end})"
            )
        return self

    @classmethod
    def preset(cls, name: str, **overrides: object) -> "ScheduleConfig":
        """Named schedule presets.

        ``published`` uses the published constants; ``desk`` raises the final
        noise std so the terminal law is reached within T steps.
        """
        if name == "published":
            base: dict[str, object] = {}
        elif name == "desk":
            base = {"beta_end": Schedule.DESK_BETA_END}
        else:
            raise ValueError(f"Unknown schedule preset: {name}. Must be one of: published, desk")
        base.update(overrides)
        return cls.model_validate(base)


# (total blocks, hidden dim) grid for the scalability presets
_SIZE_PRESETS: dict[str, tuple[int, int]] = {
    f"{blocks}B-{dim}": (blocks, dim) for blocks in (16, 32, 64) for dim in (64, 128, 256)
}


class ModelConfig(BaseModel):
    """Hierarchical diffusion transformer topology."""

    spatial_dim: int = Field(default=Model.SPATIAL_DIM, ge=1)
    temporal_length: int = Field(default=Model.TEMPORAL_LENGTH, ge=1)
    hidden_dim: int = Field(default=Model.HIDDEN_DIM, ge=2)
    heads: int = Field(default=Model.HEADS, ge=1)
    spatial_blocks: int = Field(default=Model.BLOCKS_PER_STAGE, ge=0)
    temporal_blocks: int = Field(default=Model.BLOCKS_PER_STAGE, ge=1)
    step_embed_dim: int = Field(default=Model.STEP_EMBED_DIM, ge=2)
    ff_multiplier: int = Field(default=Model.FF_MULTIPLIER, ge=1)
    hierarchical: bool = True
    condition_vocab: dict[str, list[str]] = Field(default_factory=dict)

    @field_validator("step_embed_dim")
    @classmethod
    def validate_step_embed_dim(cls, v: int) -> int:
        """Sinusoidal embeddings pair sin/cos channels."""
        if v % 2:
            raise ValueError(f"step_embed_dim must be even, got {v}")
        return v

    @field_validator("condition_vocab")
    @classmethod
    def validate_vocab(cls, v: dict[str, list[str]]) -> dict[str, list[str]]:
        """Each field needs at least one distinct value."""
        for field, values in v.items():
            if not values:
                raise ValueError(f"Condition field '{field}' has an empty vocabulary")
            if len(set(values)) != len(values):
                raise ValueError(f"Condition field '{field}' has duplicate values")
        return v

    @model_validator(mode="after")
    def validate_heads(self) -> "ModelConfig":
        """Hidden dimension must split evenly over heads."""
        if self.hidden_dim % self.heads:
            raise ValueError(
                f"hidden_dim ({self.hidden_dim}) must be divisible by heads ({self.heads})"
            )
        return self

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.heads

    @classmethod
    def preset(cls, name: str, **overrides: object) -> "ModelConfig":
        """Named size presets: ``toy`` or ``{16,32,64}B-{64,128,256}``."""
        if name == "toy":
            base: dict[str, object] = {}
        elif name in _SIZE_PRESETS:
            blocks, dim = _SIZE_PRESETS[name]
            base = {
                "hidden_dim": dim,
                "heads": max(1, dim // 32),
                "spatial_blocks": blocks // 2,
                "temporal_blocks": blocks - blocks // 2,
            }
        else:
            names = ", ".join(["toy", *_SIZE_PRESETS])
            raise ValueError(f"Unknown model preset: {name}. Must be one of: {names}")
        base.update(overrides)
        return cls.model_validate(base)


class TrainConfig(BaseModel):
    """Training hyperparameters with the nested schedule and model configs."""

    lr: float = Field(default=Train.LR, gt=0)
    lr_decay: float = Field(default=Train.LR_DECAY, gt=0, le=1)
    lr_decay_interval: int = Field(default=Train.LR_DECAY_INTERVAL, ge=1)
    ema_decay: float = Field(default=Train.EMA_DECAY, ge=0, lt=1)
    dropout: float = Field(default=Model.DROPOUT, ge=0, lt=1)
    adam_beta1: float = Field(default=Train.ADAM_BETA1, ge=0, lt=1)
    adam_beta2: float = Field(default=Train.ADAM_BETA2, ge=0, lt=1)
    adam_eps: float = Field(default=Train.ADAM_EPS, gt=0)
    weight_decay: float = Field(default=Train.WEIGHT_DECAY, ge=0)
    grad_clip: float | None = Field(default=Train.GRAD_CLIP, gt=0)
    batch_size: int = Field(default=4, ge=1)
    max_steps: int = Field(default=2000, ge=0)
    seed: int = Field(default=0, ge=0)
    checkpoint_interval: int = Field(default=1000, ge=1)
    log_interval: int = Field(default=50, ge=1)
    divergence_factor: float = Field(default=Train.DIVERGENCE_FACTOR, gt=1)
    divergence_patience: int = Field(default=Train.DIVERGENCE_PATIENCE, ge=1)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)

    @model_validator(mode="after")
    def validate_lengths(self) -> "TrainConfig":
        """Schedule and model must agree on the temporal length."""
        if self.schedule.N != self.model.temporal_length:
            raise ValueError(
                f"schedule.N ({self.schedule.N}) must equal "
                f"model.temporal_length ({self.model.temporal_length})"
            )
        return self

    @classmethod
    def from_file(cls, path: str | Path | None) -> "TrainConfig":
        """Load a JSON config; missing fields take their defaults.

        Raises:
            FileNotFoundError: If the file does not exist
            pydantic.ValidationError: If the content is invalid
        """
        if path is None:
            return cls()
        text = Path(path).read_text(encoding="utf-8")
        return cls.model_validate_json(text)


class SyntheticSpec(BaseModel):
    """Parameters of a synthetic labeled dataset.

    Ranges are split into ``class_count`` disjoint sub-bands; class ``k``
    draws its parameters around the centre of its own band.
    """

    kind: SyntheticKind = "multipath_csi"
    class_count: int = Field(default=4, ge=2)
    sequences_per_class: int = Field(default=64, ge=1)
    spatial_dim: int = Field(default=Model.SPATIAL_DIM, ge=1)
    length: int = Field(default=Signal.DESK_LENGTH, ge=2)
    paths: int = Field(default=3, ge=1)
    delay_range: tuple[float, float] = (0.0, 4.0)
    doppler_range: tuple[float, float] = (-16.0, 16.0)
    amplitude_range: tuple[float, float] = (0.5, 1.0)
    chirp_rate_range: tuple[float, float] = (0.0, 0.25)
    start_freq_range: tuple[float, float] = (-16.0, 0.0)
    cluster_jitter: float = Field(default=0.25, ge=0, le=1)
    noise_db: float | None = -30.0
    seed: int = Field(default=0, ge=0)

    @field_validator(
        "delay_range",
        "doppler_range",
        "amplitude_range",
        "chirp_rate_range",
        "start_freq_range",
    )
    @classmethod
    def validate_range(cls, v: tuple[float, float]) -> tuple[float, float]:
        """Ranges must be non-degenerate."""
        low, high = v
        if not low < high:
            raise ValueError(f"Range must satisfy low < high, got ({low}, {high})")
        return v

    @field_validator("amplitude_range")
    @classmethod
    def validate_amplitudes(cls, v: tuple[float, float]) -> tuple[float, float]:
        if v[0] <= 0:
            raise ValueError(f"Amplitudes must be positive, got {v}")
        return v


class RuntimeSettings(BaseModel):
    """Process-wide settings taken from the environment and global CLI flags."""

    log_level: LogLevel = "INFO"
    threads: int | None = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0)

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        """Load settings from environment variables."""
        log_level_str = os.getenv("LOG_LEVEL", "INFO").upper()
        valid_levels = ("DEBUG", "INFO", "WARNING", "ERROR")
        log_level: LogLevel = (
            log_level_str if log_level_str in valid_levels else "INFO"  # type: ignore[assignment]
        )

        threads: int | None = None
        threads_str = os.getenv("TFDIFF_THREADS")
        if threads_str:
            try:
                threads = int(threads_str)
                if threads < 1:
                    raise ValueError("must be >= 1")
            except (ValueError, TypeError) as e:
                logger.warning(
                    f"Invalid TFDIFF_THREADS value '{threads_str}': {e}. Using CPU count"
                )
                threads = None

        seed_str = os.getenv("TFDIFF_SEED", "0")
        try:
            seed = int(seed_str)
            if seed < 0:
                raise ValueError("must be >= 0")
        except (ValueError, TypeError) as e:
            logger.warning(f"Invalid TFDIFF_SEED value '{seed_str}': {e}. Using default: 0")
            seed = 0

        return cls(log_level=log_level, threads=threads, seed=seed)

    def apply_cli_overrides(self, seed: int | None = None, verbose: bool = False) -> None:
        """Apply CLI argument overrides to the settings."""
        if seed is not None:
            if seed < 0:
                raise ValueError(f"Invalid seed: {seed}. Must be >= 0")
            self.seed = seed
        if verbose:
            self.log_level = "DEBUG"


def format_validation_error(error: ValidationError) -> str:
    """Compact one-line-per-field rendering of a pydantic error."""
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)
