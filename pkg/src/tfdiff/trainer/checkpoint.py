"""Versioned binary checkpoints.

Layout (little-endian)::

    b"TFDCKPT\\0" | u32 version | u32 len | JSON state | u32 count | tensors

Each tensor is ``u16 name_len | name | u8 kind | u8 ndim | u32 * ndim shape``
followed by float64 data (complex tensors as interleaved (re, im) pairs).
Tensor names are grouped by prefix: ``param/``, ``ema/``, ``adam_m/``,
``adam_v/`` for trained models and ``exemplar/`` for oracle checkpoints.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from tfdiff.config import ScheduleConfig, TrainConfig
from tfdiff.constants import Checkpoint as CheckpointConst
from tfdiff.diffusion.reverse import HdtPredictor, MeanPredictor, OptimizerState, PosteriorOracle
from tfdiff.diffusion.schedule import DiffusionSchedule, build_schedule
from tfdiff.errors import FormatError
from tfdiff.models import ConditionLabel, LabeledSequence
from tfdiff.nn.hdt import HdtModel
from tfdiff.signal.sequence import ComplexSequence

logger = logging.getLogger(__name__)

_U32 = struct.Struct("<I")
_NAME = struct.Struct("<H")
_KIND_NDIM = struct.Struct("<BB")
_KIND_REAL = 0
_KIND_COMPLEX = 1

CheckpointKind = Literal["hdt", "oracle"]
WeightsChoice = Literal["ema", "raw"]


class Checkpoint(BaseModel):
    """In-memory checkpoint: JSON state plus named arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: CheckpointKind
    step: int = 0
    state: dict[str, Any] = Field(default_factory=dict)
    tensors: dict[str, np.ndarray] = Field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Tensors under ``prefix/`` with the prefix stripped."""
        head = f"{prefix}/"
        return {k[len(head) :]: v for k, v in self.tensors.items() if k.startswith(head)}


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    state = {"kind": ckpt.kind, "step": ckpt.step, **ckpt.state}
    blob = json.dumps(state, sort_keys=True).encode("utf-8")
    parts = [CheckpointConst.MAGIC, _U32.pack(CheckpointConst.VERSION), _U32.pack(len(blob)), blob]
    parts.append(_U32.pack(len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        encoded = name.encode("utf-8")
        is_complex = np.iscomplexobj(arr)
        values = np.asarray(arr, dtype="<c16" if is_complex else "<f8")
        parts.append(_NAME.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_KIND_NDIM.pack(_KIND_COMPLEX if is_complex else _KIND_REAL, values.ndim))
        parts.extend(_U32.pack(dim) for dim in values.shape)
        parts.append(values.tobytes())
    return b"".join(parts)


def decode_checkpoint(raw: bytes) -> Checkpoint:
    """Parse checkpoint bytes.

    Raises:
        FormatError: On bad magic, unsupported version or truncation
    """
    magic = CheckpointConst.MAGIC
    if raw[: len(magic)] != magic:
        raise FormatError("Not a tfdiff checkpoint (bad magic)")
    offset = len(magic)
    try:
        (version,) = _U32.unpack_from(raw, offset)
        offset += _U32.size
        if version != CheckpointConst.VERSION:
            raise FormatError(f"Unsupported checkpoint version {version}")
        (blob_len,) = _U32.unpack_from(raw, offset)
        offset += _U32.size
        state = json.loads(raw[offset : offset + blob_len].decode("utf-8"))
        offset += blob_len
        (count,) = _U32.unpack_from(raw, offset)
        offset += _U32.size
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = _NAME.unpack_from(raw, offset)
            offset += _NAME.size
            name = raw[offset : offset + name_len].decode("utf-8")
            offset += name_len
            kind, ndim = _KIND_NDIM.unpack_from(raw, offset)
            offset += _KIND_NDIM.size
            shape = tuple(_U32.unpack_from(raw, offset + i * _U32.size)[0] for i in range(ndim))
            offset += ndim * _U32.size
            count_f64 = int(np.prod(shape, dtype=np.int64)) * (2 if kind == _KIND_COMPLEX else 1)
            if offset + count_f64 * 8 > len(raw):
                raise FormatError(f"Truncated tensor '{name}'")
            flat = np.frombuffer(raw, dtype="<f8", count=count_f64, offset=offset).astype(np.float64)
            offset += count_f64 * 8
            arr = flat.view(np.complex128) if kind == _KIND_COMPLEX else flat
            tensors[name] = arr.reshape(shape)
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Corrupt checkpoint: {e}") from e
    kind_name = state.pop("kind", None)
    step = state.pop("step", 0)
    if kind_name not in ("hdt", "oracle"):
        raise FormatError(f"Unknown checkpoint kind {kind_name!r}")
    return Checkpoint(kind=kind_name, step=int(step), state=state, tensors=tensors)


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> Path:
    """Write a checkpoint atomically (temp file then rename)."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = target.with_suffix(target.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(ckpt))
    tmp.replace(target)
    logger.info(f"Saved {ckpt.kind} checkpoint at step {ckpt.step} to {target}")
    return target


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint file.

    Raises:
        FileNotFoundError: If the file is missing
        FormatError: If it cannot be decoded
    """
    return decode_checkpoint(Path(path).read_bytes())


def training_checkpoint(
    model: HdtModel,
    opt_state: OptimizerState,
    cfg: TrainConfig,
    rng: np.random.Generator,
    extra: dict[str, Any] | None = None,
) -> Checkpoint:
    """Snapshot everything needed for a bit-exact resume."""
    m, v, adam_steps = opt_state.optimizer.state_dict()
    tensors: dict[str, np.ndarray] = {}
    for name, arr in model.state_dict().items():
        tensors[f"param/{name}"] = arr
    for name, arr in opt_state.ema.state_dict().items():
        tensors[f"ema/{name}"] = arr
    for name, arr in m.items():
        tensors[f"adam_m/{name}"] = arr
    for name, arr in v.items():
        tensors[f"adam_v/{name}"] = arr
    state: dict[str, Any] = {
        "config": cfg.model_dump(mode="json"),
        "adam_steps": adam_steps,
        "rng_state": rng.bit_generator.state,
        **(extra or {}),
    }
    return Checkpoint(kind="hdt", step=opt_state.step, state=state, tensors=tensors)


def checkpoint_config(ckpt: Checkpoint) -> TrainConfig:
    """Training config stored in an ``hdt`` checkpoint.

    Raises:
        FormatError: If the stored config is invalid
    """
    try:
        return TrainConfig.model_validate(ckpt.state["config"])
    except (KeyError, ValidationError) as e:
        raise FormatError(f"Checkpoint has no valid training config: {e}") from e


def restore_training(
    ckpt: Checkpoint, model: HdtModel, opt_state: OptimizerState
) -> np.random.Generator:
    """Load weights, optimizer moments, EMA and the RNG state from ``ckpt``.

    Returns:
        Generator positioned exactly where the checkpointed run left off
    """
    if ckpt.kind != "hdt":
        raise FormatError(f"Cannot resume training from a '{ckpt.kind}' checkpoint")
    try:
        model.load_state_dict(ckpt.group("param"))
        opt_state.ema.load_state_dict(ckpt.group("ema"))
        opt_state.optimizer.load_state_dict(
            ckpt.group("adam_m"), ckpt.group("adam_v"), int(ckpt.state["adam_steps"])
        )
        rng = np.random.default_rng()
        rng.bit_generator.state = ckpt.state["rng_state"]
    except (KeyError, ValueError) as e:
        raise FormatError(f"Checkpoint does not match the model: {e}") from e
    opt_state.step = ckpt.step
    logger.info(f"Resumed training state at step {ckpt.step}")
    return rng


def oracle_checkpoint(
    exemplars: list[LabeledSequence], schedule: ScheduleConfig
) -> Checkpoint:
    """Checkpoint wrapping a :class:`PosteriorOracle` over ``exemplars``."""
    tensors = {f"exemplar/{i:06d}": e.sequence.data for i, e in enumerate(exemplars)}
    state = {
        "schedule": schedule.model_dump(mode="json"),
        "conditions": [e.condition.values for e in exemplars],
    }
    return Checkpoint(kind="oracle", step=0, state=state, tensors=tensors)


def load_predictor(
    path: str | Path, weights: WeightsChoice = "ema"
) -> tuple[MeanPredictor, DiffusionSchedule, Checkpoint]:
    """Build a sampler-ready predictor and its schedule from a checkpoint.

    Args:
        path: Checkpoint file
        weights: ``ema`` (default) or ``raw`` parameters for ``hdt`` checkpoints

    Returns:
        Tuple of (predictor, schedule, checkpoint)
    """
    ckpt = load_checkpoint(path)
    if ckpt.kind == "oracle":
        try:
            schedule_cfg = ScheduleConfig.model_validate(ckpt.state["schedule"])
            conditions = ckpt.state["conditions"]
        except (KeyError, ValidationError) as e:
            raise FormatError(f"Invalid oracle checkpoint: {e}") from e
        arrays = ckpt.group("exemplar")
        if len(arrays) != len(conditions):
            raise FormatError("Oracle checkpoint exemplar/condition count mismatch")
        exemplars = [
            LabeledSequence(
                sequence=ComplexSequence(data=arrays[key]),
                condition=ConditionLabel(values=cond),
                item_id=key,
            )
            for key, cond in zip(sorted(arrays), conditions, strict=True)
        ]
        sched = build_schedule(schedule_cfg)
        return PosteriorOracle(exemplars, sched), sched, ckpt

    cfg = checkpoint_config(ckpt)
    model = HdtModel(cfg.model, seed=cfg.seed)
    source = ckpt.group("ema" if weights == "ema" else "param")
    try:
        model.load_state_dict(source)
    except (KeyError, ValueError) as e:
        raise FormatError(f"Checkpoint weights do not match the stored config: {e}") from e
    return HdtPredictor(model), build_schedule(cfg.schedule), ckpt
