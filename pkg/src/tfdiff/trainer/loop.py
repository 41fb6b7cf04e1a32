"""Training loop: batching, logging, checkpoints, divergence guard and provenance."""

import json
import logging
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from tfdiff import __version__
from tfdiff.config import TrainConfig
from tfdiff.constants import Checkpoint as CheckpointConst
from tfdiff.constants import Files, Ssim
from tfdiff.datagen.io import condition_vocab, dataset_digest
from tfdiff.diffusion.reverse import OptimizerState, StepResult, TrainingBatch, train_step
from tfdiff.diffusion.schedule import DiffusionSchedule, build_schedule
from tfdiff.errors import DatasetError, DivergenceError
from tfdiff.models import LabeledSequence, MetricRecord, RunManifest
from tfdiff.nn.hdt import HdtModel
from tfdiff.trainer.checkpoint import (
    checkpoint_config,
    load_checkpoint,
    restore_training,
    save_checkpoint,
    training_checkpoint,
)
from tfdiff.utils import make_rng

UTC = timezone.utc  # identical to datetime.UTC (3.11+)

logger = logging.getLogger(__name__)

# RNG stream id for the training loop (t, noise, dropout, batch draws)
_TRAIN_STREAM = 1


class TrainResult(BaseModel):
    """Outcome of a completed training run."""

    checkpoint: str
    steps: int
    initial_loss: float | None
    final_loss: float | None
    mean_recent_loss: float | None
    out_dir: str


class Trainer:
    """Owns the model, optimizer state and RNG of one training run."""

    def __init__(
        self,
        cfg: TrainConfig,
        dataset: list[LabeledSequence],
        out_dir: str | Path,
        code_version: str = __version__,
    ):
        if not dataset:
            raise DatasetError("Cannot train on an empty dataset")
        vocab = condition_vocab(dataset)
        if cfg.model.condition_vocab:
            for field, values in vocab.items():
                allowed = cfg.model.condition_vocab.get(field)
                if allowed is None or not set(values) <= set(allowed):
                    raise DatasetError(
                        f"Dataset condition field '{field}' is outside the configured vocabulary"
                    )
        else:
            cfg = cfg.model_copy(
                update={"model": cfg.model.model_copy(update={"condition_vocab": vocab})}
            )
        expected = (cfg.model.spatial_dim, cfg.model.temporal_length)
        for item in dataset:
            if item.sequence.shape != expected:
                raise DatasetError(
                    f"Item {item.item_id or '?'} has shape {item.sequence.shape}, expected {expected}"
                )

        self.cfg = cfg
        self.dataset = dataset
        self.out_dir = Path(out_dir)
        self.code_version = code_version
        self.sched: DiffusionSchedule = build_schedule(cfg.schedule)
        self.model = HdtModel(cfg.model, seed=cfg.seed)
        self.state = OptimizerState(self.model, cfg)
        self.rng = make_rng(cfg.seed, _TRAIN_STREAM)
        self.x0 = np.stack([item.sequence.data for item in dataset])
        self.indices = self.model.condition_embedding.encode_batch([i.condition for i in dataset])
        self.item_ids = [item.item_id or str(i) for i, item in enumerate(dataset)]
        self.initial_loss: float | None = None
        self.above_threshold = 0
        self.recent: list[float] = []

    @property
    def metrics_path(self) -> Path:
        return self.out_dir / Files.METRICS

    @property
    def manifest_path(self) -> Path:
        return self.out_dir / Files.MANIFEST

    def write_manifest(self) -> RunManifest:
        """Write the run manifest once; an existing manifest is never rewritten."""
        if self.manifest_path.exists():
            return RunManifest.model_validate_json(self.manifest_path.read_text(encoding="utf-8"))
        cfg = self.cfg
        manifest = RunManifest(
            config=cfg.model_dump(mode="json"),
            seed=cfg.seed,
            code_version=self.code_version,
            dataset_digest=dataset_digest(self.dataset),
            dataset_size=len(self.dataset),
            metric_log_path=str(self.metrics_path),
            created_at=datetime.now(UTC),
            condition_vocab=cfg.model.condition_vocab,
            optimizer={
                "beta1": cfg.adam_beta1,
                "beta2": cfg.adam_beta2,
                "eps": cfg.adam_eps,
                "weight_decay": cfg.weight_decay,
                "grad_clip": cfg.grad_clip if cfg.grad_clip is not None else 0.0,
            },
            ssim={"window": Ssim.WINDOW, "stride": Ssim.STRIDE, "k1": Ssim.K1, "k2": Ssim.K2},
        )
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest_path.write_text(manifest.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"Wrote run manifest to {self.manifest_path}")
        return manifest

    def resume(self, path: str | Path) -> None:
        """Continue from a checkpoint of this run."""
        ckpt = load_checkpoint(path)
        self.rng = restore_training(ckpt, self.model, self.state)
        self.initial_loss = ckpt.state.get("initial_loss")
        self.above_threshold = int(ckpt.state.get("above_threshold", 0))
        self._truncate_metrics(ckpt.step)

    def _truncate_metrics(self, step: int) -> None:
        if not self.metrics_path.exists():
            return
        kept = []
        for line in self.metrics_path.read_text(encoding="utf-8").splitlines():
            if line.strip() and json.loads(line)["step"] <= step:
                kept.append(line)
        self.metrics_path.write_text("".join(f"{line}\n" for line in kept), encoding="utf-8")

    def _next_batch(self) -> TrainingBatch:
        picks = self.rng.integers(0, len(self.dataset), size=self.cfg.batch_size)
        return TrainingBatch(
            x0=self.x0[picks],
            condition_indices=self.indices[picks],
            item_ids=[self.item_ids[i] for i in picks],
        )

    def _save(self) -> Path:
        name = CheckpointConst.NAME_TEMPLATE.format(step=self.state.step)
        ckpt = training_checkpoint(
            self.model,
            self.state,
            self.cfg,
            self.rng,
            extra={"initial_loss": self.initial_loss, "above_threshold": self.above_threshold},
        )
        return save_checkpoint(self.out_dir / name, ckpt)

    def _check_divergence(self, result: StepResult) -> None:
        if self.initial_loss is None:
            self.initial_loss = result.loss
            return
        if result.loss > self.cfg.divergence_factor * self.initial_loss:
            self.above_threshold += 1
        else:
            self.above_threshold = 0
        if self.above_threshold >= self.cfg.divergence_patience:
            note = {
                "event": "diverged",
                "step": result.step,
                "loss": result.loss,
                "initial_loss": self.initial_loss,
                "factor": self.cfg.divergence_factor,
                "patience": self.cfg.divergence_patience,
            }
            notes_path = self.out_dir / Files.MANIFEST_NOTES
            notes_path.write_text(json.dumps(note, indent=2), encoding="utf-8")
            logger.error(f"Training diverged at step {result.step}; note written to {notes_path}")
            raise DivergenceError(result.step, result.loss, self.initial_loss)

    def run(self) -> TrainResult:
        """Train until ``max_steps``.

        Raises:
            DivergenceError: If the loss stays above the divergence threshold
            NonFiniteLossError: If a loss or gradient becomes non-finite
        """
        cfg = self.cfg
        self.write_manifest()
        logger.info(
            f"Training from step {self.state.step} to {cfg.max_steps} "
            f"on {len(self.dataset)} sequences (batch {cfg.batch_size})"
        )
        last: StepResult | None = None
        with self.metrics_path.open("a", encoding="utf-8") as log:
            while self.state.step < cfg.max_steps:
                batch = self._next_batch()
                last = train_step(self.model, batch, self.sched, self.rng, self.state, cfg)
                record = MetricRecord(
                    step=last.step,
                    loss=last.loss,
                    lr=last.lr,
                    grad_norm=last.grad_norm,
                    wall_ms=last.wall_ms,
                )
                log.write(record.model_dump_json() + "\n")
                self.recent.append(last.loss)
                if len(self.recent) > cfg.log_interval:
                    self.recent.pop(0)
                self._check_divergence(last)
                if last.step % cfg.log_interval == 0:
                    log.flush()
                    logger.info(
                        f"step {last.step}/{cfg.max_steps}: loss={last.loss:.5f} "
                        f"(mean {float(np.mean(self.recent)):.5f}) lr={last.lr:.2e}"
                    )
                if last.step % cfg.checkpoint_interval == 0 and last.step < cfg.max_steps:
                    self._save()
        final_path = self._save()
        return TrainResult(
            checkpoint=str(final_path),
            steps=self.state.step,
            initial_loss=self.initial_loss,
            final_loss=last.loss if last else None,
            mean_recent_loss=float(np.mean(self.recent)) if self.recent else None,
            out_dir=str(self.out_dir),
        )


def train(
    cfg: TrainConfig,
    dataset: list[LabeledSequence],
    out_dir: str | Path,
    resume: str | Path | None = None,
) -> TrainResult:
    """Train an HDT on ``dataset`` and return the final checkpoint.

    When resuming, the stored config is used and only ``max_steps`` is taken
    from ``cfg``.
    """
    if resume is not None:
        stored = checkpoint_config(load_checkpoint(resume))
        cfg = stored.model_copy(update={"max_steps": cfg.max_steps})
    trainer = Trainer(cfg, dataset, out_dir)
    if resume is not None:
        trainer.resume(resume)
    return trainer.run()
