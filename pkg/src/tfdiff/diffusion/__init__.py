"""Diffusion schedule, forward destruction and reverse restoration."""

from tfdiff.diffusion.forward import (
    NoiseDraw,
    destruct_step,
    destruct_step_spectral,
    destruct_to,
    terminal_sample,
)
from tfdiff.diffusion.reverse import (
    HdtPredictor,
    MeanPredictor,
    PosteriorOracle,
    PosteriorParams,
    posterior_params,
    sample,
    sample_batch,
    train_step,
    training_loss,
)
from tfdiff.diffusion.schedule import DiffusionSchedule, build_schedule, verify_convergence

__all__ = [
    "DiffusionSchedule",
    "HdtPredictor",
    "MeanPredictor",
    "NoiseDraw",
    "PosteriorOracle",
    "PosteriorParams",
    "build_schedule",
    "destruct_step",
    "destruct_step_spectral",
    "destruct_to",
    "posterior_params",
    "sample",
    "sample_batch",
    "terminal_sample",
    "train_step",
    "training_loss",
    "verify_convergence",
]
