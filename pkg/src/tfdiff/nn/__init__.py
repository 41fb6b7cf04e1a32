"""Complex-valued network components and the reverse-mode engine that trains them."""

from tfdiff.nn.autograd import Tensor, concat, gelu, gradcheck, no_grad, phase, softmax
from tfdiff.nn.hdt import HdtModel, hdt_forward
from tfdiff.nn.layers import (
    AdbBlock,
    Module,
    ada_layer_norm,
    adb_forward,
    complex_activation,
    complex_attention,
    complex_linear,
    pme_encode,
)
from tfdiff.nn.optim import AdamW, Ema, clip_grad_norm, learning_rate

__all__ = [
    "AdamW",
    "AdbBlock",
    "Ema",
    "HdtModel",
    "Module",
    "Tensor",
    "ada_layer_norm",
    "adb_forward",
    "clip_grad_norm",
    "complex_activation",
    "complex_attention",
    "complex_linear",
    "concat",
    "gelu",
    "gradcheck",
    "hdt_forward",
    "learning_rate",
    "no_grad",
    "phase",
    "pme_encode",
    "softmax",
]
