"""Minimal reverse-mode autodiff over dense float32 tensors.

Exactly the operations the segmentation net and the saliency optimizers
need: conv2d, relu, 2x2 maxpool, nearest/bilinear upsampling, channel
concat, channelwise softmax, cross entropy, and the elementwise ops the
mask objective is built from. Gradients flow to parameters and inputs
alike; the mask and the gradient baselines differentiate through a frozen
network into its input.
"""

from gridsal.diffcore.tensor import Tensor, set_finite_checks, finite_checks_enabled
from gridsal.diffcore.ops import (
    add,
    clip01,
    concat_channels,
    conv2d,
    cross_entropy,
    maxpool2x2,
    mul,
    relu,
    select_channel,
    softmax_channelwise,
    sub,
    sum_all,
    sum_per_instance,
    upsample_bilinear,
    upsample_nearest,
    upsample_nearest2x,
)
from gridsal.diffcore.optim import (
    RMSProp,
    rmsprop_step,
    sgd_momentum_step,
)

__all__ = [
    "Tensor",
    "set_finite_checks",
    "finite_checks_enabled",
    "add",
    "clip01",
    "concat_channels",
    "conv2d",
    "cross_entropy",
    "maxpool2x2",
    "mul",
    "relu",
    "select_channel",
    "softmax_channelwise",
    "sub",
    "sum_all",
    "sum_per_instance",
    "upsample_bilinear",
    "upsample_nearest",
    "upsample_nearest2x",
    "RMSProp",
    "rmsprop_step",
    "sgd_momentum_step",
]
