"""Minimal dense-tensor engine with reverse-mode differentiation.

Gradients are graph nodes themselves, so norms of gradients can be
differentiated again (double backprop).  Convolutions run on a compiled
extension when available; see kernels.BACKEND.
"""

from .engine import (
    CHECK_FINITE,
    Graph,
    Tensor,
    add,
    add_bias,
    backward,
    broadcast_full,
    broadcast_leading,
    concat_channels,
    constant,
    conv2d,
    conv2d_dgrad,
    conv2d_wgrad,
    conv3d,
    conv3d_dgrad,
    conv3d_wgrad,
    dense,
    dim_expand,
    flatten,
    matmul,
    mean_all,
    mul,
    no_grad,
    pad_slice,
    reciprocal,
    relu,
    reshape,
    scalar_mul,
    slice_tensor,
    sqrt,
    square,
    sub,
    sum_all,
    sum_leading,
    transpose2d,
)
from .kernels import BACKEND

__all__ = [
    "BACKEND", "CHECK_FINITE", "Graph", "Tensor", "add", "add_bias",
    "backward", "broadcast_full", "broadcast_leading", "concat_channels",
    "constant", "conv2d", "conv2d_dgrad", "conv2d_wgrad", "conv3d",
    "conv3d_dgrad", "conv3d_wgrad", "dense", "dim_expand", "flatten",
    "matmul", "mean_all", "mul", "no_grad", "pad_slice", "reciprocal",
    "relu", "reshape", "scalar_mul", "slice_tensor", "sqrt", "square",
    "sub", "sum_all", "sum_leading", "transpose2d",
]
