# Copyright (C) 2024-2026 Kenes Yerassyl
# This file is part of BasePose Lab.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <https://www.gnu.org/licenses/>.


"""Differentiable ops on :class:`Tensor`; every forward has its backward next to it."""

from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse

from src.core.errors import ShapeError
from src.nn.tensor import Tensor


# --- activations ------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor.from_op(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return Tensor.from_op(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    data = x.data
    positive = data >= 0
    exp_neg = np.exp(-np.abs(data))
    out = np.where(positive, 1.0 / (1.0 + exp_neg), exp_neg / (1.0 + exp_neg)).astype(x.dtype)
    return Tensor.from_op(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor.from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    data = x.data
    return Tensor.from_op(np.log(data), (x,), lambda g: (g / data,), "log")


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-stabilised softmax; masked-out entries get probability 0 (fully masked rows are all 0)."""
    data = x.data
    if mask is None:
        shifted = data - data.max(axis=axis, keepdims=True)
        weights = np.exp(shifted)
    else:
        mask = np.broadcast_to(mask, data.shape)
        masked = np.where(mask, data, -np.inf)
        peak = masked.max(axis=axis, keepdims=True)
        peak = np.where(np.isfinite(peak), peak, 0.0)
        weights = np.where(mask, np.exp(np.where(mask, data, 0.0) - peak), 0.0)
    total = weights.sum(axis=axis, keepdims=True)
    out = (weights / np.where(total > 0, total, 1.0)).astype(x.dtype)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    data = x.data
    shifted = data - data.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)
    return Tensor.from_op(out.astype(x.dtype), (x,),
                          lambda g: (g - probs * g.sum(axis=axis, keepdims=True),), "log_softmax")


# --- structure --------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                          lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    count = len(tensors)
    return Tensor.from_op(np.stack([t.data for t in tensors], axis=axis), tuple(tensors),
                          lambda g: tuple(np.take(g, i, axis=axis) for i in range(count)), "stack")


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    indices = np.asarray(indices)
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return Tensor.from_op(np.take(x.data, indices, axis=axis), (x,), backward, "take")


def roll(x: Tensor, shift: int, axis: int) -> Tensor:
    return Tensor.from_op(np.roll(x.data, shift, axis=axis), (x,), lambda g: (np.roll(g, -shift, axis=axis),), "roll")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return a @ b


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (N, in) or (in,)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} does not match weight {weight.shape}")
    squeeze = x.ndim == 1
    if squeeze:
        x = x.reshape(1, -1)
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    return out.reshape(-1) if squeeze else out


def linear_map(x: Tensor, operator: Union[np.ndarray, sparse.spmatrix]) -> Tensor:
    """Apply a constant linear operator to the flattened trailing two (spatial) axes.

    ``operator`` has shape (h*w, h*w) and may be dense or scipy-sparse; it is
    used for kernel and feature-map rotations.
    """
    lead, (h, w) = x.shape[:-2], x.shape[-2:]
    if operator.shape != (h * w, h * w):
        raise ShapeError(f"linear_map: operator {operator.shape} does not fit spatial size {h}x{w}")
    flat = x.data.reshape(-1, h * w)
    out = np.asarray((operator @ flat.T).T, dtype=x.dtype).reshape(x.shape)
    operator_t = operator.T

    def backward(g):
        return (np.asarray((operator_t @ g.reshape(-1, h * w).T).T, dtype=g.dtype).reshape(lead + (h, w)),)

    return Tensor.from_op(out, (x,), backward, "linear_map")


# --- convolution and resampling --------------------------------------------

def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, padding: int = 0, dilation: int = 1) -> Tensor:
    """Cross-correlation of ``x`` (Cin, H, W) with ``weight`` (Cout, Cin, kh, kw), zero padded.

    Raises:
        ShapeError: If the channel counts disagree or the output would be empty
    """
    if x.ndim != 3 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects (Cin,H,W) and (Cout,Cin,kh,kw), got {x.shape} and {weight.shape}")
    c_in, height, width = x.shape
    c_out, w_in, kh, kw = weight.shape
    if c_in != w_in:
        raise ShapeError(f"conv2d: input has {c_in} channels, kernel expects {w_in}")
    out_h = conv_output_size(height, kh, stride, padding, dilation)
    out_w = conv_output_size(width, kw, stride, padding, dilation)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} (dilation {dilation}) does not fit input {height}x{width}")

    padded = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding)))
    w = weight.data
    windows = []
    for i in range(kh):
        for j in range(kw):
            rows = slice(i * dilation, i * dilation + stride * (out_h - 1) + 1, stride)
            cols = slice(j * dilation, j * dilation + stride * (out_w - 1) + 1, stride)
            windows.append((i, j, rows, cols))

    out = np.zeros((c_out, out_h, out_w), dtype=np.result_type(x.dtype, weight.dtype))
    for i, j, rows, cols in windows:
        out += np.tensordot(w[:, :, i, j], padded[:, rows, cols], axes=(1, 0))
    if bias is not None:
        out += bias.data[:, None, None]

    def backward(g):
        grad_padded = np.zeros_like(padded)
        grad_w = np.zeros_like(w)
        for i, j, rows, cols in windows:
            grad_w[:, :, i, j] = np.tensordot(g, padded[:, rows, cols], axes=([1, 2], [1, 2]))
            grad_padded[:, rows, cols] += np.tensordot(w[:, :, i, j], g, axes=(0, 0))
        grad_x = grad_padded[:, padding:padding + height, padding:padding + width]
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward, "conv2d")


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2 over the trailing axes; ties route the gradient to the first maximum."""
    *lead, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"max_pool2 needs even spatial size, got {h}x{w}")
    blocks = x.data.reshape(*lead, h // 2, 2, w // 2, 2)
    blocks = np.moveaxis(blocks, -3, -2).reshape(*lead, h // 2, w // 2, 4)
    winner = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

    def backward(g):
        grad_blocks = np.zeros(blocks.shape, dtype=g.dtype)
        np.put_along_axis(grad_blocks, winner[..., None], g[..., None], axis=-1)
        grad = grad_blocks.reshape(*lead, h // 2, w // 2, 2, 2)
        return (np.moveaxis(grad, -2, -3).reshape(*lead, h, w),)

    return Tensor.from_op(out, (x,), backward, "max_pool2")


def nearest_upsample2(x: Tensor) -> Tensor:
    *lead, h, w = x.shape
    out = x.data.repeat(2, axis=-2).repeat(2, axis=-1)

    def backward(g):
        return (g.reshape(*lead, h, 2, w, 2).sum(axis=(-3, -1)),)

    return Tensor.from_op(out, (x,), backward, "nearest_upsample2")


def global_avg_pool(x: Tensor) -> Tensor:
    return x.mean(axis=(-2, -1))


# --- losses -----------------------------------------------------------------

def mse_loss(prediction: Tensor, target) -> Tensor:
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=prediction.dtype)
    if prediction.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {prediction.shape} vs target {target.shape}")
    diff = prediction.data - target
    scale = 2.0 / diff.size
    return Tensor.from_op(np.asarray(np.mean(diff * diff), dtype=prediction.dtype), (prediction,),
                          lambda g: (g * scale * diff,), "mse_loss")
