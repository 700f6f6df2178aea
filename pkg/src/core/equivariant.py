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


"""Rotation-equivariant convolutions over the cyclic group C_n (n in {4, 8}).

Group features have shape ``[n, m, h, w]``. The action of group element ``g``
rotates every slice counter-clockwise by ``2*pi*g/n`` and shifts the group axis
by ``g``. Rotations by multiples of 90 degrees are exact pixel permutations; the
remaining 45 degrees (n = 8) are bilinear resamplings, always composed after the
exact part so that equivariance is exact on the C4 subgroup.
"""

import functools
import math
from typing import List, Sequence

import numpy as np
from scipy import sparse

from src.nn import functional as F
from src.nn.layers import Module, ModuleList, Parameter, he_normal
from src.nn.tensor import Tensor

SUPPORTED_GROUP_ORDERS = (4, 8)


def check_group_order(n: int) -> None:
    if n not in SUPPORTED_GROUP_ORDERS:
        raise ValueError(f"Unsupported group order {n}; expected one of {SUPPORTED_GROUP_ORDERS}")


@functools.lru_cache(maxsize=None)
def _quarter_turn_operator(size: int) -> sparse.csr_matrix:
    """Permutation matrix of a counter-clockwise quarter turn of a ``size x size`` raster."""
    v_out, u_out = np.divmod(np.arange(size * size), size)
    source = (size - 1 - u_out) * size + v_out
    ones = np.ones(size * size)
    return sparse.csr_matrix((ones, (np.arange(size * size), source)), shape=(size * size, size * size))


@functools.lru_cache(maxsize=None)
def _bilinear_rotation_operator(size: int, angle: float) -> sparse.csr_matrix:
    """Bilinear resampling matrix rotating a raster by ``angle`` about its centre; samples outside are zero."""
    center = (size - 1) / 2.0
    v_out, u_out = np.divmod(np.arange(size * size), size)
    x, y = u_out - center, v_out - center
    c, s = math.cos(angle), math.sin(angle)
    # inverse rotation gives the source coordinate; rounding removes ulp noise at grid points
    src_u = np.round(c * x + s * y + center, 12)
    src_v = np.round(-s * x + c * y + center, 12)
    u0, v0 = np.floor(src_u).astype(int), np.floor(src_v).astype(int)
    fu, fv = src_u - u0, src_v - v0

    rows, cols, values = [], [], []
    for du, dv, weight in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)),
                           (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
        u, v = u0 + du, v0 + dv
        keep = (u >= 0) & (u < size) & (v >= 0) & (v < size) & (weight > 0)
        rows.append(np.arange(size * size)[keep])
        cols.append((v * size + u)[keep])
        values.append(weight[keep])
    return sparse.csr_matrix((np.concatenate(values), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(size * size, size * size))


@functools.lru_cache(maxsize=None)
def rotation_operator(size: int, g: int, n: int) -> sparse.csr_matrix:
    """Operator rotating a flattened ``size x size`` raster by ``2*pi*g/n``."""
    check_group_order(n)
    g %= n
    quarter_turns, remainder = divmod(4 * g, n)
    operator = sparse.identity(size * size, format='csr')
    if remainder:
        operator = _bilinear_rotation_operator(size, 2.0 * math.pi * remainder / (4 * n))
    for _ in range(quarter_turns):
        operator = _quarter_turn_operator(size) @ operator
    return operator.tocsr()


def rotate_group_feature(feature: Tensor, g: int) -> Tensor:
    """Group action on ``[n, m, h, w]``: spatial rotation by ``g`` steps plus a cyclic shift of the group axis."""
    n, size = feature.shape[0], feature.shape[-1]
    rotated = F.linear_map(feature, rotation_operator(size, g, n))
    return F.roll(rotated, g % n, axis=0)


def rotate_group_array(feature: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Exact C4 action on plain arrays ``[n, m, h, w]`` (used to check equivariance)."""
    n = feature.shape[0]
    return np.roll(np.rot90(feature, quarter_turns, axes=(-1, -2)), quarter_turns * n // 4, axis=0)


class LiftConv(Module):
    """Planar input ``[C, H, W]`` to group feature ``[n, m, H, W]``; slice ``g`` uses the kernel rotated by ``g``."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, n: int,
                 rng: np.random.Generator, dilation: int = 1):
        super().__init__()
        check_group_order(n)
        self.n, self.kernel_size, self.dilation = n, kernel_size, dilation
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels, kernel_size, kernel_size),
                                          in_channels * kernel_size * kernel_size))
        self.bias = Parameter(np.zeros(out_channels))

    def filter_bank(self) -> Tensor:
        m, c, k, _ = self.weight.shape
        bank = F.stack([F.linear_map(self.weight, rotation_operator(k, g, self.n)) for g in range(self.n)])
        return bank.reshape(self.n * m, c, k, k)

    def forward(self, x: Tensor) -> Tensor:
        bias = F.concat([self.bias] * self.n)
        out = F.conv2d(x, self.filter_bank(), bias, padding=self.dilation * (self.kernel_size // 2),
                       dilation=self.dilation)
        return out.reshape(self.n, self.weight.shape[0], *out.shape[-2:])


class GroupConv(Module):
    """Group feature to group feature; output slice ``g`` uses the kernel rotated by ``g`` with its group axis shifted by ``g``."""

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int, n: int,
                 rng: np.random.Generator, dilation: int = 1):
        super().__init__()
        check_group_order(n)
        self.n, self.kernel_size, self.dilation = n, kernel_size, dilation
        self.weight = Parameter(he_normal(rng, (out_channels, n, in_channels, kernel_size, kernel_size),
                                          n * in_channels * kernel_size * kernel_size))
        self.bias = Parameter(np.zeros(out_channels))

    def filter_bank(self) -> Tensor:
        m_out, n, m_in, k, _ = self.weight.shape
        bank = F.stack([F.linear_map(F.roll(self.weight, g, axis=1), rotation_operator(k, g, n)) for g in range(n)])
        return bank.reshape(n * m_out, n * m_in, k, k)

    def forward(self, x: Tensor) -> Tensor:
        n, m_in, h, w = x.shape
        if n != self.n or m_in != self.weight.shape[2]:
            raise ValueError(f"GroupConv expects [{self.n}, {self.weight.shape[2]}, h, w], got {list(x.shape)}")
        bias = F.concat([self.bias] * n)
        out = F.conv2d(x.reshape(n * m_in, h, w), self.filter_bank(), bias,
                       padding=self.dilation * (self.kernel_size // 2), dilation=self.dilation)
        return out.reshape(n, self.weight.shape[0], *out.shape[-2:])


def lift_conv(x: Tensor, layer: LiftConv) -> Tensor:
    return layer(x)


def group_conv(x: Tensor, layer: GroupConv) -> Tensor:
    return layer(x)


class EquivariantUNet(Module):
    """Key encoder: lifting layer, then a U-Net of group convolutions with 2x2 pooling."""

    def __init__(self, in_channels: int, widths: Sequence[int], out_channels: int, n: int,
                 kernel_size: int, rng: np.random.Generator):
        super().__init__()
        widths = list(widths)
        self.lift = LiftConv(in_channels, widths[0], kernel_size, n, rng)
        self.encoder = ModuleList()
        self.encoder.append(GroupConv(widths[0], widths[0], kernel_size, n, rng))
        for previous, width in zip(widths[:-1], widths[1:]):
            self.encoder.append(ModuleList([GroupConv(previous, width, kernel_size, n, rng),
                                            GroupConv(width, width, kernel_size, n, rng)]))
        self.decoder = ModuleList(
            GroupConv(widths[i] + widths[i + 1], widths[i], kernel_size, n, rng) for i in range(len(widths) - 1)
        )
        self.head = GroupConv(widths[0], out_channels, 1, n, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.encoder[0](F.relu(self.lift(x))))
        skips: List[Tensor] = [h]
        for level in list(self.encoder)[1:]:
            h = F.max_pool2(h)
            h = F.relu(level[1](F.relu(level[0](h))))
            skips.append(h)
        for index in reversed(range(len(self.decoder))):
            h = F.concat([skips[index], F.nearest_upsample2(h)], axis=1)
            h = F.relu(self.decoder[index](h))
        return self.head(h)


class DilatedEquivariantEncoder(Module):
    """Query encoder: same-size group convolutions with dilations 1, 2, 4, ... so odd crops stay exactly C4-equivariant."""

    def __init__(self, in_channels: int, widths: Sequence[int], out_channels: int, n: int,
                 kernel_size: int, rng: np.random.Generator):
        super().__init__()
        widths = list(widths)
        self.lift = LiftConv(in_channels, widths[0], kernel_size, n, rng)
        self.layers = ModuleList(
            GroupConv(previous, width, kernel_size, n, rng, dilation=2 ** (level + 1))
            for level, (previous, width) in enumerate(zip(widths[:-1], widths[1:]))
        )
        self.head = GroupConv(widths[-1], out_channels, 1, n, rng)

    def forward(self, x: Tensor) -> Tensor:
        h = F.relu(self.lift(x))
        for layer in self.layers:
            h = F.relu(layer(h))
        return self.head(h)
