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


"""Separating-axis tests between oriented rectangles and segments, vectorised over poses."""

import numpy as np


def rect_corners(cx, cy, theta, length: float, width: float) -> np.ndarray:
    """Corners of rectangles centred at ``(cx, cy)`` with heading ``theta``, shape (..., 4, 2)."""
    cx, cy, theta = np.broadcast_arrays(np.asarray(cx, float), np.asarray(cy, float), np.asarray(theta, float))
    c, s = np.cos(theta)[..., None], np.sin(theta)[..., None]
    local_x = np.array([1.0, -1.0, -1.0, 1.0]) * (length / 2.0)
    local_y = np.array([1.0, 1.0, -1.0, -1.0]) * (width / 2.0)
    xs = cx[..., None] + c * local_x - s * local_y
    ys = cy[..., None] + s * local_x + c * local_y
    return np.stack([xs, ys], axis=-1)


def _edge_normals(polygons: np.ndarray) -> np.ndarray:
    """Unnormalised outward-or-inward normals of each polygon edge, shape (..., P, 2)."""
    edges = np.roll(polygons, -1, axis=-2) - polygons
    return np.stack([edges[..., 1], -edges[..., 0]], axis=-1)


def _separated_on(axes: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """True where some axis separates the projections of ``a`` and ``b``.

    axes: (..., M, 2); a: (..., P, 2); b: (..., Q, 2), all broadcastable.
    """
    proj_a = np.einsum('...mk,...pk->...mp', axes, a)
    proj_b = np.einsum('...mk,...qk->...mq', axes, b)
    gap = (proj_a.min(axis=-1) > proj_b.max(axis=-1)) | (proj_b.min(axis=-1) > proj_a.max(axis=-1))
    return gap.any(axis=-1)


def polygons_overlap(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Convex polygon overlap (touching counts as overlap), broadcast over leading axes."""
    lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    a = np.broadcast_to(a, lead + a.shape[-2:])
    b = np.broadcast_to(b, lead + b.shape[-2:])
    axes = np.concatenate([_edge_normals(a), _edge_normals(b)], axis=-2)
    return ~_separated_on(axes, a, b)


def segments_hit_polygon(p0: np.ndarray, p1: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Whether segments ``p0 -> p1`` (..., 2) touch a convex ``polygon`` (P, 2)."""
    segment = np.stack([p0, p1], axis=-2)
    direction = p1 - p0
    segment_normal = np.stack([direction[..., 1], -direction[..., 0]], axis=-1)[..., None, :]
    polygon_axes = np.broadcast_to(_edge_normals(polygon), segment.shape[:-2] + polygon.shape)
    axes = np.concatenate([polygon_axes, segment_normal], axis=-2)
    return ~_separated_on(axes, segment, polygon)
