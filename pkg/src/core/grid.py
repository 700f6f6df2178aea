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


import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from src.core.errors import OutOfBoundsError
from src.models.scene import GridPose, Pose2, TWO_PI


@dataclass(frozen=True)
class GridSpec:
    """Square pixel grid centred on the world origin."""

    size: int
    resolution: float
    origin: Tuple[float, float]

    @classmethod
    def centered(cls, size: int, resolution: float) -> "GridSpec":
        half = size * resolution / 2.0
        return cls(size, resolution, (-half, -half))

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """World x of every column and world y of every row."""
        offsets = (np.arange(self.size) + 0.5) * self.resolution
        return self.origin[0] + offsets, self.origin[1] + offsets

    def pixel_centers(self) -> np.ndarray:
        """World coordinates of all pixel centres, shape (H, W, 2), indexed [v, u]."""
        xs, ys = self.cell_centers()
        grid_x, grid_y = np.meshgrid(xs, ys)
        return np.stack([grid_x, grid_y], axis=-1)


def grid_of(proj) -> GridSpec:
    return GridSpec(proj.size, proj.resolution, tuple(proj.origin))


def angle_to_bin(theta: float, num_orientations: int) -> int:
    """Nearest of ``K`` uniformly spaced headings; exact ties go to the lower index."""
    steps = (theta % TWO_PI) / (TWO_PI / num_orientations)
    return int(math.ceil(steps - 0.5)) % num_orientations


def bin_to_angle(k: int, num_orientations: int) -> float:
    return TWO_PI * k / num_orientations


def world_to_grid(pose: Pose2, proj, num_orientations: int) -> GridPose:
    """Cell containing ``pose`` plus its nearest orientation bin.

    Raises:
        OutOfBoundsError: If the position falls outside the raster
    """
    grid = grid_of(proj)
    u = _axis_index(pose.x, grid.origin[0], grid)
    v = _axis_index(pose.y, grid.origin[1], grid)
    if u is None or v is None:
        raise OutOfBoundsError(f"Pose ({pose.x:.3f}, {pose.y:.3f}) lies outside the {grid.size}x{grid.size} grid")
    return GridPose(u, v, angle_to_bin(pose.theta, num_orientations))


def _axis_index(value: float, origin: float, grid: GridSpec):
    index = int(math.floor((value - origin) / grid.resolution))
    if index == grid.size and math.isclose(value, origin + grid.size * grid.resolution, abs_tol=1e-9):
        index = grid.size - 1
    if 0 <= index < grid.size:
        return index
    return None


def grid_to_world(cell: GridPose, proj, num_orientations: int) -> Pose2:
    """Cell centre and bin-centre heading of a discrete pose."""
    grid = grid_of(proj)
    return Pose2(
        grid.origin[0] + (cell.u + 0.5) * grid.resolution,
        grid.origin[1] + (cell.v + 0.5) * grid.resolution,
        bin_to_angle(cell.k, num_orientations),
    )


def rot90_grid(array: np.ndarray, quarter_turns: int = 1) -> np.ndarray:
    """Rotate ``[..., v, u]`` rasters counter-clockwise in the world frame."""
    return np.rot90(array, quarter_turns, axes=(-1, -2))


def rotate_label_stack(stack: np.ndarray, quarter_turns: int = 1) -> np.ndarray:
    """Group action on ``[K, H, W]`` orientation stacks: spatial rotation plus channel shift."""
    num_orientations = stack.shape[-3]
    if (num_orientations * quarter_turns) % 4:
        raise ValueError(f"A quarter turn does not map {num_orientations} orientation bins onto themselves")
    shift = num_orientations * quarter_turns // 4
    return np.roll(rot90_grid(stack, quarter_turns), shift, axis=-3)
