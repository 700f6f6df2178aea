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


"""Comparison planners: fixed base poses, proximity-based and navigation-cost-based selection."""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from src.core.errors import OutOfBoundsError
from src.core.grid import grid_to_world, world_to_grid
from src.core.kinematics import pose_is_valid
from src.core.navigation import NavCostmap, nav_cost, nav_costs
from src.models.irm import IRMLabel
from src.models.robot import RobotModel
from src.models.scene import GridPose, OrientedRect, Pose2, SceneSpec

logger = logging.getLogger(__name__)

FBP_STANDOFF = 0.65


@dataclass(frozen=True)
class FixedPoseSet:
    """Four side midpoints and four corners at ``standoff`` from the table edge, facing its centre.

    Poses are defined in the table frame, so they move rigidly with the table.
    """

    standoff: float = FBP_STANDOFF

    def local_poses(self, length: float, width: float) -> List[Pose2]:
        half_l, half_w = length / 2.0, width / 2.0
        d = self.standoff
        diagonal = d / math.sqrt(2.0)
        points = [(half_l + d, 0.0), (0.0, half_w + d), (-half_l - d, 0.0), (0.0, -half_w - d),
                  (half_l + diagonal, half_w + diagonal), (-half_l - diagonal, half_w + diagonal),
                  (-half_l - diagonal, -half_w - diagonal), (half_l + diagonal, -half_w - diagonal)]
        return [Pose2(x, y, math.atan2(-y, -x)) for x, y in points]

    def world_poses(self, table: OrientedRect) -> List[Pose2]:
        c, s = math.cos(table.center.theta), math.sin(table.center.theta)
        return [Pose2(table.center.x + c * p.x - s * p.y, table.center.y + s * p.x + c * p.y,
                      p.theta + table.center.theta)
                for p in self.local_poses(table.length, table.width)]


@dataclass
class FbpResult:
    pose: Optional[Pose2]
    path_length: float
    attempts: int

    @property
    def success(self) -> bool:
        return self.pose is not None


@dataclass
class Selection:
    """A selected cell (None on abstention) with its navigation cost from the robot start."""

    pose: Optional[GridPose]
    nav_cost: float = math.nan
    unreachable: bool = False

    @property
    def abstained(self) -> bool:
        return self.pose is None


def fbp_select(scene: SceneSpec, robot: RobotModel, costmap: NavCostmap, pose_set: FixedPoseSet,
               num_orientations: int, snap_radius_cells: int = 2) -> FbpResult:
    """Try the fixed poses closest-first until one is collision-free and IK-feasible.

    After a failed attempt the robot stands at the attempted pose and the next
    attempt is the closest remaining pose from there. Path length accumulates the
    A* leg of every attempt; a failure returns no pose with the total travelled.
    """
    if scene.table is None:
        return FbpResult(None, 0.0, 0)
    remaining = pose_set.world_poses(scene.table)
    current = scene.robot_start
    length = 0.0
    attempts = 0
    while remaining:
        index = min(range(len(remaining)),
                    key=lambda i: math.hypot(remaining[i].x - current.x, remaining[i].y - current.y))
        target = remaining.pop(index)
        try:
            cell = world_to_grid(target, costmap, num_orientations)
        except OutOfBoundsError:
            logger.debug(f"Fixed pose ({target.x:.2f}, {target.y:.2f}) lies outside the map, skipped")
            continue
        attempts += 1
        length += nav_cost(costmap, current, cell, snap_radius_cells)
        if pose_is_valid(scene, robot, target):
            return FbpResult(target, length, attempts)
        current = target
    logger.debug(f"Every fixed pose failed in scene {scene.seed} after {attempts} attempts")
    return FbpResult(None, length, attempts)


def irm_cells(irm: IRMLabel) -> List[GridPose]:
    return [GridPose(int(u), int(v), int(k)) for k, v, u in irm.positive_cells()]


def pbs_select(scene: SceneSpec, robot: RobotModel, costmap: NavCostmap, irm: IRMLabel,
               snap_radius_cells: int = 2) -> Selection:
    """Positive IRM cell closest to the robot in Euclidean distance, ties by (k, v, u)."""
    cells = irm_cells(irm)
    if not cells:
        return Selection(None)
    centres = [grid_to_world(cell, costmap, irm.num_orientations) for cell in cells]
    positions = np.array([[p.x, p.y] for p in centres])
    distances = np.hypot(positions[:, 0] - scene.robot_start.x, positions[:, 1] - scene.robot_start.y)
    best = cells[int(np.argmin(distances))]
    cost = nav_cost(costmap, scene.robot_start, best, snap_radius_cells)
    return Selection(best, cost, cost >= costmap.sentinel)


def nbs_select(scene: SceneSpec, robot: RobotModel, costmap: NavCostmap, irm: IRMLabel,
               snap_radius_cells: int = 2) -> Selection:
    """Positive IRM cell with the lowest navigation cost, ties by (k, v, u)."""
    cells = irm_cells(irm)
    if not cells:
        return Selection(None)
    costs = nav_costs(costmap, scene.robot_start, cells, snap_radius_cells)
    index = int(np.argmin(costs))
    unreachable = bool(costs[index] >= costmap.sentinel)
    if unreachable:
        logger.debug(f"No positive IRM cell is reachable in scene {scene.seed}")
    return Selection(cells[index], float(costs[index]), unreachable)
