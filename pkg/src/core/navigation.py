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


"""Occupancy costmaps and 8-connected shortest paths for the navigation cost term."""

import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from src.core.grid import world_to_grid
from src.models.robot import RobotModel
from src.models.scene import OBSTACLE, TABLE, GridPose, OrthoProjection, Pose2

logger = logging.getLogger(__name__)

Cell = Tuple[int, int]  # (u, v)

SQRT2 = math.sqrt(2.0)
MOVES = tuple((du, dv) for du in (-1, 0, 1) for dv in (-1, 0, 1) if du or dv)


@dataclass
class NavCostmap:
    """Boolean occupancy indexed ``[v, u]``; True means blocked after inflation."""

    blocked: np.ndarray
    inflation_radius: float
    resolution: float
    origin: Tuple[float, float]

    @property
    def size(self) -> int:
        return int(self.blocked.shape[0])

    @property
    def sentinel(self) -> float:
        """Finite cost assigned to unreachable goals."""
        height, width = self.blocked.shape
        return 2.0 * (height + width) * self.resolution

    @property
    def half_diagonal(self) -> float:
        return 0.5 * SQRT2 * self.resolution

    def in_bounds(self, cell: Cell) -> bool:
        height, width = self.blocked.shape
        return 0 <= cell[0] < width and 0 <= cell[1] < height

    def is_free(self, cell: Cell) -> bool:
        return self.in_bounds(cell) and not self.blocked[cell[1], cell[0]]

    def neighbors(self, cell: Cell) -> Iterator[Tuple[Cell, float]]:
        """Free 8-neighbours with step lengths; diagonals may not cut a blocked corner."""
        u, v = cell
        for du, dv in MOVES:
            nxt = (u + du, v + dv)
            if not self.is_free(nxt):
                continue
            if du and dv:
                if not (self.is_free((u + du, v)) and self.is_free((u, v + dv))):
                    continue
                yield nxt, SQRT2 * self.resolution
            else:
                yield nxt, self.resolution


@dataclass
class Path:
    cells: List[Cell] = field(default_factory=list)
    length: float = 0.0


def build_costmap(proj: OrthoProjection, robot: RobotModel, inflation_radius: Optional[float] = None) -> NavCostmap:
    """Mark table and obstacle pixels, inflated by Euclidean distance.

    Args:
        proj: Top-down projection
        robot: Robot model; its footprint inradius is the default inflation
        inflation_radius: Override in meters (0 keeps the raw occupancy)
    """
    radius = robot.inradius if inflation_radius is None else float(inflation_radius)
    raw = (proj.semantic[TABLE] > 0.5) | (proj.semantic[OBSTACLE] > 0.5)
    if radius <= 0.0 or not raw.any():
        blocked = raw.copy()
    else:
        distance = ndimage.distance_transform_edt(~raw) * proj.resolution
        blocked = distance <= radius + 1e-9
    return NavCostmap(blocked=blocked, inflation_radius=radius, resolution=proj.resolution, origin=tuple(proj.origin))


def octile(a: Cell, b: Cell, resolution: float) -> float:
    du, dv = abs(a[0] - b[0]), abs(a[1] - b[1])
    return resolution * (max(du, dv) + (SQRT2 - 1.0) * min(du, dv))


def astar(costmap: NavCostmap, start: Cell, goal: Cell) -> Optional[Path]:
    """Minimal-length 8-connected path from ``start`` to ``goal``.

    Returns:
        Path, or None if the goal is blocked or unreachable

    Raises:
        ValueError: If the start cell is blocked or outside the map
    """
    if not costmap.is_free(start):
        raise ValueError(f"A* start cell {start} is blocked")
    if not costmap.is_free(goal):
        return None

    counter = itertools.count()
    frontier = [(octile(start, goal, costmap.resolution), next(counter), start)]
    cost_so_far = {start: 0.0}
    came_from = {start: None}
    closed = set()

    while frontier:
        _, _, current = heapq.heappop(frontier)
        if current == goal:
            return Path(_reconstruct(came_from, goal), cost_so_far[goal])
        if current in closed:
            continue
        closed.add(current)
        for nxt, step in costmap.neighbors(current):
            new_cost = cost_so_far[current] + step
            if new_cost < cost_so_far.get(nxt, math.inf):
                cost_so_far[nxt] = new_cost
                came_from[nxt] = current
                heapq.heappush(frontier, (new_cost + octile(nxt, goal, costmap.resolution), next(counter), nxt))
    return None


def _reconstruct(came_from, goal: Cell) -> List[Cell]:
    path = [goal]
    while came_from[path[-1]] is not None:
        path.append(came_from[path[-1]])
    path.reverse()
    return path


def distance_field(costmap: NavCostmap, start: Cell) -> np.ndarray:
    """Single-source shortest path lengths to every cell (``inf`` where unreachable), indexed ``[v, u]``."""
    costs = np.full(costmap.blocked.shape, np.inf)
    if not costmap.is_free(start):
        return costs
    costs[start[1], start[0]] = 0.0
    frontier = [(0.0, start)]
    while frontier:
        cost, current = heapq.heappop(frontier)
        if cost > costs[current[1], current[0]]:
            continue
        for nxt, step in costmap.neighbors(current):
            new_cost = cost + step
            if new_cost < costs[nxt[1], nxt[0]]:
                costs[nxt[1], nxt[0]] = new_cost
                heapq.heappush(frontier, (new_cost, nxt))
    return costs


def snap_to_free(costmap: NavCostmap, cell: Cell, radius_cells: int) -> Optional[Cell]:
    """Nearest free cell within ``radius_cells`` (Euclidean), ties by (v, u)."""
    if costmap.is_free(cell):
        return cell
    best = None
    for dv in range(-radius_cells, radius_cells + 1):
        for du in range(-radius_cells, radius_cells + 1):
            distance = du * du + dv * dv
            candidate = (cell[0] + du, cell[1] + dv)
            if distance > radius_cells ** 2 or not costmap.is_free(candidate):
                continue
            key = (distance, candidate[1], candidate[0])
            if best is None or key < best[0]:
                best = (key, candidate)
    if best is not None:
        logger.debug(f"Snapped blocked cell {cell} to {best[1]}")
    return None if best is None else best[1]


def start_cell(costmap: NavCostmap, start: Pose2, snap_radius_cells: int = 2) -> Optional[Cell]:
    cell = world_to_grid(start, costmap, 1)
    return snap_to_free(costmap, (cell.u, cell.v), snap_radius_cells)


def nav_cost(costmap: NavCostmap, start: Pose2, goal: GridPose, snap_radius_cells: int = 2) -> float:
    """A* path length in meters from the start pose's cell to the goal cell.

    Blocked endpoints are snapped to the nearest free cell within ``snap_radius_cells``;
    unreachable goals cost ``costmap.sentinel``.
    """
    source = start_cell(costmap, start, snap_radius_cells)
    target = snap_to_free(costmap, (goal.u, goal.v), snap_radius_cells)
    if source is None or target is None:
        return costmap.sentinel
    path = astar(costmap, source, target)
    return costmap.sentinel if path is None else path.length


def nav_costs(costmap: NavCostmap, start: Pose2, goals: Sequence[GridPose], snap_radius_cells: int = 2) -> np.ndarray:
    """Price many goals from one start with a single distance field; equal to ``nav_cost`` per goal."""
    source = start_cell(costmap, start, snap_radius_cells)
    if source is None:
        return np.full(len(goals), costmap.sentinel)
    field_costs = distance_field(costmap, source)
    return np.array([lookup_cost(costmap, field_costs, goal, snap_radius_cells) for goal in goals], dtype=np.float64)


def lookup_cost(costmap: NavCostmap, field_costs: np.ndarray, goal: GridPose, snap_radius_cells: int) -> float:
    target = snap_to_free(costmap, (goal.u, goal.v), snap_radius_cells)
    if target is None or not np.isfinite(field_costs[target[1], target[0]]):
        return costmap.sentinel
    return float(field_costs[target[1], target[0]])


def path_to(costmap: NavCostmap, start: Pose2, goal: GridPose, snap_radius_cells: int = 2) -> Optional[Path]:
    """The A* path behind ``nav_cost`` (None when unreachable), for rendering."""
    source = start_cell(costmap, start, snap_radius_cells)
    target = snap_to_free(costmap, (goal.u, goal.v), snap_radius_cells)
    if source is None or target is None:
        return None
    return astar(costmap, source, target)
