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
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi

SEMANTIC_CLASSES = ("free", "table", "obstacle", "object", "robot")
FREE, TABLE, OBSTACLE, OBJECT, ROBOT = range(len(SEMANTIC_CLASSES))

SCENE_SCHEMA_VERSION = 1


def normalize_angle(theta: float) -> float:
    """Wrap an angle into [0, 2π)."""
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2π
    return 0.0 if wrapped >= TWO_PI else wrapped


@dataclass(frozen=True)
class Pose2:
    """Planar pose in the world frame (meters, radians)."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def rotated_about_origin(self, angle: float) -> "Pose2":
        c, s = math.cos(angle), math.sin(angle)
        return Pose2(c * self.x - s * self.y, s * self.x + c * self.y, self.theta + angle)

    def to_dict(self) -> Dict[str, float]:
        return {"x_m": self.x, "y_m": self.y, "theta_rad": self.theta}

    @classmethod
    def from_dict(cls, data: Dict) -> "Pose2":
        return cls(data["x_m"], data["y_m"], data["theta_rad"])


@dataclass(frozen=True)
class GridPose:
    """Discrete base pose: pixel column ``u``, pixel row ``v``, orientation bin ``k``."""

    u: int
    v: int
    k: int

    def sort_key(self) -> Tuple[int, int, int]:
        """Lexicographic (k, v, u) order used for every tie-break."""
        return (self.k, self.v, self.u)


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle of ``length`` along its heading and ``width`` across it."""

    center: Pose2
    length: float
    width: float

    def corners(self) -> np.ndarray:
        """Corner coordinates, shape (4, 2), counter-clockwise."""
        c, s = math.cos(self.center.theta), math.sin(self.center.theta)
        half_l, half_w = self.length / 2.0, self.width / 2.0
        local = np.array([[half_l, half_w], [-half_l, half_w], [-half_l, -half_w], [half_l, -half_w]])
        rotation = np.array([[c, -s], [s, c]])
        return local @ rotation.T + self.center.position

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of ``points`` (..., 2) lying inside or on the boundary."""
        c, s = math.cos(self.center.theta), math.sin(self.center.theta)
        delta = np.asarray(points, dtype=np.float64) - self.center.position
        along = delta[..., 0] * c + delta[..., 1] * s
        across = -delta[..., 0] * s + delta[..., 1] * c
        return (np.abs(along) <= self.length / 2.0) & (np.abs(across) <= self.width / 2.0)

    def rotated_about_origin(self, angle: float) -> "OrientedRect":
        return OrientedRect(self.center.rotated_about_origin(angle), self.length, self.width)

    def to_dict(self) -> Dict[str, float]:
        return {**self.center.to_dict(), "length_m": self.length, "width_m": self.width}

    @classmethod
    def from_dict(cls, data: Dict) -> "OrientedRect":
        return cls(Pose2.from_dict(data), data["length_m"], data["width_m"])


@dataclass(frozen=True)
class Obstacle:
    rect: OrientedRect
    height: float
    full_height: bool = True

    def to_dict(self) -> Dict:
        return {**self.rect.to_dict(), "height_m": self.height, "full_height": self.full_height}

    @classmethod
    def from_dict(cls, data: Dict) -> "Obstacle":
        return cls(OrientedRect.from_dict(data), data["height_m"], bool(data["full_height"]))


@dataclass(frozen=True)
class GraspObject:
    """Graspable cube resting on the table; grasped top-down at ``yaw``."""

    x: float
    y: float
    yaw: float
    size: float = 0.075

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_dict(self) -> Dict[str, float]:
        return {"x_m": self.x, "y_m": self.y, "yaw_rad": self.yaw, "size_m": self.size}

    @classmethod
    def from_dict(cls, data: Dict) -> "GraspObject":
        return cls(data["x_m"], data["y_m"], data["yaw_rad"], data["size_m"])


@dataclass(frozen=True)
class SceneSpec:
    world_half_extent: float
    resolution: float
    table: Optional[OrientedRect]
    table_height: float
    obstacles: Tuple[Obstacle, ...]
    object: Optional[GraspObject]
    robot_start: Pose2
    seed: int

    def static_rects(self) -> Tuple[OrientedRect, ...]:
        """Footprints the robot base may not touch: the table and every obstacle."""
        table = (self.table,) if self.table is not None else ()
        return table + tuple(obstacle.rect for obstacle in self.obstacles)

    def to_dict(self) -> Dict:
        return {
            "v": SCENE_SCHEMA_VERSION,
            "world_half_extent_m": self.world_half_extent,
            "resolution_m_per_px": self.resolution,
            "table": None if self.table is None else {**self.table.to_dict(), "height_m": self.table_height},
            "obstacles": [obstacle.to_dict() for obstacle in self.obstacles],
            "object": None if self.object is None else self.object.to_dict(),
            "robot_start": self.robot_start.to_dict(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SceneSpec":
        return cls(
            world_half_extent=data["world_half_extent_m"],
            resolution=data["resolution_m_per_px"],
            table=None if data["table"] is None else OrientedRect.from_dict(data["table"]),
            table_height=0.0 if data["table"] is None else data["table"]["height_m"],
            obstacles=tuple(Obstacle.from_dict(item) for item in data["obstacles"]),
            object=None if data["object"] is None else GraspObject.from_dict(data["object"]),
            robot_start=Pose2.from_dict(data["robot_start"]),
            seed=int(data["seed"]),
        )


@dataclass
class OrthoProjection:
    """Top-down state: one-hot semantic raster plus depth heightmap.

    Arrays are indexed ``[..., v, u]`` with ``v`` growing along world +y and ``u``
    along world +x; ``origin`` is the world position of the corner of pixel (0, 0).
    """

    semantic: np.ndarray
    depth: np.ndarray
    resolution: float
    origin: Tuple[float, float]

    @property
    def size(self) -> int:
        return int(self.depth.shape[0])

    def stacked(self) -> np.ndarray:
        """Network input: semantic channels followed by depth, shape (C_sem + 1, H, W)."""
        return np.concatenate([self.semantic, self.depth[None]], axis=0).astype(np.float32)


@dataclass
class ImagePatch:
    data: np.ndarray
    center_cell: Tuple[int, int] = field(default=(0, 0))
