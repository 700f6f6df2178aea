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

import numpy as np

from src.models.scene import OrientedRect, Pose2


@dataclass(frozen=True)
class RobotModel:
    """Planar mobile manipulator: rectangular base carrying a 2-link arm.

    Joint angles are measured relative to the base heading; the arm moves in a
    plane above table height, so only full-height obstacles can block its links.
    """

    footprint_length: float = 0.5
    footprint_width: float = 0.5
    arm_mount_offset: float = 0.15
    link1: float = 0.45
    link2: float = 0.40
    q1_max: float = math.radians(135.0)
    q2_max: float = math.radians(150.0)
    grasp_tolerance: float = 0.01
    base_height: float = 0.4
    arm_column_height: float = 1.0
    arm_column_radius: float = 0.08

    def __post_init__(self):
        if self.link1 <= 0 or self.link2 <= 0:
            raise ValueError(f"Link lengths must be positive, got {self.link1}, {self.link2}")
        if self.footprint_length <= 0 or self.footprint_width <= 0:
            raise ValueError("Footprint sides must be positive")

    @property
    def r_min(self) -> float:
        return abs(self.link1 - self.link2)

    @property
    def r_max(self) -> float:
        return self.link1 + self.link2

    @property
    def inradius(self) -> float:
        return min(self.footprint_length, self.footprint_width) / 2.0

    def footprint(self, base: Pose2) -> OrientedRect:
        return OrientedRect(base, self.footprint_length, self.footprint_width)

    def mount_position(self, base: Pose2) -> np.ndarray:
        return base.position + self.arm_mount_offset * np.array([math.cos(base.theta), math.sin(base.theta)])
