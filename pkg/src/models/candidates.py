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
from typing import Iterator, List

import numpy as np

from src.models.scene import GridPose, Pose2

CANDIDATE_FEATURES = 8
ROBOT_FEATURES = 4


@dataclass(frozen=True)
class Candidate:
    pose: GridPose
    score: float = 1.0


@dataclass
class CandidateSet:
    """Discrete base poses proposed for one scene, best score first."""

    candidates: List[Candidate] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self.candidates)

    def __getitem__(self, index: int) -> Candidate:
        return self.candidates[index]

    @property
    def is_empty(self) -> bool:
        return not self.candidates

    def poses(self) -> List[GridPose]:
        return [candidate.pose for candidate in self.candidates]


@dataclass
class CandidateGraph:
    """Stage-2 input: candidate nodes, the robot node and the depth heightmap.

    Every candidate's neighbourhood is all other candidates, so no edge list is stored.
    """

    candidate_features: np.ndarray
    robot_features: np.ndarray
    depth: np.ndarray
    candidates: CandidateSet

    @property
    def num_candidates(self) -> int:
        return int(self.candidate_features.shape[0])

    @classmethod
    def build(cls, candidates: CandidateSet, robot: Pose2, robot_cell: GridPose,
              depth: np.ndarray, num_orientations: int) -> "CandidateGraph":
        """Candidate rows: position, heading (cos, sin), score, offset from the robot cell and its length."""
        height, width = depth.shape
        features = np.zeros((len(candidates), CANDIDATE_FEATURES), dtype=np.float32)
        for row, candidate in enumerate(candidates):
            angle = 2.0 * math.pi * candidate.pose.k / num_orientations
            du = (candidate.pose.u - robot_cell.u) / width
            dv = (candidate.pose.v - robot_cell.v) / height
            features[row] = (candidate.pose.u / width, candidate.pose.v / height,
                             math.cos(angle), math.sin(angle), candidate.score, du, dv, math.hypot(du, dv))
        robot_features = np.array(
            [robot_cell.u / width, robot_cell.v / height, math.cos(robot.theta), math.sin(robot.theta)],
            dtype=np.float32,
        )
        return cls(features, robot_features, depth.astype(np.float32), candidates)
