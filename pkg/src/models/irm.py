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


from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass
class IRMLabel:
    """Ground-truth valid base poses: ``labels[k, v, u] == 1`` iff the pose is collision-free and IK-feasible."""

    labels: np.ndarray
    resolution: float
    origin: Tuple[float, float]

    @property
    def num_orientations(self) -> int:
        return int(self.labels.shape[0])

    @property
    def size(self) -> int:
        return int(self.labels.shape[-1])

    @property
    def is_empty(self) -> bool:
        return not self.labels.any()

    def positive_cells(self) -> np.ndarray:
        """(k, v, u) index triples of every positive cell in lexicographic order."""
        return np.argwhere(self.labels > 0)
