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


import os
from typing import List, Optional

import numpy as np

SEED_ENV_VAR = "BASEPOSE_SEED"


def resolve_seed(explicit: Optional[int], fallback: int) -> int:
    """Pick the run seed: explicit flag, then $BASEPOSE_SEED, then the config value."""
    if explicit is not None:
        return int(explicit)
    env_value = os.environ.get(SEED_ENV_VAR)
    if env_value:
        return int(env_value)
    return int(fallback)


def spawn_seeds(seed: int, n: int) -> List[int]:
    """Derive ``n`` independent child seeds from one root seed.

    Child ``i`` depends only on ``(seed, i)``, so work can be split across
    processes without changing the result.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]
