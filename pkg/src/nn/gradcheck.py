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


import logging
from typing import Callable, Optional, Sequence

import numpy as np

from src.nn.tensor import Tensor


logger = logging.getLogger(__name__)


def finite_diff_check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-6,
                      floor: float = 1e-7, max_entries: Optional[int] = None, seed: int = 0) -> float:
    """Compare reverse-mode gradients with central differences.

    ``fn`` takes no arguments and reads the current data of ``inputs`` (leaf
    tensors or parameters); it must return a scalar tensor. The relative error of
    each entry is ``|a - n| / max(|a| + |n|, floor)``.

    Args:
        fn: Scalar function of ``inputs``
        inputs: Tensors to differentiate with respect to
        h: Central-difference step
        floor: Denominator floor so exact zeros compare as absolute error
        max_entries: Optionally check a random subset of entries per input
        seed: Seed of that subset

    Returns:
        Maximum relative error over every checked entry
    """
    for tensor in inputs:
        tensor.data = np.ascontiguousarray(tensor.data)
        tensor.requires_grad = True
        tensor.grad = None
    fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensor, grad in zip(inputs, analytic):
        flat = tensor.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = rng.choice(flat.size, size=max_entries, replace=False)
        for index in entries:
            original = flat[index]
            flat[index] = original + h
            upper = fn().item()
            flat[index] = original - h
            lower = fn().item()
            flat[index] = original
            numeric = (upper - lower) / (2.0 * h)
            a = grad.reshape(-1)[index]
            error = abs(a - numeric) / max(abs(a) + abs(numeric), floor)
            worst = max(worst, float(error))
    logger.debug(f"Finite-difference check: max relative error {worst:.3e}")
    return worst
