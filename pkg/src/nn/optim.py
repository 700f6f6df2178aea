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


from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from src.nn.layers import Parameter


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[int, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[int, np.ndarray] = field(default_factory=dict)


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: List[Parameter] = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for index, parameter in enumerate(self.params):
            self.state.first_moment[index] = np.zeros_like(parameter.data)
            self.state.second_moment[index] = np.zeros_like(parameter.data)

    def zero_grad(self) -> None:
        for parameter in self.params:
            parameter.zero_grad()

    def step(self) -> None:
        s = self.state
        s.step += 1
        correction1 = 1.0 - s.beta1 ** s.step
        correction2 = 1.0 - s.beta2 ** s.step
        for index, parameter in enumerate(self.params):
            if parameter.grad is None:
                continue
            grad = parameter.grad
            m = s.first_moment[index] = s.beta1 * s.first_moment[index] + (1.0 - s.beta1) * grad
            v = s.second_moment[index] = s.beta2 * s.second_moment[index] + (1.0 - s.beta2) * grad * grad
            update = s.lr * (m / correction1) / (np.sqrt(v / correction2) + s.eps)
            parameter.data = (parameter.data - update).astype(parameter.dtype)


def adam_step(params: Sequence[Parameter], grads: Sequence[np.ndarray], optimizer: Adam) -> None:
    """Functional form: load ``grads`` into ``params`` and take one step of ``optimizer``."""
    for parameter, grad in zip(params, grads):
        parameter.grad = np.asarray(grad, dtype=parameter.dtype)
    optimizer.step()
