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


import json
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List

import pandas as pd


ROW_COLUMNS = ["scene", "method", "time_s", "path_m", "success", "feasible", "abstained"]


@dataclass
class MethodStats:
    time_mean: float
    time_std: float
    path_mean: float
    path_std: float
    success_rate: float
    feasible_rate: float
    abstentions: int
    failures: int
    scenes: int


@dataclass
class EvalReport:
    """Per-method aggregates plus the per-scene rows they were computed from.

    ``success_rate`` is the strict criterion (feasible and within half a diagonal
    cell of the cheapest valid pose); ``feasible_rate`` only asks for a feasible pose.
    """

    methods: Dict[str, MethodStats]
    n_scenes: int
    seed: int
    config: Dict[str, Any]
    rows: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=ROW_COLUMNS))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "v": 1,
            "n_scenes": self.n_scenes,
            "seed": self.seed,
            "methods": {name: asdict(stats) for name, stats in self.methods.items()},
            "config": self.config,
            "rows": json.loads(self.rows.to_json(orient="records")),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvalReport":
        rows = pd.DataFrame(data.get("rows", []), columns=ROW_COLUMNS)
        return cls(
            methods={name: MethodStats(**stats) for name, stats in data["methods"].items()},
            n_scenes=int(data["n_scenes"]),
            seed=int(data["seed"]),
            config=data.get("config", {}),
            rows=rows,
        )


@dataclass
class TrainingRun:
    """One training log entering an ablation: ``metric`` is read from ``log`` per ``step``."""

    variant: str
    seed: int
    budget: int
    log: pd.DataFrame
    step: str
    metric: str


@dataclass
class AblationReport:
    summary: pd.DataFrame
    curves: pd.DataFrame
    variants: List[str]

    def gap(self, better: str, worse: str) -> float:
        """Difference of mean final metric between two variants."""
        final = self.summary.set_index("variant")["final_mean"]
        return float(final[better] - final[worse])
