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
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from typing import Any, Dict, List, Optional

import yaml

from src.core.errors import ConfigError
from src.models.robot import RobotModel


@dataclass
class SceneConfig:
    world_half_extent: float = 2.4
    grid_size: int = 64
    resolution: float = 0.075
    num_orientations: int = 8
    crop_size: int = 25
    table_length: float = 1.6
    table_width: float = 0.8
    table_height: float = 0.75
    table_center_jitter: float = 0.4
    obstacle_count_min: int = 1
    obstacle_count_max: int = 4
    obstacle_side_min: float = 0.2
    obstacle_side_max: float = 0.8
    obstacle_full_height_prob: float = 0.7
    obstacle_height_full: float = 1.5
    obstacle_height_low: float = 0.3
    obstacle_spawn_radius: float = 2.0
    object_size: float = 0.075
    object_margin: float = 0.1
    robot_start_radius: float = 3.0
    max_retries: int = 200


@dataclass
class RobotConfig:
    footprint_length: float = 0.5
    footprint_width: float = 0.5
    arm_mount_offset: float = 0.15
    link1: float = 0.45
    link2: float = 0.40
    q1_max_deg: float = 135.0
    q2_max_deg: float = 150.0
    grasp_tolerance: float = 0.01

    def to_model(self) -> RobotModel:
        return RobotModel(
            footprint_length=self.footprint_length,
            footprint_width=self.footprint_width,
            arm_mount_offset=self.arm_mount_offset,
            link1=self.link1,
            link2=self.link2,
            q1_max=math.radians(self.q1_max_deg),
            q2_max=math.radians(self.q2_max_deg),
            grasp_tolerance=self.grasp_tolerance,
        )


@dataclass
class IrmConfig:
    stride: int = 1
    dataset_size: int = 1000
    validation_fraction: float = 0.1
    max_retries: int = 50


@dataclass
class NavigationConfig:
    # None inflates by the footprint inradius
    inflation_radius: Optional[float] = None
    snap_radius_cells: int = 2


@dataclass
class TransporterConfig:
    n_rotations: int = 8
    key_widths: List[int] = field(default_factory=lambda: [8, 16, 32, 64])
    query_widths: List[int] = field(default_factory=lambda: [4, 8, 16, 32])
    feature_channels: int = 8
    kernel_size: int = 3
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 20
    tau: float = 0.5
    max_candidates: int = 64


@dataclass
class RewardConfig:
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = -1.0
    epsilon: float = 1e-6


@dataclass
class ObpConfig:
    embed_dim: int = 64
    attention_layers: int = 3
    decoder_hidden: List[int] = field(default_factory=lambda: [64, 64])
    depth_channels: List[int] = field(default_factory=lambda: [8, 16, 32, 64])
    leaky_slope: float = 0.2
    learning_rate: float = 1e-4
    interactions: int = 2000
    baseline: str = "greedy"
    sign_preserving_advantage: bool = False
    rolling_window: int = 100
    scene_pool: int = 200
    irm_source: str = "oracle"
    max_candidates: int = 64


@dataclass
class EvalConfig:
    n_scenes: int = 100
    methods: List[str] = field(default_factory=lambda: ["fbp", "pbs", "nbs", "learned"])
    fbp_standoff: float = 0.65
    serialize_timing: bool = False
    ablation_seeds: int = 3


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1
    scene: SceneConfig = field(default_factory=SceneConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    irm: IrmConfig = field(default_factory=IrmConfig)
    navigation: NavigationConfig = field(default_factory=NavigationConfig)
    transporter: TransporterConfig = field(default_factory=TransporterConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    obp: ObpConfig = field(default_factory=ObpConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "RunConfig":
        config = _build(cls, data or {}, "")
        validate(config)
        return config

    def with_overrides(self, overrides: List[str]) -> "RunConfig":
        """Apply ``section.key=value`` overrides; values are parsed as YAML scalars."""
        data = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"Override must look like section.key=value, got {item!r}")
            dotted, raw_value = item.split("=", 1)
            target = data
            *parents, leaf = dotted.strip().split(".")
            for name in parents:
                if not isinstance(target.get(name), dict):
                    raise ConfigError(f"Unknown config section: {dotted}")
                target = target[name]
            if leaf not in target:
                raise ConfigError(f"Unknown config key: {dotted}")
            target[leaf] = yaml.safe_load(raw_value)
        return RunConfig.from_dict(data)


def _build(cls, data: Dict[str, Any], prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(f"Section {prefix or '<root>'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"Unknown config keys in {prefix or '<root>'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        default = getattr(cls(), name)
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{prefix}{name}.")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def validate(config: RunConfig) -> None:
    """Range-check every section; raises ConfigError on the first violation."""
    s = config.scene
    _require(s.world_half_extent > 0, "scene.world_half_extent must be positive")
    _require(s.resolution > 0, "scene.resolution must be positive")
    _require(s.grid_size * s.resolution >= 2 * s.world_half_extent - 1e-9,
             "scene.grid_size * scene.resolution must cover the world extent")
    _require(s.num_orientations >= 1, "scene.num_orientations must be >= 1")
    _require(s.crop_size >= 1 and s.crop_size % 2 == 1, "scene.crop_size must be odd")
    _require(0 <= s.obstacle_count_min <= s.obstacle_count_max, "obstacle count range is empty")
    _require(0 < s.obstacle_side_min <= s.obstacle_side_max, "obstacle side range is invalid")
    _require(0.0 <= s.obstacle_full_height_prob <= 1.0, "obstacle_full_height_prob must be a probability")
    _require(s.robot_start_radius > 0, "scene.robot_start_radius must be positive")
    _require(s.max_retries >= 1, "scene.max_retries must be >= 1")
    _require(2 * s.object_margin < min(s.table_length, s.table_width),
             "scene.object_margin leaves no room on the table")

    r = config.robot
    _require(r.link1 > 0 and r.link2 > 0, "robot link lengths must be positive")
    _require(0 < r.q1_max_deg <= 180 and 0 < r.q2_max_deg <= 180, "joint limits must lie in (0, 180] degrees")
    _require(r.grasp_tolerance > 0, "robot.grasp_tolerance must be positive")

    _require(config.irm.stride >= 1, "irm.stride must be >= 1")
    _require(config.irm.dataset_size >= 1, "irm.dataset_size must be >= 1")
    _require(0.0 <= config.irm.validation_fraction < 1.0, "irm.validation_fraction must lie in [0, 1)")

    nav = config.navigation
    _require(nav.inflation_radius is None or nav.inflation_radius >= 0, "navigation.inflation_radius must be >= 0")
    _require(nav.snap_radius_cells >= 0, "navigation.snap_radius_cells must be >= 0")

    t = config.transporter
    _require(t.n_rotations in (4, 8), "transporter.n_rotations must be 4 or 8")
    _require(t.n_rotations % s.num_orientations == 0,
             "transporter.n_rotations must be a multiple of scene.num_orientations")
    _require(len(t.key_widths) >= 1 and len(t.query_widths) >= 1, "encoder widths must not be empty")
    _require(s.grid_size % (2 ** (len(t.key_widths) - 1)) == 0,
             "scene.grid_size must be divisible by 2**(levels-1)")
    _require(t.kernel_size % 2 == 1, "transporter.kernel_size must be odd")
    _require(0.0 < t.tau < 1.0, "transporter.tau must lie in (0, 1)")
    _require(t.max_candidates >= 1, "transporter.max_candidates must be >= 1")
    _require(t.batch_size >= 1 and t.epochs >= 0 and t.learning_rate > 0, "invalid transporter training budget")

    _require(config.reward.epsilon > 0, "reward.epsilon must be positive")

    o = config.obp
    _require(o.baseline in ("greedy", "none"), "obp.baseline must be 'greedy' or 'none'")
    _require(o.irm_source in ("oracle", "learned"), "obp.irm_source must be 'oracle' or 'learned'")
    _require(o.attention_layers >= 1, "obp.attention_layers must be >= 1")
    _require(len(o.depth_channels) == 4, "obp.depth_channels must list 4 widths")
    _require(o.rolling_window >= 1 and o.scene_pool >= 1 and o.max_candidates >= 1, "invalid obp budgets")
    _require(s.grid_size >= 16, "the depth encoder needs scene.grid_size >= 16")

    e = config.eval
    unknown_methods = set(e.methods) - {"fbp", "pbs", "nbs", "learned"}
    _require(not unknown_methods, f"Unknown evaluation methods: {sorted(unknown_methods)}")
    _require(e.n_scenes >= 1, "eval.n_scenes must be >= 1")


def replace_section(config: RunConfig, **sections) -> RunConfig:
    """Copy of ``config`` with whole sections swapped (used by ablations)."""
    return replace(config, **sections)


config = RunConfig()
