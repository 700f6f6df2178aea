"""Shared fixtures: tiny configuration, hand-built scenes and float64 precision."""

import math

import numpy as np
import pytest

from src.core.config import RunConfig
from src.core.config_manager import config_manager
from src.core.dataset import label_scene
from src.core.geometry import rasterize
from src.core.navigation import NavCostmap
from src.models.irm import IRMLabel
from src.models.robot import RobotModel
from src.models.scene import GraspObject, Obstacle, OrientedRect, Pose2, SceneSpec
from src.nn.tensor import precision


@pytest.fixture
def tiny_config() -> RunConfig:
    return config_manager.get_preset('tiny')


@pytest.fixture
def desk_config() -> RunConfig:
    return RunConfig.from_dict({})


@pytest.fixture
def robot() -> RobotModel:
    return RobotModel()


def make_scene(obstacles=(), robot_start=Pose2(-1.6, 0.0, 0.0), object_xy=(-0.5, 0.0), seed=0) -> SceneSpec:
    """Table of 1.6 x 0.8 m at the origin with the cube near its -x edge."""
    return SceneSpec(
        world_half_extent=2.4,
        resolution=0.075,
        table=OrientedRect(Pose2(0.0, 0.0, 0.0), 1.6, 0.8),
        table_height=0.75,
        obstacles=tuple(obstacles),
        object=GraspObject(object_xy[0], object_xy[1], 0.0),
        robot_start=robot_start,
        seed=seed,
    )


@pytest.fixture
def simple_scene() -> SceneSpec:
    return make_scene()


@pytest.fixture
def simple_sample(simple_scene, desk_config):
    return label_scene(simple_scene, desk_config)


@pytest.fixture
def simple_projection(simple_scene, robot):
    return rasterize(simple_scene, 64, robot)


@pytest.fixture
def float64():
    with precision(np.float64):
        yield


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def angle_close(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(math.remainder(a - b, 2.0 * math.pi)) < tol


WALL_START_CELL = (10, 32)
NEAR_CELL = (24, 32)
FAR_CELL = (10, 4)


@pytest.fixture
def wall_fixture():
    """64x64 map with a wall at u=17 (rows 0..60) between the start and the nearer of two IRM cells.

    Returns (scene, costmap, irm): the near cell is 1.05 m away but needs a detour
    around the wall's end; the far cell is 2.1 m away in open space.
    """
    origin = (-2.4, -2.4)
    resolution = 0.075
    blocked = np.zeros((64, 64), dtype=bool)
    blocked[0:61, 17] = True
    costmap = NavCostmap(blocked, 0.0, resolution, origin)
    u, v = WALL_START_CELL
    start = Pose2(origin[0] + (u + 0.5) * resolution, origin[1] + (v + 0.5) * resolution, 0.0)
    labels = np.zeros((8, 64, 64), dtype=np.uint8)
    labels[0, NEAR_CELL[1], NEAR_CELL[0]] = 1
    labels[0, FAR_CELL[1], FAR_CELL[0]] = 1
    scene = make_scene(robot_start=start)
    return scene, costmap, IRMLabel(labels, resolution, origin)
