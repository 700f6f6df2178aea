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
import math
from dataclasses import replace
from typing import Optional, Tuple

import numpy as np

from src.core.collision import polygons_overlap
from src.core.config import SceneConfig
from src.core.errors import SamplingError
from src.core.grid import GridSpec, grid_to_world, world_to_grid  # noqa: F401  (public API)
from src.core.kinematics import collision_free
from src.models.robot import RobotModel
from src.models.scene import (
    FREE, OBJECT, OBSTACLE, ROBOT, SEMANTIC_CLASSES, TABLE,
    GraspObject, ImagePatch, Obstacle, OrientedRect, OrthoProjection, Pose2, SceneSpec,
)


logger = logging.getLogger(__name__)

PLACEMENT_TRIES = 50


def _uniform_in_disc(rng: np.random.Generator, center: np.ndarray, radius: float) -> np.ndarray:
    r = radius * math.sqrt(rng.random())
    phi = rng.uniform(0.0, 2.0 * math.pi)
    return center + r * np.array([math.cos(phi), math.sin(phi)])


def _inside_world(rect: OrientedRect, half_extent: float) -> bool:
    return bool((np.abs(rect.corners()) <= half_extent).all())


def _sample_table(rng, cfg: SceneConfig) -> Optional[OrientedRect]:
    center = _uniform_in_disc(rng, np.zeros(2), cfg.table_center_jitter)
    table = OrientedRect(Pose2(center[0], center[1], rng.uniform(0.0, 2.0 * math.pi)), cfg.table_length, cfg.table_width)
    return table if _inside_world(table, cfg.world_half_extent) else None


def _sample_object(rng, cfg: SceneConfig, table: OrientedRect) -> GraspObject:
    half_l = table.length / 2.0 - cfg.object_margin
    half_w = table.width / 2.0 - cfg.object_margin
    local = np.array([rng.uniform(-half_l, half_l), rng.uniform(-half_w, half_w)])
    c, s = math.cos(table.center.theta), math.sin(table.center.theta)
    world = table.center.position + np.array([c * local[0] - s * local[1], s * local[0] + c * local[1]])
    return GraspObject(float(world[0]), float(world[1]), rng.uniform(0.0, 2.0 * math.pi), cfg.object_size)


def _sample_obstacles(rng, cfg: SceneConfig, table: OrientedRect) -> Optional[Tuple[Obstacle, ...]]:
    count = int(rng.integers(cfg.obstacle_count_min, cfg.obstacle_count_max + 1))
    obstacles = []
    for _ in range(count):
        for _ in range(PLACEMENT_TRIES):
            center = _uniform_in_disc(rng, table.center.position, cfg.obstacle_spawn_radius)
            rect = OrientedRect(
                Pose2(center[0], center[1], rng.uniform(0.0, 2.0 * math.pi)),
                rng.uniform(cfg.obstacle_side_min, cfg.obstacle_side_max),
                rng.uniform(cfg.obstacle_side_min, cfg.obstacle_side_max),
            )
            full_height = bool(rng.random() < cfg.obstacle_full_height_prob)
            if _inside_world(rect, cfg.world_half_extent) and not polygons_overlap(rect.corners(), table.corners()):
                height = cfg.obstacle_height_full if full_height else cfg.obstacle_height_low
                obstacles.append(Obstacle(rect, height, full_height))
                break
        else:
            return None
    return tuple(obstacles)


def sample_scene(seed: int, cfg: SceneConfig, robot: RobotModel) -> SceneSpec:
    """Draw a random table-top scene.

    The table is jittered around the world centre, the object lies on the table
    surface, obstacles never overlap the table and the robot starts within
    ``robot_start_radius`` of the table centre without touching anything.

    Args:
        seed: Scene seed; identical seeds give identical scenes
        cfg: Scene distribution parameters
        robot: Robot model used for the start-pose collision check

    Returns:
        SceneSpec

    Raises:
        SamplingError: If no valid scene is found within ``cfg.max_retries`` attempts
    """
    rng = np.random.default_rng(seed)
    for attempt in range(cfg.max_retries):
        table = _sample_table(rng, cfg)
        if table is None:
            continue
        grasp_object = _sample_object(rng, cfg, table)
        obstacles = _sample_obstacles(rng, cfg, table)
        if obstacles is None:
            continue
        scene = SceneSpec(
            world_half_extent=cfg.world_half_extent,
            resolution=cfg.resolution,
            table=table,
            table_height=cfg.table_height,
            obstacles=obstacles,
            object=grasp_object,
            robot_start=Pose2(0.0, 0.0, 0.0),
            seed=int(seed),
        )
        for _ in range(PLACEMENT_TRIES):
            position = _uniform_in_disc(rng, table.center.position, cfg.robot_start_radius)
            start = Pose2(position[0], position[1], rng.uniform(0.0, 2.0 * math.pi))
            if collision_free(scene, robot, start):
                if attempt:
                    logger.debug(f"Scene {seed} accepted after {attempt + 1} attempts")
                return replace(scene, robot_start=start)
    raise SamplingError(f"No valid scene for seed {seed} after {cfg.max_retries} attempts")


def rasterize(scene: SceneSpec, size: int, robot: Optional[RobotModel] = None) -> OrthoProjection:
    """Render the scene into a top-down semantic raster and depth heightmap.

    Pixel centres are tested against each footprint; where footprints overlap the
    class priority is object > robot > obstacle > table > free, and depth keeps the
    tallest surface. The robot is drawn only when a model is given; its arm column
    at the mount rises above the base so the raster shows the robot's heading.
    """
    grid = GridSpec.centered(size, scene.resolution)
    centers = grid.pixel_centers()
    classes = np.full((size, size), FREE, dtype=np.int64)
    depth = np.zeros((size, size), dtype=np.float32)

    def paint(mask: np.ndarray, label: int, height: float) -> None:
        classes[mask] = label
        np.maximum(depth, np.where(mask, height, 0.0).astype(np.float32), out=depth)

    if scene.table is not None:
        paint(scene.table.contains(centers), TABLE, scene.table_height)
    for obstacle in scene.obstacles:
        paint(obstacle.rect.contains(centers), OBSTACLE, obstacle.height)
    if robot is not None:
        paint(robot.footprint(scene.robot_start).contains(centers), ROBOT, robot.base_height)
        column = np.hypot(*(centers - robot.mount_position(scene.robot_start)).transpose(2, 0, 1)) <= robot.arm_column_radius
        paint(column, ROBOT, robot.arm_column_height)
    if scene.object is not None:
        cube = OrientedRect(Pose2(scene.object.x, scene.object.y, scene.object.yaw), scene.object.size, scene.object.size)
        paint(cube.contains(centers), OBJECT, scene.table_height + scene.object.size)

    semantic = np.zeros((len(SEMANTIC_CLASSES), size, size), dtype=np.float32)
    np.put_along_axis(semantic, classes[None], 1.0, axis=0)
    return OrthoProjection(semantic=semantic, depth=depth, resolution=scene.resolution, origin=grid.origin)


def robot_query_crop(proj: OrthoProjection, robot_center: Tuple[int, int], crop_size: int) -> ImagePatch:
    """Crop the network input (semantic + depth) around the robot cell, zero-padding outside the image."""
    if crop_size % 2 != 1:
        raise ValueError(f"Crop size must be odd, got {crop_size}")
    radius = crop_size // 2
    u, v = robot_center
    padded = np.pad(proj.stacked(), ((0, 0), (radius, radius), (radius, radius)))
    data = padded[:, v:v + crop_size, u:u + crop_size].copy()
    return ImagePatch(data=data, center_cell=(int(u), int(v)))


def _quarter_turn_pose(pose: Pose2, quarter_turns: int) -> Pose2:
    x, y = pose.x, pose.y
    for _ in range(quarter_turns % 4):
        x, y = -y, x
    return Pose2(x, y, pose.theta + quarter_turns * math.pi / 2.0)


def rotate_scene(scene: SceneSpec, quarter_turns: int = 1) -> SceneSpec:
    """Rotate every element of the scene about the world centre by multiples of 90°."""
    def turn_rect(rect: OrientedRect) -> OrientedRect:
        return OrientedRect(_quarter_turn_pose(rect.center, quarter_turns), rect.length, rect.width)

    grasp_object = scene.object
    if grasp_object is not None:
        moved = _quarter_turn_pose(Pose2(grasp_object.x, grasp_object.y, grasp_object.yaw), quarter_turns)
        grasp_object = GraspObject(moved.x, moved.y, moved.theta, grasp_object.size)
    return replace(
        scene,
        table=None if scene.table is None else turn_rect(scene.table),
        obstacles=tuple(replace(obstacle, rect=turn_rect(obstacle.rect)) for obstacle in scene.obstacles),
        object=grasp_object,
        robot_start=_quarter_turn_pose(scene.robot_start, quarter_turns),
    )
