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

import numpy as np

from src.core.collision import polygons_overlap, rect_corners, segments_hit_polygon
from src.core.grid import GridSpec, grid_of
from src.models.irm import IRMLabel
from src.models.robot import RobotModel
from src.models.scene import Pose2, SceneSpec


logger = logging.getLogger(__name__)


def collision_free_batch(scene: SceneSpec, robot: RobotModel, x, y, theta) -> np.ndarray:
    """Vectorised base collision check over arrays of poses.

    A pose is free iff its footprint stays inside the world square and touches
    neither the table nor any obstacle (low obstacles included).
    """
    corners = rect_corners(x, y, theta, robot.footprint_length, robot.footprint_width)
    inside = (np.abs(corners) <= scene.world_half_extent).all(axis=(-2, -1))
    free = inside.copy()
    for rect in scene.static_rects():
        static = rect.corners()
        free &= ~polygons_overlap(corners, static)
    return free


def _wrap_pi(angle: np.ndarray) -> np.ndarray:
    return (angle + np.pi) % (2.0 * np.pi) - np.pi


def ik_feasible_batch(scene: SceneSpec, robot: RobotModel, x, y, theta) -> np.ndarray:
    """Vectorised analytic 2-link IK check for the top-down grasp.

    Feasible iff the object is within the annulus [r_min, r_max] around the arm
    mount and one of the elbow-up/elbow-down solutions respects the joint limits
    with neither link crossing a full-height obstacle.
    """
    x, y, theta = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float), np.asarray(theta, float))
    if scene.object is None:
        return np.zeros(x.shape, dtype=bool)

    cos_t, sin_t = np.cos(theta), np.sin(theta)
    mount = np.stack([x + robot.arm_mount_offset * cos_t, y + robot.arm_mount_offset * sin_t], axis=-1)
    target = scene.object.position
    delta = target - mount
    distance = np.hypot(delta[..., 0], delta[..., 1])
    reachable = (distance >= robot.r_min) & (distance <= robot.r_max)

    l1, l2 = robot.link1, robot.link2
    cos_q2 = np.clip((distance ** 2 - l1 ** 2 - l2 ** 2) / (2.0 * l1 * l2), -1.0, 1.0)
    bearing = np.arctan2(delta[..., 1], delta[..., 0])
    blockers = [obstacle.rect.corners() for obstacle in scene.obstacles if obstacle.full_height]

    feasible = np.zeros(x.shape, dtype=bool)
    for elbow_sign in (1.0, -1.0):
        q2 = elbow_sign * np.arccos(cos_q2)
        q1 = _wrap_pi(bearing - theta - np.arctan2(l2 * np.sin(q2), l1 + l2 * np.cos(q2)))
        within_limits = (np.abs(q1) <= robot.q1_max) & (np.abs(q2) <= robot.q2_max)
        shoulder_heading = theta + q1
        elbow = mount + l1 * np.stack([np.cos(shoulder_heading), np.sin(shoulder_heading)], axis=-1)
        links_clear = np.ones(x.shape, dtype=bool)
        for polygon in blockers:
            links_clear &= ~segments_hit_polygon(mount, elbow, polygon)
            links_clear &= ~segments_hit_polygon(elbow, np.broadcast_to(target, elbow.shape), polygon)
        feasible |= reachable & within_limits & links_clear
    return feasible


def collision_free(scene: SceneSpec, robot: RobotModel, base: Pose2) -> bool:
    return bool(collision_free_batch(scene, robot, base.x, base.y, base.theta))


def ik_feasible(scene: SceneSpec, robot: RobotModel, base: Pose2) -> bool:
    return bool(ik_feasible_batch(scene, robot, base.x, base.y, base.theta))


def pose_is_valid(scene: SceneSpec, robot: RobotModel, base: Pose2) -> bool:
    """Membership in the valid set: collision-free and IK-feasible."""
    return collision_free(scene, robot, base) and ik_feasible(scene, robot, base)


def compute_irm(scene: SceneSpec, robot: RobotModel, num_orientations: int, proj,
                stride: int = 1) -> IRMLabel:
    """Exhaustively label every (u, v, k) cell of the projection's grid.

    With ``stride > 1`` only every ``stride``-th cell centre is evaluated and each
    result fills its ``stride x stride`` block, bringing coarse labels back to the
    pixel grid.

    Args:
        scene: Scene to label
        robot: Robot kinematic model
        num_orientations: Number of orientation bins K
        proj: Projection (or GridSpec) defining the pixel grid
        stride: Enumeration stride in pixels

    Returns:
        IRMLabel of shape (K, H, W)
    """
    grid: GridSpec = grid_of(proj)
    xs, ys = grid.cell_centers()
    sample_idx = np.arange(0, grid.size, stride)
    thetas = 2.0 * np.pi * np.arange(num_orientations) / num_orientations
    theta_g, y_g, x_g = np.meshgrid(thetas, ys[sample_idx], xs[sample_idx], indexing='ij')

    sampled = collision_free_batch(scene, robot, x_g, y_g, theta_g) & ik_feasible_batch(scene, robot, x_g, y_g, theta_g)

    if stride == 1:
        labels = sampled.astype(np.uint8)
    else:
        block = np.ones((stride, stride), dtype=np.uint8)
        labels = np.stack([np.kron(channel.astype(np.uint8), block) for channel in sampled])
        labels = labels[:, :grid.size, :grid.size]

    logger.debug(f"IRM for scene {scene.seed}: {int(labels.sum())} positive cells")
    return IRMLabel(labels=labels, resolution=grid.resolution, origin=grid.origin)
