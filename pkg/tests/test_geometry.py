import math

import numpy as np
import pytest

from src.core.errors import OutOfBoundsError
from src.core.geometry import rasterize, robot_query_crop, rotate_scene, sample_scene
from src.core.grid import angle_to_bin, bin_to_angle, grid_to_world, rot90_grid, rotate_label_stack, world_to_grid
from src.core.persistence import scene_from_json, scene_to_json
from src.models.scene import FREE, OBJECT, ROBOT, TABLE, GridPose, OrientedRect, Pose2, normalize_angle


def test_normalize_angle_wraps_into_range():
    assert normalize_angle(-1e-18) == 0.0
    assert math.isclose(normalize_angle(-math.pi / 2), 3 * math.pi / 2)
    assert math.isclose(normalize_angle(5 * math.pi), math.pi)


def test_grid_pose_sort_key_is_k_v_u():
    poses = [GridPose(0, 1, 1), GridPose(5, 0, 1), GridPose(9, 9, 0)]
    assert sorted(poses, key=GridPose.sort_key) == [GridPose(9, 9, 0), GridPose(5, 0, 1), GridPose(0, 1, 1)]


def test_oriented_rect_contains_boundary_and_rotation():
    rect = OrientedRect(Pose2(1.0, 1.0, math.pi / 2), 2.0, 1.0)
    inside = rect.contains(np.array([[1.0, 2.0], [1.5, 1.0], [1.0, 2.01], [1.6, 1.0]]))
    assert inside.tolist() == [True, True, False, False]


def test_angle_to_bin_ties_go_to_lower_index():
    assert angle_to_bin(0.0, 8) == 0
    assert angle_to_bin(math.pi / 8, 8) == 0
    assert angle_to_bin(math.pi / 8 + 1e-6, 8) == 1
    assert angle_to_bin(2 * math.pi - 1e-9, 8) == 0
    assert math.isclose(bin_to_angle(2, 8), math.pi / 2)


def test_world_grid_round_trip(simple_projection):
    cell = GridPose(10, 40, 3)
    pose = grid_to_world(cell, simple_projection, 8)
    assert world_to_grid(pose, simple_projection, 8) == cell


def test_world_to_grid_accepts_far_edge_and_rejects_outside(simple_projection):
    assert world_to_grid(Pose2(2.4, 2.4, 0.0), simple_projection, 8) == GridPose(63, 63, 0)
    with pytest.raises(OutOfBoundsError):
        world_to_grid(Pose2(2.5, 0.0, 0.0), simple_projection, 8)


def test_sample_scene_is_deterministic(desk_config, robot):
    a = sample_scene(7, desk_config.scene, robot)
    b = sample_scene(7, desk_config.scene, robot)
    assert scene_to_json(a) == scene_to_json(b)
    assert scene_to_json(a) != scene_to_json(sample_scene(8, desk_config.scene, robot))


def test_sampled_scene_invariants(desk_config, robot):
    for seed in range(10):
        scene = sample_scene(seed, desk_config.scene, robot)
        assert scene.table.contains(scene.object.position[None])[0]
        assert np.all(np.abs(scene.table.corners()) <= scene.world_half_extent)
        for obstacle in scene.obstacles:
            assert not obstacle.rect.contains(scene.object.position[None])[0]


def test_scene_json_round_trip(desk_config, robot):
    scene = sample_scene(3, desk_config.scene, robot)
    assert scene_from_json(scene_to_json(scene)) == scene


def test_rasterize_classes(simple_scene, robot):
    proj = rasterize(simple_scene, 64, robot)
    assert proj.semantic.shape == (5, 64, 64)
    np.testing.assert_array_equal(proj.semantic.sum(axis=0), 1.0)
    classes = proj.semantic.argmax(axis=0)
    centre = world_to_grid(Pose2(0.3, 0.0), proj, 8)
    assert classes[centre.v, centre.u] == TABLE
    cube = world_to_grid(Pose2(-0.5, 0.0), proj, 8)
    assert classes[cube.v, cube.u] == OBJECT
    start = world_to_grid(simple_scene.robot_start, proj, 8)
    assert classes[start.v, start.u] == ROBOT
    assert classes[0, 0] == FREE
    assert proj.depth[centre.v, centre.u] == pytest.approx(0.75)


def test_rasterize_without_robot_leaves_start_free(simple_scene):
    proj = rasterize(simple_scene, 64)
    start = world_to_grid(simple_scene.robot_start, proj, 8)
    assert proj.semantic[FREE, start.v, start.u] == 1.0


def test_rotating_scene_rotates_raster(desk_config, robot):
    scene = sample_scene(11, desk_config.scene, robot)
    proj = rasterize(scene, 64, robot)
    rotated = rasterize(rotate_scene(scene, 1), 64, robot)
    np.testing.assert_array_equal(rotated.semantic, rot90_grid(proj.semantic, 1))


def test_rotate_label_stack_shifts_channels():
    stack = np.zeros((8, 4, 4))
    stack[1, 0, 3] = 1.0
    turned = rotate_label_stack(stack, 1)
    assert turned[3].sum() == 1.0
    with pytest.raises(ValueError):
        rotate_label_stack(np.zeros((6, 4, 4)), 1)


def test_query_crop_is_zero_padded(simple_projection):
    patch = robot_query_crop(simple_projection, (0, 0), 5)
    assert patch.data.shape == (6, 5, 5)
    assert np.all(patch.data[:, :2, :] == 0.0)
    with pytest.raises(ValueError):
        robot_query_crop(simple_projection, (0, 0), 4)
