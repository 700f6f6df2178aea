import math

import numpy as np
import pytest

from src.core.collision import polygons_overlap, rect_corners, segments_hit_polygon
from src.core.geometry import rasterize, rotate_scene
from src.core.grid import GridSpec, grid_to_world, rotate_label_stack
from src.core.kinematics import collision_free, collision_free_batch, compute_irm, ik_feasible, ik_feasible_batch, pose_is_valid
from src.models.scene import GridPose, Obstacle, OrientedRect, Pose2
from tests.conftest import make_scene


def _sampled_overlap(a: OrientedRect, b: OrientedRect, n: int = 60) -> bool:
    """Dense point sampling of ``a``'s area tested against ``b``."""
    s = np.linspace(-0.5, 0.5, n)
    along, across = np.meshgrid(s * a.length, s * a.width)
    c, sn = math.cos(a.center.theta), math.sin(a.center.theta)
    points = np.stack([a.center.x + along * c - across * sn, a.center.y + along * sn + across * c], axis=-1)
    return bool(b.contains(points).any())


def test_sat_agrees_with_point_sampling(rng):
    agree = 0
    trials = 300
    for _ in range(trials):
        a = OrientedRect(Pose2(*rng.uniform(-1, 1, 2), rng.uniform(0, 2 * math.pi)), *rng.uniform(0.2, 1.0, 2))
        b = OrientedRect(Pose2(*rng.uniform(-1, 1, 2), rng.uniform(0, 2 * math.pi)), *rng.uniform(0.2, 1.0, 2))
        sat = bool(polygons_overlap(a.corners(), b.corners()))
        sampled = _sampled_overlap(a, b) or _sampled_overlap(b, a)
        if sampled:
            assert sat
        agree += sat == sampled
    assert agree / trials >= 0.98


def test_touching_rectangles_overlap():
    a = rect_corners(0.0, 0.0, 0.0, 1.0, 1.0)
    b = rect_corners(1.0, 0.0, 0.0, 1.0, 1.0)
    c = rect_corners(1.01, 0.0, 0.0, 1.0, 1.0)
    assert polygons_overlap(a, b)
    assert not polygons_overlap(a, c)


def test_segments_hit_polygon():
    square = rect_corners(0.0, 0.0, 0.0, 1.0, 1.0)
    p0 = np.array([[-2.0, 0.0], [-2.0, 2.0], [0.0, 0.0]])
    p1 = np.array([[2.0, 0.0], [2.0, 2.0], [0.1, 0.1]])
    assert segments_hit_polygon(p0, p1, square).tolist() == [True, False, True]


def test_base_must_stay_inside_world(robot):
    scene = make_scene()
    assert collision_free(scene, robot, Pose2(-1.6, 0.0, 0.0))
    assert not collision_free(scene, robot, Pose2(2.3, 0.0, 0.0))
    assert not collision_free(scene, robot, Pose2(0.0, 0.0, 0.0))


def _joint_grid_reachable(scene, robot, base: Pose2, step: float = 0.004) -> bool:
    q1 = np.arange(-robot.q1_max, robot.q1_max + step, step)
    q2 = np.arange(-robot.q2_max, robot.q2_max + step, step)
    q1, q2 = np.meshgrid(q1, q2, indexing='ij')
    mount = robot.mount_position(base)
    x = mount[0] + robot.link1 * np.cos(base.theta + q1) + robot.link2 * np.cos(base.theta + q1 + q2)
    y = mount[1] + robot.link1 * np.sin(base.theta + q1) + robot.link2 * np.sin(base.theta + q1 + q2)
    return bool((np.hypot(x - scene.object.x, y - scene.object.y) <= robot.grasp_tolerance).any())


def _near_boundary(scene, robot, base: Pose2, margin_m: float = 0.02, margin_rad: float = 0.05) -> bool:
    mount = robot.mount_position(base)
    delta = scene.object.position - mount
    distance = float(np.hypot(*delta))
    if min(abs(distance - robot.r_min), abs(distance - robot.r_max)) < margin_m:
        return True
    if not robot.r_min < distance < robot.r_max:
        return False
    cos_q2 = (distance ** 2 - robot.link1 ** 2 - robot.link2 ** 2) / (2 * robot.link1 * robot.link2)
    bearing = math.atan2(delta[1], delta[0])
    for sign in (1.0, -1.0):
        q2 = sign * math.acos(max(-1.0, min(1.0, cos_q2)))
        q1 = math.remainder(bearing - base.theta - math.atan2(robot.link2 * math.sin(q2),
                                                              robot.link1 + robot.link2 * math.cos(q2)), 2 * math.pi)
        if abs(abs(q1) - robot.q1_max) < margin_rad or abs(abs(q2) - robot.q2_max) < margin_rad:
            return True
    return False


def test_ik_matches_joint_grid_oracle(robot, rng):
    scene = make_scene()
    checked = 0
    while checked < 60:
        base = Pose2(*(scene.object.position + rng.uniform(-1.0, 1.0, 2)), rng.uniform(0, 2 * math.pi))
        if _near_boundary(scene, robot, base):
            continue
        assert ik_feasible(scene, robot, base) == _joint_grid_reachable(scene, robot, base), base
        checked += 1


def test_full_height_obstacle_blocks_arm_low_one_does_not(robot):
    base = Pose2(-1.1, 0.0, 0.0)
    band = OrientedRect(Pose2(-0.815, 0.0, 0.0), 0.01, 1.0)
    assert ik_feasible(make_scene(), robot, base)
    assert not ik_feasible(make_scene(obstacles=[Obstacle(band, 1.5, True)]), robot, base)
    assert ik_feasible(make_scene(obstacles=[Obstacle(band, 0.3, False)]), robot, base)


def test_batch_matches_scalar(robot, rng):
    scene = make_scene()
    x, y, theta = rng.uniform(-2, 2, 50), rng.uniform(-2, 2, 50), rng.uniform(0, 2 * math.pi, 50)
    free = collision_free_batch(scene, robot, x, y, theta)
    feasible = ik_feasible_batch(scene, robot, x, y, theta)
    for i in range(50):
        pose = Pose2(x[i], y[i], theta[i])
        assert free[i] == collision_free(scene, robot, pose)
        assert feasible[i] == ik_feasible(scene, robot, pose)


def test_compute_irm_labels_valid_cells(simple_scene, robot):
    proj = rasterize(simple_scene, 64, robot)
    irm = compute_irm(simple_scene, robot, 8, proj)
    assert irm.labels.shape == (8, 64, 64)
    assert not irm.is_empty
    cells = irm.positive_cells()
    assert (np.lexsort(cells.T[::-1]) == np.arange(len(cells))).all()
    for k, v, u in cells[:: max(1, len(cells) // 25)]:
        assert pose_is_valid(simple_scene, robot, grid_to_world(GridPose(int(u), int(v), int(k)), proj, 8))
    negatives = np.argwhere(irm.labels == 0)
    for k, v, u in negatives[:: len(negatives) // 25]:
        assert not pose_is_valid(simple_scene, robot, grid_to_world(GridPose(int(u), int(v), int(k)), proj, 8))


def test_irm_positives_lie_within_arm_reach(simple_scene, robot):
    irm = compute_irm(simple_scene, robot, 8, GridSpec.centered(64, 0.075))
    grid = GridSpec.centered(64, 0.075)
    xs, ys = grid.cell_centers()
    for k, v, u in irm.positive_cells():
        distance = math.hypot(xs[u] - simple_scene.object.x, ys[v] - simple_scene.object.y)
        assert distance <= robot.r_max + robot.arm_mount_offset + 1e-9


def test_irm_stride_keeps_shape(simple_scene, robot):
    irm = compute_irm(simple_scene, robot, 8, GridSpec.centered(64, 0.075), stride=2)
    assert irm.labels.shape == (8, 64, 64)


def test_scene_without_object_has_empty_irm(robot):
    from dataclasses import replace
    scene = replace(make_scene(), object=None)
    assert compute_irm(scene, robot, 8, GridSpec.centered(16, 0.3)).is_empty


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_adding_an_obstacle_never_adds_valid_poses(simple_scene, robot, seed):
    rng = np.random.default_rng(seed)
    grid = GridSpec.centered(64, 0.075)
    before = compute_irm(simple_scene, robot, 8, grid)
    rect = OrientedRect(Pose2(*rng.uniform(-1.5, 1.5, 2), rng.uniform(0, math.pi)), *rng.uniform(0.2, 0.5, 2))
    cluttered = make_scene(obstacles=[Obstacle(rect, float(rng.uniform(0.3, 1.2)), bool(rng.integers(2)))])
    after = compute_irm(cluttered, robot, 8, grid)
    assert np.all(after.labels <= before.labels)


def test_quarter_turn_of_scene_rotates_irm(robot):
    scene = make_scene(obstacles=[Obstacle(OrientedRect(Pose2(-1.0, 0.6, 0.3), 0.4, 0.3), 1.0)])
    grid = GridSpec.centered(64, 0.075)
    irm = compute_irm(scene, robot, 8, grid)
    turned = compute_irm(rotate_scene(scene, 1), robot, 8, grid)
    expected = rotate_label_stack(irm.labels, 1)
    assert turned.labels.sum() > 0
    # cells on a validity boundary may flip under rounding of the rotated headings
    assert np.count_nonzero(turned.labels != expected) <= 0.01 * expected.sum()
