import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socnav.world import (
    Human,
    LidarConfig,
    Observation,
    RobotState,
    VelocityCommand,
    WorldSnapshot,
    build_observation,
    cast_lidar,
    ray_ranges,
    rollout_states,
    step_unicycle,
    wrap_angle,
)


def empty_world(robot=None, goal=(1.0, 0.0)):
    return WorldSnapshot(
        walls=np.zeros((0, 4)),
        humans=[],
        robot=robot or RobotState(0, 0, 0),
        goal=np.array(goal),
    )


class TestWrapAngle:
    def test_half_open_interval(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
        assert wrap_angle(0.0) == 0.0

    @given(st.floats(-100, 100))
    def test_range(self, theta):
        w = wrap_angle(theta)
        assert -math.pi < w <= math.pi


class TestStepUnicycle:
    def test_straight_motion(self):
        s = step_unicycle(RobotState(0, 0, 0), VelocityCommand(1.0, 0.0), 0.3)
        assert s.px == pytest.approx(0.3)
        assert s.py == pytest.approx(0.0)
        assert s.theta == pytest.approx(0.0)

    def test_pure_rotation(self):
        s = step_unicycle(RobotState(0, 0, 0), VelocityCommand(0.0, math.pi), 0.5)
        assert (s.px, s.py) == (0.0, 0.0)
        assert s.theta == pytest.approx(math.pi / 2)

    def test_quarter_arc(self):
        # v=1, omega=pi/2 for 1 s: quarter circle of radius 2/pi.
        s = step_unicycle(RobotState(0, 0, 0), VelocityCommand(1.0, math.pi / 2), 1.0)
        assert s.px == pytest.approx(2 / math.pi)
        assert s.py == pytest.approx(2 / math.pi)
        assert s.theta == pytest.approx(math.pi / 2)

    def test_arc_matches_euler_substepping(self):
        # Independent oracle: fine-grained Euler integration.
        cmd = VelocityCommand(0.7, 1.1)
        exact = step_unicycle(RobotState(0.2, -0.3, 0.4), cmd, 0.3)
        px, py, th = 0.2, -0.3, 0.4
        n = 10_000
        h = 0.3 / n
        for _ in range(n):
            px += cmd.v * math.cos(th) * h
            py += cmd.v * math.sin(th) * h
            th += cmd.omega * h
        assert abs(exact.px - px) < 1e-4
        assert abs(exact.py - py) < 1e-4

    def test_substep_composition_equals_single_step(self):
        cmd = VelocityCommand(0.5, -0.8)
        single = step_unicycle(RobotState(0, 0, 1.0), cmd, 0.3)
        s = RobotState(0, 0, 1.0)
        for _ in range(3):
            s = step_unicycle(s, cmd, 0.1)
        assert s.px == pytest.approx(single.px)
        assert s.py == pytest.approx(single.py)

    def test_negative_v_rejected(self):
        with pytest.raises(ValueError):
            VelocityCommand(-0.1, 0.0)

    def test_rollout_states_match_stepping(self):
        cmds = np.array([[0.4, 0.9], [0.8, 0.0], [0.1, -1.2]])
        states = rollout_states(RobotState(1.0, 2.0, 0.7), cmds, 5, 0.3)
        for i, (v, w) in enumerate(cmds):
            s = RobotState(1.0, 2.0, 0.7)
            for ell in range(1, 6):
                s = step_unicycle(s, VelocityCommand(v, w), 0.3)
                assert states[i, ell, 0] == pytest.approx(s.px)
                assert states[i, ell, 1] == pytest.approx(s.py)
                assert wrap_angle(states[i, ell, 2]) == pytest.approx(s.theta)


class TestCastLidar:
    def test_empty_world_max_range(self):
        cfg = LidarConfig()
        ranges = cast_lidar(empty_world(), RobotState(0, 0, 0), cfg)
        assert ranges.shape == (72,)
        assert np.all(ranges == cfg.max_range)

    def test_perpendicular_wall(self):
        world = empty_world()
        world.walls = np.array([[2.0, -5.0, 2.0, 5.0]])
        ranges = cast_lidar(world, RobotState(0, 0, 0), LidarConfig())
        assert ranges[0] == pytest.approx(2.0)

    def test_disc_ahead(self):
        world = empty_world()
        world.humans = [Human(np.array([2.0, 0.0]), np.zeros(2), 0.6)]
        ranges = cast_lidar(world, RobotState(0, 0, 0), LidarConfig())
        assert ranges[0] == pytest.approx(1.4)

    def test_disc_analytic_oracle(self):
        # Ray-circle quadratic solved independently, off-axis geometry.
        cx, cy, r = 3.0, 0.5, 0.7
        world = empty_world()
        world.humans = [Human(np.array([cx, cy]), np.zeros(2), r)]
        cfg = LidarConfig()
        pose = RobotState(0, 0, 0)
        ranges = cast_lidar(world, pose, cfg)
        for i in range(cfg.beam_count):
            ang = i * cfg.beam_spacing
            dx, dy = math.cos(ang), math.sin(ang)
            b = cx * dx + cy * dy
            disc = b * b - (cx * cx + cy * cy - r * r)
            if disc >= 0 and b - math.sqrt(disc) >= 0:
                expected = min(b - math.sqrt(disc), cfg.max_range)
            else:
                expected = cfg.max_range
            assert abs(ranges[i] - expected) < 1e-9, f"beam {i}"

    def test_beam_angles_counterclockwise(self):
        # Wall only in +y direction; with heading +x it is hit by beam G/4.
        world = empty_world()
        world.walls = np.array([[-5.0, 1.0, 5.0, 1.0]])
        ranges = cast_lidar(world, RobotState(0, 0, 0), LidarConfig())
        assert ranges[18] == pytest.approx(1.0)

    def test_ray_starting_inside_disc(self):
        out = ray_ranges(
            np.array([[0.0, 0.0]]),
            np.array([0.0]),
            np.zeros((0, 4)),
            np.array([[0.1, 0.0, 0.5]]),
            10.0,
        )
        assert out[0] == 0.0


class TestBuildObservation:
    def test_all_max_goal_ahead(self):
        cfg = LidarConfig()
        obs = build_observation(
            np.full(72, cfg.max_range), RobotState(0, 0, 0), np.array([3.0, 0.0]), cfg
        )
        assert np.all(obs.grouped_ranges == cfg.max_range)
        assert np.all(obs.nearest_dists == cfg.max_range)
        assert obs.goal_angle == pytest.approx(0.0)
        assert obs.vector().shape == (29,)

    def test_nearest_sorted_with_angles(self):
        cfg = LidarConfig()
        ranges = np.full(72, 10.0)
        ranges[7] = 1.0
        ranges[40] = 2.0
        obs = build_observation(ranges, RobotState(0, 0, 0), np.array([1.0, 0.0]), cfg)
        assert obs.nearest_dists[0] == 1.0
        assert obs.nearest_dists[1] == 2.0
        assert obs.nearest_angles[0] == pytest.approx(wrap_angle(7 * cfg.beam_spacing))
        assert obs.nearest_angles[1] == pytest.approx(wrap_angle(40 * cfg.beam_spacing))
        # grouped min: beam 7 is in group 2
        assert obs.grouped_ranges[2] == 1.0

    def test_tie_breaks_to_lower_beam(self):
        cfg = LidarConfig()
        ranges = np.full(72, 10.0)
        ranges[30] = 1.0
        ranges[10] = 1.0
        obs = build_observation(ranges, RobotState(0, 0, 0), np.array([1.0, 0.0]), cfg)
        assert obs.nearest_angles[0] == pytest.approx(wrap_angle(10 * cfg.beam_spacing))

    def test_goal_behind(self):
        obs = build_observation(
            np.full(72, 10.0), RobotState(0, 0, 0), np.array([-2.0, 0.0]), LidarConfig()
        )
        assert obs.goal_angle == pytest.approx(math.pi)

    def test_grouped_le_raw(self):
        rng = np.random.default_rng(3)
        cfg = LidarConfig()
        ranges = rng.uniform(0.5, 10.0, 72)
        obs = build_observation(ranges, RobotState(0, 0, 0), np.array([1.0, 1.0]), cfg)
        for k in range(cfg.group_count):
            group = ranges[k * 3 : (k + 1) * 3]
            assert obs.grouped_ranges[k] <= group.min() + 1e-15

    def test_wrong_beam_count_rejected(self):
        with pytest.raises(ValueError):
            build_observation(np.full(10, 1.0), RobotState(0, 0, 0), np.zeros(2), LidarConfig())


class TestRotationalEquivariance:
    @settings(max_examples=20, deadline=None)
    @given(st.floats(-math.pi, math.pi))
    def test_observation_invariant_under_world_rotation(self, angle):
        cfg = LidarConfig()
        walls = np.array([[1.0, -1.0, 1.5, 2.0], [-2.0, 0.5, 0.5, 2.5]])
        human = np.array([0.5, -1.2])
        goal = np.array([2.0, 1.0])
        pose = RobotState(0.3, -0.2, 0.4)

        def rot(p, c, s):
            return np.array([c * p[0] - s * p[1], s * p[0] + c * p[1]])

        c, s = math.cos(angle), math.sin(angle)
        world1 = WorldSnapshot(walls, [Human(human, np.zeros(2), 0.4)], pose, goal)
        obs1 = build_observation(cast_lidar(world1, pose, cfg), pose, goal, cfg)

        walls2 = np.array(
            [np.concatenate([rot(wl[:2], c, s), rot(wl[2:], c, s)]) for wl in walls]
        )
        pose2 = RobotState(*rot([pose.px, pose.py], c, s), pose.theta + angle)
        goal2 = rot(goal, c, s)
        world2 = WorldSnapshot(walls2, [Human(rot(human, c, s), np.zeros(2), 0.4)], pose2, goal2)
        obs2 = build_observation(cast_lidar(world2, pose2, cfg), pose2, goal2, cfg)

        np.testing.assert_allclose(obs1.vector(), obs2.vector(), atol=1e-9)
