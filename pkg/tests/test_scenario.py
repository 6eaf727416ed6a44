import math

import numpy as np
import pytest

from socnav.scenario import (
    CABIN_FRONT_Y,
    DOOR_LEFT_X,
    DOOR_RIGHT_X,
    MAP_SIZE,
    EpisodeConfig,
    ScenarioInstance,
    build_scenario,
    build_synthetic_corridor,
    elevator_walls,
    evaluate,
    min_human_clearance,
    run_episode,
    trial_seed,
)
from socnav.world import RobotState, VelocityCommand


class ConstantPolicy:
    def __init__(self, v, omega):
        self.cmd = VelocityCommand(v, omega)

    def reset(self):
        pass

    def act(self, obs, world):
        return self.cmd


class RaisingPolicy:
    def reset(self):
        pass

    def act(self, obs, world):
        raise RuntimeError("boom")


def open_scenario(robot, goal):
    """Square room, no humans: kinematics oracle playground."""
    walls = np.array(
        [
            [0.0, 0.0, MAP_SIZE, 0.0],
            [MAP_SIZE, 0.0, MAP_SIZE, MAP_SIZE],
            [MAP_SIZE, MAP_SIZE, 0.0, MAP_SIZE],
            [0.0, MAP_SIZE, 0.0, 0.0],
        ]
    )
    return ScenarioInstance("HR-RL", 0, walls, [], robot, np.asarray(goal, float))


class TestGeometry:
    def test_wall_count_and_door_gap(self):
        walls = elevator_walls()
        assert walls.shape == (8, 4)
        # no front-wall segment crosses the door gap
        front = walls[(walls[:, 1] == CABIN_FRONT_Y) & (walls[:, 3] == CABIN_FRONT_Y)]
        for seg in front:
            xs = sorted([seg[0], seg[2]])
            assert xs[1] <= DOOR_LEFT_X + 1e-12 or xs[0] >= DOOR_RIGHT_X - 1e-12

    def test_constants(self):
        assert CABIN_FRONT_Y == pytest.approx(1.3)
        assert DOOR_RIGHT_X - DOOR_LEFT_X == pytest.approx(1.8)


class TestBuildScenario:
    def test_deterministic(self):
        a, b = build_scenario("HR-RL", 42), build_scenario("HR-RL", 42)
        np.testing.assert_array_equal(a.robot.position, b.robot.position)
        np.testing.assert_array_equal(a.goal, b.goal)
        for ha, hb in zip(a.agents, b.agents):
            np.testing.assert_array_equal(ha.position, hb.position)
            np.testing.assert_array_equal(ha.goal, hb.goal)

    def test_seeds_differ(self):
        a, b = build_scenario("HR-RL", 0), build_scenario("HR-RL", 1)
        assert not np.array_equal(a.robot.position, b.robot.position)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            build_scenario("HH-RR", 0)

    @pytest.mark.parametrize("variant", ["HR-RL", "HL-RR"])
    def test_spawn_clearances(self, variant):
        for seed in range(200):
            sc = build_scenario(variant, seed)
            assert min_human_clearance(sc.robot.position, sc.agents, 0.3) > 0.0
            # humans clear of each other at spawn
            for i, a in enumerate(sc.agents):
                for b in sc.agents[i + 1 :]:
                    assert np.linalg.norm(a.position - b.position) > a.radius + b.radius

    def test_mirroring(self):
        hr, hl = build_scenario("HR-RL", 5), build_scenario("HL-RR", 5)
        assert hl.goal[0] == pytest.approx(MAP_SIZE - hr.goal[0])
        assert hl.goal[1] == hr.goal[1]
        # boarding goals mirror too
        assert hl.agents[0].goal[0] == pytest.approx(MAP_SIZE - hr.agents[0].goal[0])

    def test_goal_inside_cabin(self):
        for seed in range(50):
            sc = build_scenario("HR-RL", seed)
            assert sc.goal[1] > CABIN_FRONT_Y

    def test_corridor_layout(self):
        sc = build_synthetic_corridor()
        assert len(sc.agents) == 1
        np.testing.assert_array_equal(sc.agents[0].position, [2.0, 2.0])
        assert sc.robot.theta == pytest.approx(math.pi / 2)


class TestRunEpisode:
    def test_straight_to_goal_kinematics(self):
        # 3.0 m to the goal, 0.3 m goal radius, 0.8 m/s: the first step
        # ending within the radius is step 34, so TT = 3.4 s, PL = 2.72 m.
        sc = open_scenario(RobotState(2.0, 0.5, math.pi / 2), (2.0, 3.5))
        record, result = run_episode(ConstantPolicy(0.8, 0.0), sc)
        assert result.termination == "goal"
        assert result.total_time == pytest.approx(3.4)
        assert result.path_length == pytest.approx(2.72)
        assert len(record.frames) == 34
        assert record.result["success"] is True

    def test_stop_policy_times_out(self):
        sc = open_scenario(RobotState(2.0, 0.5, math.pi / 2), (2.0, 3.5))
        record, result = run_episode(ConstantPolicy(0.0, 0.0), sc)
        assert result.termination == "timeout"
        assert not result.success
        assert result.total_time == pytest.approx(30.0)
        assert len(record.frames) == 300
        assert result.path_length == 0.0

    def test_wall_collision(self):
        sc = open_scenario(RobotState(3.0, 0.5, 0.0), (0.5, 0.5))
        _, result = run_episode(ConstantPolicy(0.8, 0.0), sc)
        assert result.termination == "collision"
        assert result.total_time < 2.0

    def test_policy_error_recorded(self):
        sc = open_scenario(RobotState(2.0, 0.5, 0.0), (3.0, 0.5))
        record, result = run_episode(RaisingPolicy(), sc)
        assert result.termination == "policy_error"
        assert record.frames == []

    def test_frames_carry_increasing_time_and_humans(self):
        sc = build_scenario("HR-RL", 3)
        record, _ = run_episode(ConstantPolicy(0.0, 0.0), sc, EpisodeConfig(timeout=1.0))
        ts = [f.t for f in record.frames]
        assert ts == sorted(ts) and len(set(ts)) == len(ts)
        assert all(len(f.humans) == 3 for f in record.frames)
        # pedestrians actually move
        first, last = record.frames[0], record.frames[-1]
        assert any(
            np.hypot(a[0] - b[0], a[1] - b[1]) > 0.01 for a, b in zip(first.humans, last.humans)
        )

    def test_human_collision_detected(self):
        sc = build_synthetic_corridor()
        _, result = run_episode(ConstantPolicy(0.8, 0.0), sc, EpisodeConfig(timeout=5.0))
        # driving straight at the stationary human must register a collision
        assert result.termination == "collision"
        # logged clearance is robot body to human center; overlap of the
        # 0.6 m person disc shows up as a value below its radius
        assert result.clearance_trace[-1] < 0.6

    def test_min_clearance_empty(self):
        assert min_human_clearance(np.zeros(2), [], 0.3) == float("inf")


class TestEvaluate:
    def test_trial_seed_injective(self):
        seeds = {trial_seed(s, t) for s in range(5) for t in range(100)}
        assert len(seeds) == 500

    def test_aggregation_with_stop_policy(self):
        report = evaluate(
            ConstantPolicy(0.0, 0.0), "HR-RL", n_seeds=1, n_trials=2,
            config=EpisodeConfig(timeout=0.5),
        )
        assert report.success_rate == 0.0
        assert math.isnan(report.mean_time)
        assert report.per_seed[0]["sr"] == 0.0
        assert report.n_trials == 2
