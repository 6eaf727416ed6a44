import numpy as np
import pytest

from socnav.social_force import HumanAgent, SfmParams, compute_social_force, step_humans


def make_agent(pos, goal, v_pref=0.5, vel=(0.0, 0.0)):
    return HumanAgent(
        position=np.array(pos, dtype=float),
        velocity=np.array(vel, dtype=float),
        goal=np.array(goal, dtype=float),
        v_pref=v_pref,
    )


NO_WALLS = np.zeros((0, 4))


class TestComputeSocialForce:
    def test_lone_agent_goal_attraction(self):
        agent = make_agent((0, 0), (5, 0), v_pref=0.5)
        force = compute_social_force(agent, [], NO_WALLS, None, SfmParams())
        np.testing.assert_allclose(force, [1.0, 0.0])

    def test_agent_at_goal_no_force(self):
        agent = make_agent((0, 0), (0.1, 0))
        force = compute_social_force(agent, [], NO_WALLS, None, SfmParams())
        np.testing.assert_allclose(force, [0.0, 0.0])

    def test_symmetric_neighbors_cancel_laterally(self):
        agent = make_agent((0, 0), (5, 0))
        above = make_agent((1, 1), (0, 0))
        below = make_agent((1, -1), (0, 0))
        force = compute_social_force(agent, [above, below], NO_WALLS, None, SfmParams())
        assert force[1] == pytest.approx(0.0, abs=1e-12)

    def test_repulsion_magnitude(self):
        # Known closed form: A * exp((r_sum - d) / B) away from the neighbor.
        params = SfmParams()
        agent = make_agent((0, 0), (0.05, 0))  # within goal hold: no attraction
        other = make_agent((2, 0), (0, 0))
        force = compute_social_force(agent, [other], NO_WALLS, None, params)
        expected = params.agent_repulsion_strength * np.exp(
            (1.2 - 2.0) / params.agent_repulsion_range
        )
        assert force[0] == pytest.approx(-expected)
        assert force[1] == 0.0

    def test_robot_repels_like_an_agent(self):
        params = SfmParams()
        agent = make_agent((0, 0), (0.05, 0))
        force = compute_social_force(agent, [], NO_WALLS, (np.array([1.5, 0.0]), 0.3), params)
        expected = params.agent_repulsion_strength * np.exp(
            (0.9 - 1.5) / params.agent_repulsion_range
        )
        assert force[0] == pytest.approx(-expected)

    def test_wall_repulsion_direction(self):
        params = SfmParams()
        agent = make_agent((1.0, 0.3), (1.0, 0.35))
        walls = np.array([[0.0, 0.0, 4.0, 0.0]])
        force = compute_social_force(agent, [], walls, None, params)
        assert force[1] > 0  # pushed away from the wall

    def test_coincident_centers_tie_rule(self):
        params = SfmParams()
        a = make_agent((1, 1), (1, 1.05))
        b = make_agent((1, 1), (1, 1.05))
        fa = compute_social_force(a, [b], NO_WALLS, None, params, agent_index=0, other_indices=[1])
        fb = compute_social_force(b, [a], NO_WALLS, None, params, agent_index=1, other_indices=[0])
        assert fa[0] > 0 and fb[0] < 0
        np.testing.assert_allclose(fa, -fb)


class TestStepHumans:
    def test_explicit_euler_single_agent(self):
        # Unit force for dt 0.1 from rest: v = 0.1, x shift = 0.01.
        agent = make_agent((0, 0), (5, 0), v_pref=0.5)
        stepped = step_humans([agent], NO_WALLS, None, 0.1, SfmParams())[0]
        np.testing.assert_allclose(stepped.velocity, [0.1, 0.0])
        np.testing.assert_allclose(stepped.position, [0.01, 0.0])

    def test_head_on_pair_separates(self):
        params = SfmParams()
        a = make_agent((0, 0), (3, 0), vel=(0.5, 0))
        b = make_agent((1.3, 0), (-3, 0), vel=(-0.5, 0))
        agents = [a, b]
        # Once within repulsion range, the mutual force pushes them apart in x.
        fa = compute_social_force(agents[0], [agents[1]], NO_WALLS, None, params, 0, [1])
        fb = compute_social_force(agents[1], [agents[0]], NO_WALLS, None, params, 1, [0])
        assert fa[0] < fb[0]  # repulsive components point away from each other

    def test_speed_clamp(self):
        params = SfmParams()
        agent = make_agent((0, 0), (10, 0), v_pref=0.5, vel=(0.6, 0))
        for _ in range(50):
            agent = step_humans([agent], NO_WALLS, None, 0.1, params)[0]
            assert np.linalg.norm(agent.velocity) <= 1.3 * 0.5 + 1e-12

    def test_goal_hold(self):
        agent = make_agent((0, 0), (0.1, 0), vel=(0.5, 0))
        stepped = step_humans([agent], NO_WALLS, None, 0.1, SfmParams())[0]
        np.testing.assert_allclose(stepped.velocity, [0.0, 0.0])
        np.testing.assert_allclose(stepped.position, [0.0, 0.0])

    def test_permutation_invariance(self):
        params = SfmParams()
        agents = [
            make_agent((0, 0), (3, 0), 0.5),
            make_agent((1, 0.2), (-3, 0), 0.6),
            make_agent((0.5, -0.4), (0.5, 3), 0.7),
        ]
        stepped = step_humans(agents, NO_WALLS, None, 0.1, params)
        # Same world presented in a different order: per-agent results identical.
        perm = [2, 0, 1]
        stepped_perm = step_humans([agents[i] for i in perm], NO_WALLS, None, 0.1, params)
        for out_idx, in_idx in enumerate(perm):
            np.testing.assert_array_equal(stepped[in_idx].position, stepped_perm[out_idx].position)
            np.testing.assert_array_equal(stepped[in_idx].velocity, stepped_perm[out_idx].velocity)

    def test_through_gap_without_wall_contact(self):
        # Wall along y=2 with a door-width gap at x in [1.2, 2.8].
        params = SfmParams()
        walls = np.array([[0.0, 2.0, 1.2, 2.0], [2.8, 2.0, 4.0, 2.0]])
        agent = make_agent((2.0, 0.5), (2.0, 3.5), v_pref=0.6)
        for _ in range(200):
            agent = step_humans([agent], walls, None, 0.1, params)[0]
            for seg in walls:
                a, b = seg[:2], seg[2:]
                ab = b - a
                t = np.clip((agent.position - a) @ ab / (ab @ ab), 0, 1)
                assert np.linalg.norm(agent.position - (a + t * ab)) > 0.0
        assert np.linalg.norm(agent.position - agent.goal) <= 0.2 + 1e-9

    def test_robot_influence_local_only(self):
        # A robot farther than 3x the repulsion range leaves paths unchanged
        # at double precision resolution beyond the exponential tail.
        params = SfmParams()
        agent = make_agent((0, 0), (3, 0), v_pref=0.5)
        far_robot = (np.array([0.0, -3.0]), 0.3)
        with_robot = step_humans([agent], NO_WALLS, far_robot, 0.1, params)[0]
        without = step_humans([agent], NO_WALLS, None, 0.1, params)[0]
        np.testing.assert_allclose(with_robot.position, without.position, atol=1e-3)
        # And the robot's goal never enters the model at all: the force only
        # depends on the robot's position, not where it is headed.
