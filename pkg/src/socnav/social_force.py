"""Pedestrian motion: goal attraction plus exponential repulsion from other
agents, walls, and the robot (Helbing-Molnar style).

Humans are uncooperative in the sense that the robot enters their force field
only as a repulsor; the robot's own goal never influences them. Updates are
synchronous so results are independent of agent ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

DEFAULT_HUMAN_RADIUS = 0.6
PREFERRED_SPEEDS = (0.5, 0.6, 0.7)


@dataclass
class HumanAgent:
    """A pedestrian with a fixed goal and preferred walking speed."""

    position: np.ndarray
    velocity: np.ndarray
    goal: np.ndarray
    v_pref: float
    radius: float = DEFAULT_HUMAN_RADIUS

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        if self.radius <= 0.0:
            raise ValueError("agent radius must be positive")


@dataclass(frozen=True)
class SfmParams:
    """Force-model constants. The speed clamp is a hard cap at
    speed_clamp * v_pref applied after every velocity update."""

    relaxation_time: float = 0.5
    agent_repulsion_strength: float = 2.0
    agent_repulsion_range: float = 0.35
    wall_repulsion_strength: float = 3.0
    wall_repulsion_range: float = 0.2
    speed_clamp: float = 1.3
    goal_hold_radius: float = 0.2

    def __post_init__(self):
        for name in (
            "relaxation_time",
            "agent_repulsion_strength",
            "agent_repulsion_range",
            "wall_repulsion_strength",
            "wall_repulsion_range",
            "speed_clamp",
            "goal_hold_radius",
        ):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


def _point_segment_offset(point: np.ndarray, seg: np.ndarray) -> np.ndarray:
    """Vector from the closest point on segment (x0,y0,x1,y1) to the point."""
    a, b = seg[0:2], seg[2:4]
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0.0 else float(np.clip((point - a) @ ab / denom, 0.0, 1.0))
    return point - (a + t * ab)


def _repulsion(offset: np.ndarray, radii_sum: float, strength: float, rng: float,
               tie_direction: np.ndarray) -> np.ndarray:
    d = float(np.linalg.norm(offset))
    direction = offset / d if d > 0.0 else tie_direction
    return strength * np.exp((radii_sum - d) / rng) * direction


def compute_social_force(
    agent: HumanAgent,
    others: list[HumanAgent],
    walls: np.ndarray,
    robot: tuple[np.ndarray, float] | None,
    params: SfmParams,
    agent_index: int = 0,
    other_indices: list[int] | None = None,
) -> np.ndarray:
    """Net acceleration on one agent from the current (old) world state.

    Coincident centers are a degenerate input: the repulsion direction is
    then +x for the lower-index agent of the pair and -x for the other, so a
    synchronous update stays permutation-invariant.
    """
    if other_indices is None:
        other_indices = list(range(len(others)))

    to_goal = agent.goal - agent.position
    dist_goal = float(np.linalg.norm(to_goal))
    if dist_goal <= params.goal_hold_radius:
        desired = np.zeros(2)
    else:
        desired = agent.v_pref * to_goal / dist_goal
    force = (desired - agent.velocity) / params.relaxation_time

    for other, idx in zip(others, other_indices):
        tie = np.array([1.0, 0.0]) if agent_index < idx else np.array([-1.0, 0.0])
        force += _repulsion(
            agent.position - other.position,
            agent.radius + other.radius,
            params.agent_repulsion_strength,
            params.agent_repulsion_range,
            tie,
        )

    if robot is not None:
        robot_pos, robot_radius = robot
        force += _repulsion(
            agent.position - np.asarray(robot_pos, dtype=float),
            agent.radius + robot_radius,
            params.agent_repulsion_strength,
            params.agent_repulsion_range,
            np.array([1.0, 0.0]),
        )

    for seg in np.asarray(walls, dtype=float).reshape(-1, 4):
        force += _repulsion(
            _point_segment_offset(agent.position, seg),
            agent.radius,
            params.wall_repulsion_strength,
            params.wall_repulsion_range,
            np.array([1.0, 0.0]),
        )

    return force


def step_humans(
    agents: list[HumanAgent],
    walls: np.ndarray,
    robot: tuple[np.ndarray, float] | None,
    dt: float,
    params: SfmParams,
) -> list[HumanAgent]:
    """Synchronous explicit-Euler step: all forces from the old state, then
    velocity (speed-clamped) and position updates. Agents within the goal-hold
    radius stop and stay."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    forces = [
        compute_social_force(
            agent,
            [a for j, a in enumerate(agents) if j != i],
            walls,
            robot,
            params,
            agent_index=i,
            other_indices=[j for j in range(len(agents)) if j != i],
        )
        for i, agent in enumerate(agents)
    ]
    updated = []
    for agent, force in zip(agents, forces):
        if float(np.linalg.norm(agent.goal - agent.position)) <= params.goal_hold_radius:
            updated.append(replace(agent, velocity=np.zeros(2), position=agent.position.copy()))
            continue
        velocity = agent.velocity + force * dt
        speed = float(np.linalg.norm(velocity))
        cap = params.speed_clamp * agent.v_pref
        if speed > cap:
            velocity = velocity * (cap / speed)
        updated.append(
            replace(agent, velocity=velocity, position=agent.position + velocity * dt)
        )
    return updated
