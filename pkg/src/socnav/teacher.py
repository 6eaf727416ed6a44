"""Sampling-based lookahead teacher controller.

Every control cycle enumerates 120 constant velocity commands (8 linear x 15
angular), simulates each over a 3 s horizon against a predicted world, scores
the rollouts with a density reward plus rule-based goal and clearance terms
under distance-adaptive weights, and executes an EMA-smoothed version of the
best first action.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .reward import RewardModel, eval_reward
from .social_force import HumanAgent, SfmParams, step_humans
from .world import (
    LidarConfig,
    RobotState,
    VelocityCommand,
    WorldSnapshot,
    circle_ranges,
    observation_batch,
    rollout_scan,
    rollout_states,
    segment_ranges,
)

LINEAR_CHOICES = tuple(round(0.1 * i, 1) for i in range(1, 9))  # 0.1 .. 0.8 m/s
ANGULAR_LIMIT = 0.4 * math.pi
ANGULAR_COUNT = 15
PREDICTION_MODES = ("constant-velocity", "frozen", "social-force")


def candidate_set() -> np.ndarray:
    """The 120 (v, omega) candidates; the angular grid is symmetric about 0
    and contains 0."""
    v = np.array(LINEAR_CHOICES)
    w = np.linspace(-ANGULAR_LIMIT, ANGULAR_LIMIT, ANGULAR_COUNT)
    vv, ww = np.meshgrid(v, w, indexing="ij")
    return np.column_stack([vv.ravel(), ww.ravel()])


@dataclass(frozen=True)
class RolloutConfig:
    """Lookahead horizon and how humans are extrapolated inside it."""

    horizon: float = 3.0
    dt: float = 0.3
    human_prediction: str = "constant-velocity"

    def __post_init__(self):
        if self.human_prediction not in PREDICTION_MODES:
            raise ValueError(f"unknown prediction mode {self.human_prediction!r}")
        if self.steps < 1:
            raise ValueError("horizon must cover at least one step")

    @property
    def steps(self) -> int:
        return int(self.horizon / self.dt)


@dataclass(frozen=True)
class ScoreWeights:
    density: float
    goal: float
    obstacle: float

    def __post_init__(self):
        if self.density < 0 or self.goal < 0 or self.obstacle < 0:
            raise ValueError("score weights must be nonnegative")


@dataclass(frozen=True)
class GoalContext:
    """Current and initial goal distances; progress ratio clipped to [0, 1]."""

    d_goal: float
    d_total: float

    def __post_init__(self):
        if self.d_total <= 0:
            raise ValueError("initial goal distance must be positive")

    @property
    def r(self) -> float:
        return float(np.clip(self.d_goal / self.d_total, 0.0, 1.0))


def adaptive_weights(ctx: GoalContext) -> ScoreWeights:
    """Distance-adaptive term weights: density dominates far from the goal,
    goal attraction takes over near it, clearance stays constant."""
    r = ctx.r
    return ScoreWeights(
        density=1.0 + math.cos(math.pi * (1.0 - r)),
        goal=2.0 * (1.0 - r),
        obstacle=1.0,
    )


@dataclass
class Rollout:
    """One constant-command lookahead: poses, encoded observations, and
    per-step clearances (index 0 is the current state)."""

    command: VelocityCommand
    states: np.ndarray  # (L+1, 3)
    observations: np.ndarray  # (L+1, obs_dim)
    clearances: np.ndarray  # (L+1,)


def predicted_human_circles(
    world: WorldSnapshot, config: RolloutConfig, sfm: SfmParams | None = None
) -> np.ndarray:
    """Human disc positions for rollout steps 1..L, shape (L, H, 3).

    constant-velocity extrapolates linearly; frozen holds positions; the
    social-force mode steps the force model with each human's current motion
    direction extended as a surrogate goal (true goals are not observable).
    """
    steps = config.steps
    circles = world.human_circles()
    h = circles.shape[0]
    if h == 0:
        return np.zeros((steps, 0, 3))
    if config.human_prediction == "frozen":
        return np.broadcast_to(circles, (steps, h, 3)).copy()
    if config.human_prediction == "constant-velocity":
        vel = np.array([[hm.velocity[0], hm.velocity[1]] for hm in world.humans])
        out = np.broadcast_to(circles, (steps, h, 3)).copy()
        ell = (np.arange(1, steps + 1) * config.dt)[:, None, None]
        out[:, :, 0:2] += ell * vel[None, :, :]
        return out
    # social-force surrogate rollout
    sfm = sfm or SfmParams()
    agents = []
    for hm in world.humans:
        speed = float(np.linalg.norm(hm.velocity))
        direction = hm.velocity / speed if speed > 1e-9 else np.array([1.0, 0.0])
        agents.append(
            HumanAgent(
                position=hm.position.copy(),
                velocity=hm.velocity.copy(),
                goal=hm.position + direction * 10.0,
                v_pref=max(speed, 0.1),
                radius=hm.radius,
            )
        )
    out = np.zeros((steps, h, 3))
    for ell in range(steps):
        agents = step_humans(agents, world.walls, None, config.dt, sfm)
        for i, agent in enumerate(agents):
            out[ell, i] = [agent.position[0], agent.position[1], agent.radius]
    return out


def rollout_batch(
    state: RobotState,
    cmds: np.ndarray,
    world: WorldSnapshot,
    config: RolloutConfig,
    lidar: LidarConfig,
    sfm: SfmParams | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Simulate all commands at once against the predicted world.

    Returns (states (N, L+1, 3), observations (N, L+1, obs_dim),
    clearances (N, L+1)). Clearance is the smallest raw beam range at each
    step. Wall geometry is static, so all (N * L) scans share one
    ray-vs-segment pass; discs move per step.
    """
    cmds = np.asarray(cmds, dtype=float).reshape(-1, 2)
    n, steps, g = cmds.shape[0], config.steps, lidar.beam_count
    states = rollout_states(state, cmds, steps, config.dt)
    circles_per_step = predicted_human_circles(world, config, sfm)

    beam_offsets = np.arange(g) * lidar.beam_spacing
    # Scans for steps 1..L: (L, N, G)
    poses = states[:, 1:, :].transpose(1, 0, 2)  # (L, N, 3)
    ranges = rollout_scan(poses, world.walls, circles_per_step, lidar)

    obs_dim = lidar.observation_dim
    observations = np.zeros((n, steps + 1, obs_dim))
    clearances = np.zeros((n, steps + 1))

    # Step 0: current pose against the current world.
    scan0_angles = state.theta + beam_offsets
    scan0_origins = np.tile([state.px, state.py], (g, 1))
    dirs0 = np.stack([np.cos(scan0_angles), np.sin(scan0_angles)], axis=-1)
    scan0 = np.minimum(
        np.minimum(
            segment_ranges(scan0_origins, dirs0, world.walls),
            circle_ranges(scan0_origins, dirs0, world.human_circles()),
        ),
        lidar.max_range,
    )
    obs0 = observation_batch(
        scan0[None, :], np.array([[state.px, state.py, state.theta]]), world.goal, lidar
    )[0]
    observations[:, 0, :] = obs0
    clearances[:, 0] = scan0.min()

    obs_flat = observation_batch(
        ranges.reshape(steps * n, g), poses.reshape(steps * n, 3), world.goal, lidar
    )
    observations[:, 1:, :] = obs_flat.reshape(steps, n, obs_dim).transpose(1, 0, 2)
    clearances[:, 1:] = ranges.min(axis=2).T

    return states, observations, clearances


def rollout(
    state: RobotState,
    cmd: VelocityCommand,
    world: WorldSnapshot,
    config: RolloutConfig,
    lidar: LidarConfig = LidarConfig(),
    sfm: SfmParams | None = None,
) -> Rollout:
    """Single-command convenience wrapper over rollout_batch."""
    states, observations, clearances = rollout_batch(
        state, np.array([[cmd.v, cmd.omega]]), world, config, lidar, sfm
    )
    return Rollout(cmd, states[0], observations[0], clearances[0])


def _density_scores(
    observations: np.ndarray,
    states: np.ndarray,
    cmds: np.ndarray,
    reward_model: RewardModel | None,
) -> np.ndarray:
    """Mean density reward over steps 1..L for each candidate. A 2D model is
    queried at positions; a (obs_dim + 2)-dim model at (observation, command)
    pairs with the rollout's constant command."""
    n, lp1 = observations.shape[0], observations.shape[1]
    steps = lp1 - 1
    if reward_model is None:
        return np.zeros(n)
    if reward_model.dim == 2:
        queries = states[:, 1:, 0:2].reshape(-1, 2)
    elif reward_model.dim == observations.shape[2] + 2:
        rep_cmds = np.repeat(cmds, steps, axis=0)
        queries = np.concatenate([observations[:, 1:, :].reshape(n * steps, -1), rep_cmds], axis=1)
    else:
        raise ValueError(
            f"reward model dimension {reward_model.dim} matches neither positions "
            f"nor observation-action pairs"
        )
    return eval_reward(reward_model, queries).reshape(n, steps).mean(axis=1)


def goal_term(terminal_positions: np.ndarray, goal: np.ndarray, d_total: float) -> np.ndarray:
    d_goal = np.linalg.norm(terminal_positions - goal[None, :], axis=1)
    return 1.0 - np.tanh(d_goal / d_total)


def obstacle_term(clearances: np.ndarray) -> np.ndarray:
    """tanh of the mean per-step clearance over steps 1..L."""
    return np.tanh(clearances[:, 1:].mean(axis=1))


def score_rollout(
    roll: Rollout,
    reward_model: RewardModel | None,
    ctx: GoalContext,
    weights: ScoreWeights,
    goal: np.ndarray,
) -> float:
    """Weighted sum of the density, goal, and obstacle terms for one rollout."""
    cmds = np.array([[roll.command.v, roll.command.omega]])
    den = _density_scores(roll.observations[None, ...], roll.states[None, ...], cmds, reward_model)
    g = goal_term(roll.states[None, -1, 0:2], np.asarray(goal, float), ctx.d_total)
    obs = obstacle_term(roll.clearances[None, :])
    return float(weights.density * den[0] + weights.goal * g[0] + weights.obstacle * obs[0])


class TeacherPolicy:
    """Privileged lookahead controller.

    Holds the fitted reward model (optional; rule terms only when absent),
    term toggles for ablations, and per-episode state: the initial goal
    distance and the EMA command. Call reset() at episode start.
    """

    def __init__(
        self,
        reward_model: RewardModel | None = None,
        rollout_config: RolloutConfig = RolloutConfig(),
        lidar: LidarConfig = LidarConfig(),
        ema: float = 0.5,
        density_on: bool = True,
        goal_on: bool = True,
        obstacle_on: bool = True,
        static_weights: ScoreWeights | None = None,
        sfm: SfmParams | None = None,
    ):
        self.reward_model = reward_model
        self.rollout_config = rollout_config
        self.lidar = lidar
        self.ema = ema
        self.density_on = density_on
        self.goal_on = goal_on
        self.obstacle_on = obstacle_on
        self.static_weights = static_weights
        self.sfm = sfm
        self.candidates = candidate_set()
        self.reset()

    def reset(self) -> None:
        self.prev_cmd: np.ndarray | None = None
        self.d_total: float | None = None

    def _weights(self, ctx: GoalContext) -> ScoreWeights:
        w = self.static_weights if self.static_weights is not None else adaptive_weights(ctx)
        return ScoreWeights(
            density=w.density if self.density_on else 0.0,
            goal=w.goal if self.goal_on else 0.0,
            obstacle=w.obstacle if self.obstacle_on else 0.0,
        )

    def score_candidates(self, world: WorldSnapshot) -> dict:
        """Score all 120 candidates from the current world state."""
        robot = world.robot
        d_goal = float(np.linalg.norm(robot.position - world.goal))
        if self.d_total is None:
            self.d_total = max(d_goal, 1e-9)
        ctx = GoalContext(d_goal=d_goal, d_total=self.d_total)
        weights = self._weights(ctx)

        states, observations, clearances = rollout_batch(
            robot, self.candidates, world, self.rollout_config, self.lidar, self.sfm
        )
        den = (
            _density_scores(observations, states, self.candidates, self.reward_model)
            if weights.density > 0.0
            else np.zeros(self.candidates.shape[0])
        )
        g = goal_term(states[:, -1, 0:2], world.goal, self.d_total)
        obs = obstacle_term(clearances)
        scores = weights.density * den + weights.goal * g + weights.obstacle * obs
        return {"scores": scores, "density": den, "goal": g, "obstacle": obs, "weights": weights}

    def raw_action(self, world: WorldSnapshot) -> VelocityCommand:
        """Pre-EMA argmax command; ties break toward lower |omega|, then
        lower v. Does not touch the EMA state (used for labeling)."""
        scores = self.score_candidates(world)["scores"]
        # lexsort: last key is primary.
        order = np.lexsort(
            (self.candidates[:, 0], np.abs(self.candidates[:, 1]), -scores)
        )
        best = self.candidates[order[0]]
        return VelocityCommand(float(best[0]), float(best[1]))

    def act(self, obs_vector: np.ndarray, world: WorldSnapshot) -> VelocityCommand:
        """One control cycle: raw argmax blended with the previous output."""
        raw = self.raw_action(world)
        raw_arr = raw.as_array()
        if self.prev_cmd is None:
            out = raw_arr
        else:
            out = self.ema * raw_arr + (1.0 - self.ema) * self.prev_cmd
        self.prev_cmd = out
        return VelocityCommand(float(out[0]), float(out[1]))
