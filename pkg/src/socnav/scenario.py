"""Elevator co-boarding scenarios, episode execution, and metric aggregation.

The map is a 4 x 4 m room with an elevator cabin (2.5 m wide, 2.7 m deep)
against the top wall and a 1.8 m door gap centered on the cabin front. Two
humans board while one exits, crossing the robot's path at the doorway.
HR-RL puts the boarding humans' goals on the right of the cabin and the
robot's goal on the left; HL-RR mirrors that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .persistence import EpisodeRecord, Frame
from .social_force import HumanAgent, SfmParams, PREFERRED_SPEEDS, step_humans
from .world import (
    Human,
    LidarConfig,
    RobotState,
    VelocityCommand,
    WorldSnapshot,
    cast_lidar,
    observation_batch,
    step_unicycle,
)

VARIANTS = ("HR-RL", "HL-RR")

MAP_SIZE = 4.0
CABIN_WIDTH = 2.5
CABIN_DEPTH = 2.7
DOOR_WIDTH = 1.8

CABIN_FRONT_Y = MAP_SIZE - CABIN_DEPTH  # 1.3
CABIN_LEFT_X = (MAP_SIZE - CABIN_WIDTH) / 2.0  # 0.75
CABIN_RIGHT_X = CABIN_LEFT_X + CABIN_WIDTH  # 3.25
DOOR_LEFT_X = (MAP_SIZE - DOOR_WIDTH) / 2.0  # 1.1
DOOR_RIGHT_X = DOOR_LEFT_X + DOOR_WIDTH  # 2.9


def elevator_walls() -> np.ndarray:
    """Room boundary plus cabin walls with the door gap on the front wall."""
    return np.array(
        [
            [0.0, 0.0, MAP_SIZE, 0.0],
            [MAP_SIZE, 0.0, MAP_SIZE, MAP_SIZE],
            [MAP_SIZE, MAP_SIZE, 0.0, MAP_SIZE],
            [0.0, MAP_SIZE, 0.0, 0.0],
            # cabin side walls
            [CABIN_LEFT_X, CABIN_FRONT_Y, CABIN_LEFT_X, MAP_SIZE],
            [CABIN_RIGHT_X, CABIN_FRONT_Y, CABIN_RIGHT_X, MAP_SIZE],
            # cabin front wall around the door gap
            [CABIN_LEFT_X, CABIN_FRONT_Y, DOOR_LEFT_X, CABIN_FRONT_Y],
            [DOOR_RIGHT_X, CABIN_FRONT_Y, CABIN_RIGHT_X, CABIN_FRONT_Y],
        ]
    )


@dataclass(frozen=True)
class EpisodeConfig:
    """Control loop timing and the collision/goal radii."""

    control_rate: float = 10.0
    timeout: float = 30.0
    robot_radius: float = 0.3
    goal_radius: float = 0.3

    def __post_init__(self):
        if self.timeout <= 0 or self.robot_radius <= 0 or self.goal_radius <= 0:
            raise ValueError("timeout and radii must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate


@dataclass
class ScenarioInstance:
    """A concrete, seeded world ready to run: geometry, pedestrians with
    goals, robot start pose, and robot goal."""

    variant: str
    seed: int
    walls: np.ndarray
    agents: list[HumanAgent]
    robot: RobotState
    goal: np.ndarray

    def world(self) -> WorldSnapshot:
        humans = [Human(a.position.copy(), a.velocity.copy(), a.radius) for a in self.agents]
        return WorldSnapshot(self.walls, humans, self.robot, self.goal)


@dataclass
class EpisodeResult:
    success: bool
    total_time: float
    path_length: float
    termination: str  # goal | collision | timeout | policy_error
    clearance_trace: list[float]


@dataclass
class MetricsReport:
    """Success rate (percent), time and path length averaged over successful
    episodes only, plus the per-seed breakdown."""

    variant: str
    success_rate: float
    mean_time: float
    mean_path_length: float
    per_seed: list[dict]
    n_seeds: int
    n_trials: int


def _mirror_x(x: float) -> float:
    return MAP_SIZE - x


def build_scenario(variant: str, seed: int, human_radius: float = 0.6) -> ScenarioInstance:
    """Seeded scenario construction.

    The exiting human starts inside the cabin and leaves through the door;
    the two boarding humans start in the lower corners and board on the
    variant's human side; the robot spawns at a random position between the
    boarding humans with its goal on the opposite side of the cabin.
    Spawns are collision-free by construction margins.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    rng = np.random.default_rng(seed)
    mirror = variant == "HL-RR"

    def mx(x: float) -> float:
        return _mirror_x(x) if mirror else x

    # Boarding humans start low, one per side, well separated. Their x bands
    # keep >= 0.9 m between each human center and any robot spawn.
    left_x = rng.uniform(0.7, 1.0)
    right_x = rng.uniform(3.0, 3.3)
    # The boarder starting opposite the human side crosses the map; give it
    # the deep cabin goal so its path clears the robot spawn area, and give
    # the same-side boarder the shallow goal.
    goal_a_x = mx(rng.uniform(2.55, 2.85))
    goal_b_x = mx(rng.uniform(2.55, 2.85))
    deep_y = rng.uniform(3.0, 3.4)
    shallow_y = rng.uniform(1.9, 2.4)
    goal_a_y, goal_b_y = (shallow_y, deep_y) if mirror else (deep_y, shallow_y)
    boarder_a = HumanAgent(
        position=np.array([left_x, rng.uniform(0.65, 0.9)]),
        velocity=np.zeros(2),
        goal=np.array([goal_a_x, goal_a_y]),
        v_pref=float(rng.choice(PREFERRED_SPEEDS)),
        radius=human_radius,
    )
    boarder_b = HumanAgent(
        position=np.array([right_x, rng.uniform(0.65, 0.9)]),
        velocity=np.zeros(2),
        goal=np.array([goal_b_x, goal_b_y]),
        v_pref=float(rng.choice(PREFERRED_SPEEDS)),
        radius=human_radius,
    )
    # Exiting human: inside the cabin, heading out through the doorway.
    exiting = HumanAgent(
        position=np.array([rng.uniform(1.8, 2.2), rng.uniform(2.2, 2.6)]),
        velocity=np.zeros(2),
        goal=np.array([mx(rng.uniform(3.0, 3.4)), rng.uniform(0.3, 0.5)]),
        v_pref=float(rng.choice(PREFERRED_SPEEDS)),
        radius=human_radius,
    )

    # Robot spawns between the boarding humans, at least 0.9 m + margin from
    # each (their x positions leave [1.8, 2.2] always clear).
    robot_xy = np.array([rng.uniform(1.9, 2.1), rng.uniform(0.35, 0.55)])
    goal = np.array([mx(rng.uniform(1.25, 1.55)), rng.uniform(2.8, 3.3)])
    heading = math.atan2(goal[1] - robot_xy[1], goal[0] - robot_xy[0])
    robot = RobotState(robot_xy[0], robot_xy[1], heading)

    return ScenarioInstance(
        variant=variant,
        seed=seed,
        walls=elevator_walls(),
        agents=[boarder_a, boarder_b, exiting],
        robot=robot,
        goal=goal,
    )


def build_synthetic_corridor(human_radius: float = 0.6) -> ScenarioInstance:
    """Static planar study world: one stationary human centered between the
    start and goal, leaving feasible corridors on both sides."""
    human = HumanAgent(
        position=np.array([MAP_SIZE / 2, MAP_SIZE / 2]),
        velocity=np.zeros(2),
        goal=np.array([MAP_SIZE / 2, MAP_SIZE / 2]),
        v_pref=0.5,
        radius=human_radius,
    )
    walls = np.array(
        [
            [0.0, 0.0, MAP_SIZE, 0.0],
            [MAP_SIZE, 0.0, MAP_SIZE, MAP_SIZE],
            [MAP_SIZE, MAP_SIZE, 0.0, MAP_SIZE],
            [0.0, MAP_SIZE, 0.0, 0.0],
        ]
    )
    return ScenarioInstance(
        variant="corridor",
        seed=0,
        walls=walls,
        agents=[human],
        robot=RobotState(MAP_SIZE / 2, 0.5, math.pi / 2),
        goal=np.array([MAP_SIZE / 2, 3.5]),
    )


# Probe points for the corridor study: midway along y, centered in the free
# gap between the human disc and each side wall.
CORRIDOR_LEFT_MID = (0.7, 2.0)
CORRIDOR_RIGHT_MID = (3.3, 2.0)


def min_human_clearance(robot_xy: np.ndarray, agents: list[HumanAgent], robot_radius: float) -> float:
    """Smallest surface-to-surface distance between robot and any human
    (negative means overlap). This drives collision detection."""
    if not agents:
        return float("inf")
    return min(
        float(np.linalg.norm(robot_xy - a.position)) - a.radius - robot_radius for a in agents
    )


def min_human_distance(robot_xy: np.ndarray, agents: list[HumanAgent], robot_radius: float) -> float:
    """Smallest distance from the robot body to any human's tracked position,
    the per-frame clearance logged in records (a tracker reports people as
    points, while the robot accounts for its own footprint)."""
    if not agents:
        return float("inf")
    return min(
        float(np.linalg.norm(robot_xy - a.position)) - robot_radius for a in agents
    )


def _wall_distance(point: np.ndarray, walls: np.ndarray) -> float:
    best = float("inf")
    for seg in walls:
        a, b = seg[0:2], seg[2:4]
        ab = b - a
        denom = float(ab @ ab)
        t = 0.0 if denom == 0.0 else float(np.clip((point - a) @ ab / denom, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(point - (a + t * ab))))
    return best


class EpisodeStepper:
    """Closed-loop episode state machine at the control rate.

    Each tick is sense() -> (obs, world), then apply(cmd) -> termination or
    None while running. run_episode and the session service both drive this
    class, so a streamed session and an in-process run with the same command
    sequence produce the same record.
    """

    def __init__(
        self,
        scenario: ScenarioInstance,
        config: EpisodeConfig = EpisodeConfig(),
        sfm: SfmParams = SfmParams(),
        lidar: LidarConfig = LidarConfig(),
    ):
        self.scenario = scenario
        self.config = config
        self.sfm = sfm
        self.lidar = lidar
        self.robot = scenario.robot
        self.agents = [
            HumanAgent(a.position.copy(), a.velocity.copy(), a.goal.copy(), a.v_pref, a.radius)
            for a in scenario.agents
        ]
        self.frames: list[Frame] = []
        self.clearance_trace: list[float] = []
        self.path_length = 0.0
        self.t = 0.0
        self.tick = 0
        self.n_steps = int(round(config.timeout / config.dt))
        self.termination: str | None = None
        self.last_ranges: np.ndarray | None = None

    @property
    def done(self) -> bool:
        return self.termination is not None

    def sense(self) -> tuple[np.ndarray, WorldSnapshot]:
        """Current observation and world snapshot (also caches the scan)."""
        world = WorldSnapshot(
            self.scenario.walls,
            [Human(a.position.copy(), a.velocity.copy(), a.radius) for a in self.agents],
            self.robot,
            self.scenario.goal,
        )
        self.last_ranges = cast_lidar(world, self.robot, self.lidar)
        obs = observation_batch(
            self.last_ranges[None, :],
            np.array([[self.robot.px, self.robot.py, self.robot.theta]]),
            self.scenario.goal,
            self.lidar,
        )[0]
        return obs, world

    def current_clearance(self) -> float:
        return min_human_distance(self.robot.position, self.agents, self.config.robot_radius)

    def _surface_clearance(self) -> float:
        return min_human_clearance(self.robot.position, self.agents, self.config.robot_radius)

    def apply(self, obs: np.ndarray, cmd) -> str | None:
        """Record the frame, advance one control period, check termination."""
        if self.done:
            raise RuntimeError(f"episode already terminated ({self.termination})")
        dt = self.config.dt
        robot = self.robot
        self.frames.append(
            Frame(
                t=self.t,
                observation=obs,
                command=(cmd.v, cmd.omega),
                pose=(robot.px, robot.py, robot.theta),
                humans=[
                    (a.position[0], a.position[1], a.velocity[0], a.velocity[1], a.radius)
                    for a in self.agents
                ],
                clearance=self.current_clearance(),
            )
        )

        new_robot = step_unicycle(robot, cmd, dt)
        self.agents = step_humans(
            self.agents, self.scenario.walls, (robot.position, self.config.robot_radius), dt, self.sfm
        )
        self.path_length += float(np.linalg.norm(new_robot.position - robot.position))
        self.robot = new_robot
        self.t += dt
        self.tick += 1

        self.clearance_trace.append(self.current_clearance())
        if (
            self._surface_clearance() < 0.0
            or _wall_distance(self.robot.position, self.scenario.walls) < self.config.robot_radius
        ):
            self.termination = "collision"
        elif (
            float(np.linalg.norm(self.robot.position - self.scenario.goal))
            <= self.config.goal_radius
        ):
            self.termination = "goal"
        elif self.tick >= self.n_steps:
            self.termination = "timeout"
        return self.termination

    def result(self) -> EpisodeResult:
        termination = self.termination if self.termination is not None else "timeout"
        return EpisodeResult(
            success=termination == "goal",
            total_time=self.t,
            path_length=self.path_length,
            termination=termination,
            clearance_trace=self.clearance_trace,
        )

    def record(self, source: str = "teacher", config_hash: str = "") -> EpisodeRecord:
        result = self.result()
        return EpisodeRecord(
            variant=self.scenario.variant,
            seed=self.scenario.seed,
            config_hash=config_hash,
            label=0,
            source=source,
            frames=self.frames,
            result={
                "success": result.success,
                "total_time": result.total_time,
                "path_length": result.path_length,
                "termination": result.termination,
            },
        )


def run_episode(
    policy,
    scenario: ScenarioInstance,
    config: EpisodeConfig = EpisodeConfig(),
    sfm: SfmParams = SfmParams(),
    lidar: LidarConfig = LidarConfig(),
    source: str = "teacher",
    config_hash: str = "",
) -> tuple[EpisodeRecord, EpisodeResult]:
    """Run one closed-loop episode at the control rate.

    `policy` must expose reset() and act(obs_vector, world) -> VelocityCommand.
    Terminates on goal arrival, collision (human or wall), timeout, or a
    policy exception (recorded as termination='policy_error').
    """
    stepper = EpisodeStepper(scenario, config, sfm, lidar)
    policy.reset()
    while not stepper.done:
        obs, world = stepper.sense()
        try:
            cmd = policy.act(obs, world)
        except Exception:
            stepper.termination = "policy_error"
            break
        stepper.apply(obs, cmd)
    return stepper.record(source, config_hash), stepper.result()


def trial_seed(seed: int, trial: int) -> int:
    return seed * 100_000 + trial


def _evaluate_trial(payload) -> tuple[int, int, EpisodeResult]:
    policy, variant, seed, trial, config, sfm, lidar = payload
    scenario = build_scenario(variant, trial_seed(seed, trial))
    _, result = run_episode(policy, scenario, config, sfm, lidar)
    result.clearance_trace = []  # not aggregated; keep the pickles small
    return seed, trial, result


def evaluate(
    policy,
    variant: str,
    n_seeds: int = 5,
    n_trials: int = 100,
    config: EpisodeConfig = EpisodeConfig(),
    sfm: SfmParams = SfmParams(),
    lidar: LidarConfig = LidarConfig(),
    progress=None,
    workers: int | None = None,
) -> MetricsReport:
    """SR/TT/PL over n_seeds x n_trials seeded episodes; TT and PL are
    averaged over successes only.

    workers > 1 runs trials in a process pool. Episodes are independent and
    aggregation is keyed by (seed, trial), so the report is identical to the
    serial one.
    """
    results: dict[tuple[int, int], EpisodeResult] = {}
    keys = [(seed, trial) for seed in range(n_seeds) for trial in range(n_trials)]
    if workers is not None and workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        payloads = [(policy, variant, s, t, config, sfm, lidar) for s, t in keys]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for seed, trial, result in pool.map(_evaluate_trial, payloads, chunksize=4):
                results[(seed, trial)] = result
                if progress is not None:
                    progress(seed, trial, result)
    else:
        for seed, trial in keys:
            scenario = build_scenario(variant, trial_seed(seed, trial))
            _, result = run_episode(policy, scenario, config, sfm, lidar)
            results[(seed, trial)] = result
            if progress is not None:
                progress(seed, trial, result)

    per_seed = []
    all_success: list[bool] = []
    success_tt: list[float] = []
    success_pl: list[float] = []
    for seed in range(n_seeds):
        seed_success, seed_tt, seed_pl = [], [], []
        for trial in range(n_trials):
            result = results[(seed, trial)]
            seed_success.append(result.success)
            if result.success:
                seed_tt.append(result.total_time)
                seed_pl.append(result.path_length)
        per_seed.append(
            {
                "seed": seed,
                "sr": 100.0 * float(np.mean(seed_success)),
                "tt": float(np.mean(seed_tt)) if seed_tt else float("nan"),
                "pl": float(np.mean(seed_pl)) if seed_pl else float("nan"),
            }
        )
        all_success.extend(seed_success)
        success_tt.extend(seed_tt)
        success_pl.extend(seed_pl)
    return MetricsReport(
        variant=variant,
        success_rate=100.0 * float(np.mean(all_success)),
        mean_time=float(np.mean(success_tt)) if success_tt else float("nan"),
        mean_path_length=float(np.mean(success_pl)) if success_pl else float("nan"),
        per_seed=per_seed,
        n_seeds=n_seeds,
        n_trials=n_trials,
    )
