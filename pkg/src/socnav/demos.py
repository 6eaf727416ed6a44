"""Bundled demonstration generators.

Two sample corpora ship with the project: a planar corridor study (2D
position demos around a single static human) and co-boarding demos in the
elevator scenarios (observation-action demos). Both are produced by scripted
stand-ins for a human teleoperator: waypoint followers for the corridor and
rule-term controllers for co-boarding. Everything is seeded and regenerable
via the `make-synthetic` CLI command.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .persistence import EpisodeRecord, load_episode_dir, write_episode
from .scenario import (
    EpisodeConfig,
    ScenarioInstance,
    build_scenario,
    build_synthetic_corridor,
    run_episode,
)
from .teacher import ScoreWeights, TeacherPolicy
from .world import VelocityCommand, WorldSnapshot, wrap_angle


class WaypointPolicy:
    """Scripted teleoperation stand-in: steer toward the next waypoint with
    proportional heading control, advancing when close."""

    def __init__(self, waypoints: np.ndarray, v: float = 0.5, gain: float = 2.0,
                 advance_radius: float = 0.25):
        self.waypoints = np.asarray(waypoints, dtype=float)
        self.v = v
        self.gain = gain
        self.advance_radius = advance_radius
        self.reset()

    def reset(self) -> None:
        self._index = 0

    def act(self, obs_vector: np.ndarray, world: WorldSnapshot) -> VelocityCommand:
        robot = world.robot
        while (
            self._index < len(self.waypoints) - 1
            and np.linalg.norm(self.waypoints[self._index] - robot.position)
            < self.advance_radius
        ):
            self._index += 1
        target = self.waypoints[self._index]
        bearing = math.atan2(target[1] - robot.py, target[0] - robot.px)
        omega = float(np.clip(self.gain * wrap_angle(bearing - robot.theta),
                              -0.4 * math.pi, 0.4 * math.pi))
        # slow down while turning hard, as a keyboard operator would
        v = self.v * max(0.2, 1.0 - abs(omega) / (0.4 * math.pi))
        return VelocityCommand(v, omega)


def _corridor_waypoints(side: str, bulge: float, rng: np.random.Generator) -> np.ndarray:
    """A start-to-goal path bowing into the left or right corridor, with
    per-run jitter imitating teleop variability."""
    sign = 1.0 if side == "right" else -1.0
    mid_x = 2.0 + sign * bulge + rng.normal(0.0, 0.05)
    jitter = lambda: rng.normal(0.0, 0.05)  # noqa: E731
    shoulder = 0.75 * mid_x + 0.25 * 2.0
    return np.array(
        [
            [2.0 + jitter(), 0.8],
            [shoulder + jitter(), 1.2],
            [mid_x + jitter(), 2.0],
            [shoulder + jitter(), 2.8],
            [2.0 + jitter(), 3.2],
            [2.0, 3.5],
        ]
    )


def _near_human_waypoints(rng: np.random.Generator) -> np.ndarray:
    """A careless path that brushes the central human."""
    side = rng.choice([-1.0, 1.0])
    graze_x = 2.0 + side * rng.uniform(0.55, 0.75)
    return np.array(
        [
            [2.0 + rng.normal(0.0, 0.05), 1.0],
            [graze_x, rng.uniform(1.7, 2.3)],
            [2.0, 3.5],
        ]
    )


def generate_corridor_demos(
    n_right: int = 10,
    n_left: int = 5,
    n_negative: int = 13,
    seed: int = 0,
    config: EpisodeConfig = EpisodeConfig(),
) -> list[EpisodeRecord]:
    """Scripted teleop sessions in the corridor world.

    Positive runs pass cleanly through a corridor, with more sessions on the
    right than the left (the operator's habit the density fit should pick
    up); negative runs graze the human and are labeled -1.
    """
    rng = np.random.default_rng(seed)
    records: list[EpisodeRecord] = []
    scenario = build_synthetic_corridor()

    for side, count in (("right", n_right), ("left", n_left)):
        made = 0
        while made < count:
            policy = WaypointPolicy(_corridor_waypoints(side, 1.1, rng), v=0.5)
            record, result = run_episode(policy, scenario, config, source="teleop")
            if result.success and min(result.clearance_trace) > 0.65:
                record.label = 1
                records.append(record)
                made += 1

    made = 0
    while made < n_negative:
        policy = WaypointPolicy(_near_human_waypoints(rng), v=0.6)
        record, result = run_episode(policy, scenario, config, source="teleop")
        clearance = min(result.clearance_trace) if result.clearance_trace else math.inf
        if clearance < 0.75:
            # keep the approach and graze, not the uneventful tail
            keep = [f for f in record.frames if f.clearance < 1.4]
            if len(keep) >= 10:
                record.frames = keep
                record.label = -1
                records.append(record)
                made += 1
    return records


def generate_boarding_demos(
    variants: tuple[str, ...] = ("HR-RL", "HL-RR"),
    n_positive: int = 25,
    n_negative: int = 25,
    seed_base: int = 5_000_000,
    max_seeds: int = 600,
    config: EpisodeConfig = EpisodeConfig(),
) -> list[EpisodeRecord]:
    """Scripted demonstration sessions in the co-boarding scenarios.

    Positives come from a cautious goal-plus-clearance controller and keep
    only clean successes; negatives are collision episodes of the
    distance-adaptive rule controller, truncated to the final approach. The
    counts are per variant.
    """
    records: list[EpisodeRecord] = []
    for variant in variants:
        n_pos = n_neg = 0
        for offset in range(max_seeds):
            if n_pos >= n_positive and n_neg >= n_negative:
                break
            scenario = build_scenario(variant, seed_base + offset)
            if n_pos < n_positive:
                demonstrator = TeacherPolicy(
                    reward_model=None, static_weights=ScoreWeights(0.0, 2.0, 1.0)
                )
                record, result = run_episode(
                    demonstrator, scenario, config, source="teleop"
                )
                if result.success and min(result.clearance_trace) >= 0.63:
                    record.label = 1
                    records.append(record)
                    n_pos += 1
            if n_neg < n_negative:
                careless = TeacherPolicy(reward_model=None)
                record, result = run_episode(careless, scenario, config, source="teleop")
                if result.termination == "collision":
                    record.frames = record.frames[-30:]
                    record.label = -1
                    records.append(record)
                    n_neg += 1
        if n_pos < n_positive or n_neg < n_negative:
            raise RuntimeError(
                f"demo generation exhausted {max_seeds} seeds for {variant} "
                f"({n_pos} positive, {n_neg} negative)"
            )
    return records


DATA_DIR = Path(__file__).parent / "data" / "demos"


def write_demo_dir(records: list[EpisodeRecord], directory) -> list[Path]:
    """Write records as numbered episode files; the index keeps generation
    order under the sorted directory read."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, record in enumerate(records):
        kind = "pos" if record.label > 0 else "neg" if record.label < 0 else "raw"
        path = directory / f"{i:03d}-{record.variant}-{kind}.jsonl"
        write_episode(record, path)
        paths.append(path)
    return paths


def load_bundled_demos(corpus: str) -> list[EpisodeRecord]:
    """Demonstrations shipped with the package: 'boarding' or 'corridor'."""
    directory = DATA_DIR / corpus
    if not directory.is_dir():
        raise FileNotFoundError(f"no bundled demo corpus {corpus!r} at {directory}")
    return load_episode_dir(directory)
