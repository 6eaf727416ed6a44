"""Robot state, unicycle integration, simulated 2D LiDAR, and observation encoding.

Everything here is a pure function over value types; the simulation loop and
the lookahead controller both build on these primitives. Batched variants
(`lidar_scan_batch`, `observation_batch`) exist because the controller scores
hundreds of poses per control cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    return math.pi - (math.pi - theta) % TWO_PI


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - theta, TWO_PI)


@dataclass(frozen=True)
class RobotState:
    """Planar pose: position in meters, heading in radians, wrapped to (-pi, pi]."""

    px: float
    py: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.px, self.py])


@dataclass(frozen=True)
class VelocityCommand:
    """Translational (>= 0) and rotational velocity command."""

    v: float
    omega: float

    def __post_init__(self):
        if self.v < 0.0:
            raise ValueError(f"translational velocity must be >= 0, got {self.v}")

    def as_array(self) -> np.ndarray:
        return np.array([self.v, self.omega])


@dataclass
class Human:
    """A pedestrian as seen by the sensor model: a moving disc."""

    position: np.ndarray
    velocity: np.ndarray
    radius: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.radius <= 0.0:
            raise ValueError("human radius must be positive")


@dataclass
class WorldSnapshot:
    """Geometric world at one instant: wall segments, human discs, robot, goal.

    walls: (S, 4) array of segments (x0, y0, x1, y1), meters.
    """

    walls: np.ndarray
    humans: list[Human]
    robot: RobotState
    goal: np.ndarray

    def __post_init__(self):
        self.walls = np.asarray(self.walls, dtype=float).reshape(-1, 4)
        self.goal = np.asarray(self.goal, dtype=float)

    def human_circles(self) -> np.ndarray:
        """(H, 3) array of (cx, cy, radius)."""
        if not self.humans:
            return np.zeros((0, 3))
        return np.array([[h.position[0], h.position[1], h.radius] for h in self.humans])


@dataclass(frozen=True)
class LidarConfig:
    """Beam layout: G beams spaced 2*pi/G counterclockwise from the heading,
    min-pooled in groups of g, with the b globally nearest beams reported
    separately."""

    beam_count: int = 72
    group_size: int = 3
    nearest_count: int = 2
    max_range: float = 10.0

    def __post_init__(self):
        if self.beam_count % self.group_size != 0:
            raise ValueError("beam_count must be divisible by group_size")
        if self.nearest_count < 1 or self.max_range <= 0.0:
            raise ValueError("invalid lidar configuration")

    @property
    def group_count(self) -> int:
        return self.beam_count // self.group_size

    @property
    def beam_spacing(self) -> float:
        return TWO_PI / self.beam_count

    @property
    def observation_dim(self) -> int:
        return self.group_count + 2 * self.nearest_count + 1


@dataclass(frozen=True)
class Observation:
    """Robot-frame sensor/goal features (29-dim with the default config):
    grouped ranges, the b nearest beam distances (ascending) with their
    angles, and the goal bearing."""

    grouped_ranges: np.ndarray
    nearest_dists: np.ndarray
    nearest_angles: np.ndarray
    goal_angle: float

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [self.grouped_ranges, self.nearest_dists, self.nearest_angles, [self.goal_angle]]
        )


def step_unicycle(state: RobotState, cmd: VelocityCommand, dt: float) -> RobotState:
    """Exact constant-command arc integration of the unicycle model."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    v, w = cmd.v, cmd.omega
    if abs(w) < 1e-6:
        return RobotState(
            state.px + v * math.cos(state.theta) * dt,
            state.py + v * math.sin(state.theta) * dt,
            state.theta,
        )
    theta1 = state.theta + w * dt
    r = v / w
    return RobotState(
        state.px + r * (math.sin(theta1) - math.sin(state.theta)),
        state.py - r * (math.cos(theta1) - math.cos(state.theta)),
        theta1,
    )


def rollout_states(state: RobotState, cmds: np.ndarray, steps: int, dt: float) -> np.ndarray:
    """Closed-form constant-command trajectories for a batch of commands.

    cmds: (N, 2) array of (v, omega). Returns (N, steps + 1, 3) poses, entry
    0 being the initial state.
    """
    cmds = np.asarray(cmds, dtype=float)
    v, w = cmds[:, 0:1], cmds[:, 1:2]
    ell = np.arange(steps + 1)[None, :] * dt
    theta = state.theta + w * ell
    straight = np.abs(w) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(straight, 0.0, v / np.where(straight, 1.0, w))
    px = np.where(
        straight,
        state.px + v * math.cos(state.theta) * ell,
        state.px + r * (np.sin(theta) - math.sin(state.theta)),
    )
    py = np.where(
        straight,
        state.py + v * math.sin(state.theta) * ell,
        state.py - r * (np.cos(theta) - math.cos(state.theta)),
    )
    return np.stack([px, py, wrap_angle_array(theta)], axis=-1)


def _segment_ranges_numpy(origins: np.ndarray, dirs: np.ndarray, walls: np.ndarray) -> np.ndarray:
    walls = np.asarray(walls, dtype=float).reshape(-1, 4)
    n = origins.shape[0]
    if walls.shape[0] == 0:
        return np.full(n, np.inf)
    a = walls[:, 0:2]
    seg = walls[:, 2:4] - a
    ap = a[None, :, :] - origins[:, None, :]  # (N, S, 2)
    denom = dirs[:, None, 0] * seg[None, :, 1] - dirs[:, None, 1] * seg[None, :, 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ap[..., 0] * seg[None, :, 1] - ap[..., 1] * seg[None, :, 0]) / denom
        s = (ap[..., 0] * dirs[:, None, 1] - ap[..., 1] * dirs[:, None, 0]) / denom
    hit = (np.abs(denom) > 1e-12) & (t >= 0.0) & (s >= 0.0) & (s <= 1.0)
    return np.where(hit, t, np.inf).min(axis=1, initial=np.inf)


def _circle_ranges_numpy(origins: np.ndarray, dirs: np.ndarray, circles: np.ndarray) -> np.ndarray:
    circles = np.asarray(circles, dtype=float).reshape(-1, 3)
    n = origins.shape[0]
    if circles.shape[0] == 0:
        return np.full(n, np.inf)
    m = circles[None, :, 0:2] - origins[:, None, :]  # (N, C, 2)
    b = np.einsum("ncj,nj->nc", m, dirs)
    c = np.einsum("ncj,ncj->nc", m, m) - circles[None, :, 2] ** 2
    disc = b * b - c
    sq = np.sqrt(np.maximum(disc, 0.0))
    t1, t2 = b - sq, b + sq
    t = np.where(t1 >= 0.0, t1, np.where(t2 >= 0.0, 0.0, np.inf))
    return np.where(disc >= 0.0, t, np.inf).min(axis=1, initial=np.inf)


try:  # jitted kernels; the raycast is the hot loop of the lookahead controller
    from numba import njit

    @njit(cache=True, fastmath=True)
    def _segment_ranges_jit(origins, dirs, walls):  # pragma: no cover - jitted
        n, s = origins.shape[0], walls.shape[0]
        out = np.full(n, np.inf)
        for i in range(n):
            ox, oy = origins[i, 0], origins[i, 1]
            dx, dy = dirs[i, 0], dirs[i, 1]
            best = np.inf
            for j in range(s):
                ax, ay = walls[j, 0], walls[j, 1]
                sx, sy = walls[j, 2] - ax, walls[j, 3] - ay
                denom = dx * sy - dy * sx
                if abs(denom) <= 1e-12:
                    continue
                apx, apy = ax - ox, ay - oy
                t = (apx * sy - apy * sx) / denom
                u = (apx * dy - apy * dx) / denom
                if t >= 0.0 and 0.0 <= u <= 1.0 and t < best:
                    best = t
            out[i] = best
        return out

    @njit(cache=True, fastmath=True)
    def _circle_ranges_jit(origins, dirs, circles):  # pragma: no cover - jitted
        n, c = origins.shape[0], circles.shape[0]
        out = np.full(n, np.inf)
        for i in range(n):
            ox, oy = origins[i, 0], origins[i, 1]
            dx, dy = dirs[i, 0], dirs[i, 1]
            best = np.inf
            for j in range(c):
                mx, my = circles[j, 0] - ox, circles[j, 1] - oy
                b = mx * dx + my * dy
                disc = b * b - (mx * mx + my * my - circles[j, 2] * circles[j, 2])
                if disc < 0.0:
                    continue
                sq = np.sqrt(disc)
                t1 = b - sq
                if t1 >= 0.0:
                    t = t1
                elif b + sq >= 0.0:
                    t = 0.0
                else:
                    continue
                if t < best:
                    best = t
            out[i] = best
        return out

    @njit(cache=True, fastmath=True)
    def _rollout_scan_jit(poses, walls, circles_per_step, beam_spacing, g, max_range):
        # pragma: no cover - jitted
        n_steps, n = poses.shape[0], poses.shape[1]
        n_walls = walls.shape[0]
        # angle addition: cos/sin of theta once per pose, per-beam offsets once
        beam_cos = np.empty(g)
        beam_sin = np.empty(g)
        for k in range(g):
            beam_cos[k] = np.cos(k * beam_spacing)
            beam_sin[k] = np.sin(k * beam_spacing)
        out = np.empty((n_steps, n, g))
        for ell in range(n_steps):
            circles = circles_per_step[ell]
            n_circ = circles.shape[0]
            for i in range(n):
                ox, oy, th = poses[ell, i, 0], poses[ell, i, 1], poses[ell, i, 2]
                cth, sth = np.cos(th), np.sin(th)
                for k in range(g):
                    dx = cth * beam_cos[k] - sth * beam_sin[k]
                    dy = sth * beam_cos[k] + cth * beam_sin[k]
                    best = max_range
                    for j in range(n_walls):
                        ax, ay = walls[j, 0], walls[j, 1]
                        sx, sy = walls[j, 2] - ax, walls[j, 3] - ay
                        denom = dx * sy - dy * sx
                        if abs(denom) <= 1e-12:
                            continue
                        apx, apy = ax - ox, ay - oy
                        t = (apx * sy - apy * sx) / denom
                        u = (apx * dy - apy * dx) / denom
                        if t >= 0.0 and 0.0 <= u <= 1.0 and t < best:
                            best = t
                    for j in range(n_circ):
                        mx, my = circles[j, 0] - ox, circles[j, 1] - oy
                        b = mx * dx + my * dy
                        disc = b * b - (mx * mx + my * my - circles[j, 2] * circles[j, 2])
                        if disc < 0.0:
                            continue
                        sq = np.sqrt(disc)
                        t1 = b - sq
                        if t1 >= 0.0:
                            t = t1
                        elif b + sq >= 0.0:
                            t = 0.0
                        else:
                            continue
                        if t < best:
                            best = t
                    out[ell, i, k] = best
        return out

    @njit(cache=True)
    def _nearest_beams_jit(ranges, b):  # pragma: no cover - jitted
        n, g = ranges.shape
        idx = np.empty((n, b), np.int64)
        for i in range(n):
            for kk in range(b):
                best = np.inf
                bj = -1
                for j in range(g):
                    taken = False
                    for m in range(kk):
                        if idx[i, m] == j:
                            taken = True
                            break
                    if taken:
                        continue
                    if ranges[i, j] < best:
                        best = ranges[i, j]
                        bj = j
                idx[i, kk] = bj
        return idx

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def segment_ranges(origins: np.ndarray, dirs: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """Per-ray distance to the nearest wall segment (inf when no hit).

    origins, dirs: (N, 2); walls: (S, 4) segments (x0, y0, x1, y1).
    """
    walls = np.ascontiguousarray(np.asarray(walls, dtype=float).reshape(-1, 4))
    if walls.shape[0] == 0:
        return np.full(origins.shape[0], np.inf)
    if _HAVE_NUMBA:
        return _segment_ranges_jit(
            np.ascontiguousarray(origins, dtype=np.float64),
            np.ascontiguousarray(dirs, dtype=np.float64),
            walls,
        )
    return _segment_ranges_numpy(origins, dirs, walls)


def circle_ranges(origins: np.ndarray, dirs: np.ndarray, circles: np.ndarray) -> np.ndarray:
    """Per-ray distance to the nearest disc (inf when no hit; 0 when the ray
    starts inside a disc)."""
    circles = np.ascontiguousarray(np.asarray(circles, dtype=float).reshape(-1, 3))
    if circles.shape[0] == 0:
        return np.full(origins.shape[0], np.inf)
    if _HAVE_NUMBA:
        return _circle_ranges_jit(
            np.ascontiguousarray(origins, dtype=np.float64),
            np.ascontiguousarray(dirs, dtype=np.float64),
            circles,
        )
    return _circle_ranges_numpy(origins, dirs, circles)


def ray_ranges(
    origins: np.ndarray,
    angles: np.ndarray,
    walls: np.ndarray,
    circles: np.ndarray,
    max_range: float,
) -> np.ndarray:
    """Nearest hit distance for each ray against wall segments and discs.

    origins: (N, 2); angles: (N,); walls: (S, 4); circles: (C, 3).
    Returns (N,) ranges clamped to max_range. Deterministic and noise-free.
    """
    origins = np.asarray(origins, dtype=float)
    angles = np.asarray(angles, dtype=float)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    best = np.minimum(
        segment_ranges(origins, dirs, walls), circle_ranges(origins, dirs, circles)
    )
    return np.minimum(best, max_range)


def rollout_scan(
    poses: np.ndarray, walls: np.ndarray, circles_per_step: np.ndarray, config: LidarConfig
) -> np.ndarray:
    """Scans for a block of lookahead poses against per-step disc positions.

    poses: (L, N, 3) robot poses, one row of N per lookahead step; walls are
    static across steps while circles_per_step (L, C, 3) move. Returns
    (L, N, G) ranges clamped to max_range. One fused pass so the lookahead
    controller avoids materializing per-ray origin/direction arrays.
    """
    poses = np.ascontiguousarray(poses, dtype=np.float64)
    walls = np.ascontiguousarray(np.asarray(walls, dtype=float).reshape(-1, 4))
    circles_per_step = np.ascontiguousarray(circles_per_step, dtype=np.float64)
    n_steps, n, g = poses.shape[0], poses.shape[1], config.beam_count
    if _HAVE_NUMBA:
        return _rollout_scan_jit(
            poses, walls, circles_per_step, config.beam_spacing, g, config.max_range
        )
    out = np.empty((n_steps, n, g))
    for ell in range(n_steps):
        out[ell] = lidar_scan_batch(poses[ell], walls, circles_per_step[ell], config)
    return out


def cast_lidar(world: WorldSnapshot, pose: RobotState, config: LidarConfig) -> np.ndarray:
    """Full scan from one pose: G ranges, beam i at world angle theta + i * spacing."""
    return lidar_scan_batch(
        np.array([[pose.px, pose.py, pose.theta]]), world.walls, world.human_circles(), config
    )[0]


def lidar_scan_batch(
    poses: np.ndarray, walls: np.ndarray, circles: np.ndarray, config: LidarConfig
) -> np.ndarray:
    """Scans from many poses at once. poses: (N, 3); returns (N, G)."""
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    n, g = poses.shape[0], config.beam_count
    beam_offsets = np.arange(g) * config.beam_spacing
    angles = (poses[:, 2:3] + beam_offsets[None, :]).ravel()
    origins = np.repeat(poses[:, 0:2], g, axis=0)
    return ray_ranges(origins, angles, walls, circles, config.max_range).reshape(n, g)


def build_observation(
    ranges: np.ndarray, pose: RobotState, goal: np.ndarray, config: LidarConfig
) -> Observation:
    """Encode one scan into the grouped/nearest/goal feature vector."""
    vec = observation_batch(
        np.asarray(ranges, dtype=float)[None, :],
        np.array([[pose.px, pose.py, pose.theta]]),
        np.asarray(goal, dtype=float),
        config,
    )[0]
    k, b = config.group_count, config.nearest_count
    return Observation(
        grouped_ranges=vec[:k],
        nearest_dists=vec[k : k + b],
        nearest_angles=vec[k + b : k + 2 * b],
        goal_angle=float(vec[-1]),
    )


def observation_batch(
    ranges: np.ndarray, poses: np.ndarray, goal: np.ndarray, config: LidarConfig
) -> np.ndarray:
    """Vectorized observation encoding. ranges: (N, G); poses: (N, 3).

    Returns (N, K + 2b + 1) feature matrix in the order: grouped ranges,
    nearest distances ascending, their robot-frame beam angles, goal bearing.
    Nearest descriptors come from raw beams; ties break toward the lower
    beam index (argsort stability).
    """
    ranges = np.asarray(ranges, dtype=float)
    poses = np.asarray(poses, dtype=float).reshape(-1, 3)
    n = ranges.shape[0]
    if ranges.shape[1] != config.beam_count:
        raise ValueError(f"expected {config.beam_count} ranges, got {ranges.shape[1]}")
    k, g, b = config.group_count, config.group_size, config.nearest_count

    grouped = ranges.reshape(n, k, g).min(axis=2)

    if _HAVE_NUMBA:
        # partial selection with ties to the lower beam index; matches the
        # first b columns of a stable argsort
        order = _nearest_beams_jit(np.ascontiguousarray(ranges), b)
    else:
        order = np.argsort(ranges, axis=1, kind="stable")[:, :b]
    nearest = np.take_along_axis(ranges, order, axis=1)
    beam_angles = wrap_angle_array(order * config.beam_spacing)

    delta = goal[None, :] - poses[:, 0:2]
    goal_angle = wrap_angle_array(np.arctan2(delta[:, 1], delta[:, 0]) - poses[:, 2])

    return np.concatenate([grouped, nearest, beam_angles, goal_angle[:, None]], axis=1)
