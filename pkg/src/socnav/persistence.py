"""Episode records, demonstration extraction, and run configuration.

Episodes are line-delimited JSON: one header line, then one line per frame.
Floats serialize via repr, so every finite value round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

EPISODE_MAGIC = "socnav-episode"
EPISODE_VERSION = 1


class ParseError(ValueError):
    """Malformed episode file; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Frame:
    """One 10 Hz tick: time, encoded observation, applied command, robot pose,
    human states (px, py, vx, vy, radius), and min distance from the robot
    body to any human's tracked position at sense time."""

    t: float
    observation: np.ndarray
    command: tuple[float, float]
    pose: tuple[float, float, float]
    humans: list[tuple[float, float, float, float, float]]
    clearance: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "t": self.t,
                "obs": [float(v) for v in self.observation],
                "cmd": [float(self.command[0]), float(self.command[1])],
                "pose": [float(v) for v in self.pose],
                "humans": [[float(v) for v in h] for h in self.humans],
                "clearance": float(self.clearance),
            }
        )

    @classmethod
    def from_dict(cls, d: dict) -> "Frame":
        return cls(
            t=d["t"],
            observation=np.array(d["obs"], dtype=float),
            command=(d["cmd"][0], d["cmd"][1]),
            pose=tuple(d["pose"]),
            humans=[tuple(h) for h in d["humans"]],
            clearance=d["clearance"],
        )


@dataclass
class EpisodeRecord:
    """A recorded episode: scenario identity, fidelity label (+1/-1, 0 when
    unlabeled), who drove, time-ordered frames, and the outcome if the
    episode ran to termination."""

    variant: str
    seed: int
    config_hash: str
    label: int = 0
    source: str = "teleop"
    frames: list[Frame] = field(default_factory=list)
    result: dict | None = None

    def __post_init__(self):
        if self.label not in (-1, 0, 1):
            raise ValueError("label must be +1, -1, or 0 (unlabeled)")

    @property
    def empty(self) -> bool:
        return not self.frames


def write_episode(record: EpisodeRecord, path) -> None:
    header = {
        "format": EPISODE_MAGIC,
        "version": EPISODE_VERSION,
        "variant": record.variant,
        "seed": record.seed,
        "config_hash": record.config_hash,
        "label": record.label,
        "source": record.source,
        "result": record.result,
        "n_frames": len(record.frames),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for frame in record.frames:
            fh.write(frame.to_json() + "\n")


def read_episode(path) -> EpisodeRecord:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty file", 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header: {exc}", 1) from exc
    if header.get("format") != EPISODE_MAGIC:
        raise ParseError("not an episode file", 1)
    if header.get("version") != EPISODE_VERSION:
        raise ParseError(f"unsupported version {header.get('version')}", 1)

    frames = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            frames.append(Frame.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ParseError(
                f"bad frame after {len(frames)} good frame(s): {exc}", i
            ) from exc
    declared = header.get("n_frames")
    if declared is not None and declared != len(frames):
        raise ParseError(
            f"truncated: header declares {declared} frames, "
            f"last good frame is {len(frames)}",
            len(lines),
        )
    record = EpisodeRecord(
        variant=header["variant"],
        seed=header["seed"],
        config_hash=header["config_hash"],
        label=header["label"],
        source=header["source"],
        frames=frames,
        result=header.get("result"),
    )
    ts = [f.t for f in frames]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ParseError("frame times not strictly increasing", len(lines))
    return record


@dataclass
class DemoDataset:
    """Demonstration samples with fidelity labels and provenance back to the
    (episode index, frame index) each sample came from."""

    x: np.ndarray
    gamma: np.ndarray
    provenance: list[tuple[int, int]]
    space: str

    def __len__(self) -> int:
        return self.x.shape[0]


def extract_demos(
    records: list[EpisodeRecord], space: str = "obs-action-31d", stride: int = 2
) -> DemoDataset:
    """Turn labeled episodes into demonstration samples.

    space 'position-2d' emits (px, py); 'obs-action-31d' emits the encoded
    observation concatenated with the applied command. Frames are strided
    (default every 2nd) to decorrelate adjacent 10 Hz samples. Unlabeled
    episodes are skipped with a warning.
    """
    if space not in ("position-2d", "obs-action-31d"):
        raise ValueError(f"unknown demonstration space {space!r}")
    xs, gammas, provenance = [], [], []
    for ei, record in enumerate(records):
        if record.label == 0:
            warnings.warn(f"skipping unlabeled episode #{ei}")
            continue
        for fi in range(0, len(record.frames), stride):
            frame = record.frames[fi]
            if space == "position-2d":
                xs.append([frame.pose[0], frame.pose[1]])
            else:
                xs.append(list(frame.observation) + [frame.command[0], frame.command[1]])
            gammas.append(float(record.label))
            provenance.append((ei, fi))
    x = np.array(xs, dtype=float) if xs else np.zeros((0, 2 if space == "position-2d" else 31))
    return DemoDataset(x=x, gamma=np.array(gammas, dtype=float), provenance=provenance, space=space)


def load_episode_dir(directory) -> list[EpisodeRecord]:
    """All episodes in a directory, sorted by filename for determinism."""
    paths = sorted(Path(directory).glob("*.jsonl"))
    return [read_episode(p) for p in paths]


DEFAULT_CONFIG: dict = {
    "lidar": {"beam_count": 72, "group_size": 3, "nearest_count": 2, "max_range": 10.0},
    "sfm": {
        "relaxation_time": 0.5,
        "agent_repulsion_strength": 2.0,
        "agent_repulsion_range": 0.35,
        "wall_repulsion_strength": 3.0,
        "wall_repulsion_range": 0.2,
        "speed_clamp": 1.3,
        "goal_hold_radius": 0.2,
    },
    "episode": {"control_rate": 10.0, "timeout": 30.0, "robot_radius": 0.3, "goal_radius": 0.3},
    "reward": {
        "output_scale": 1.0,
        "length_scale_sq": None,
        "lam": 1e-2,
        "beta": 1e-3,
        "n_inducing": 256,
        "inducing_seed": 0,
        "demo_stride": 2,
    },
    "teacher": {
        "horizon": 3.0,
        "dt": 0.3,
        "human_prediction": "constant-velocity",
        "ema": 0.5,
        "density_on": True,
        "goal_on": True,
        "obstacle_on": True,
    },
    "student": {
        "hidden": 128,
        "components": 10,
        "dropout": 0.1,
        "batch_size": 256,
        "learning_rate": 1e-3,
        "epochs_per_round": 50,
        "initial_episodes": 50,
        "rounds": 10,
        "episodes_per_round": 50,
    },
    "service": {
        "port": 8008,
        "host": "127.0.0.1",
        "records_dir": "episodes",
        "disconnect_grace_s": 10.0,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Resolved configuration: YAML overrides merged onto the defaults."""
    config = dict(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            override = yaml.safe_load(fh) or {}
        if not isinstance(override, dict):
            raise ValueError("config file must hold a mapping")
        config = _merge(config, override)
    return config


def config_hash(config: dict) -> str:
    """Stable hash of a resolved configuration (sorted-key JSON, sha256)."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]
