"""Real-time session service: steps the simulator at the control rate,
streams world state over a websocket, accepts teleoperation commands and
episode labels, and writes episode records.

The protocol is JSON WireMessages, type-tagged, each carrying the protocol
version and a session id. The synchronous Session core is network-free; the
websocket layer drives it one tick at a time (wall-paced for human teleop,
unpaced for headless clients) and communicates only via messages.
"""

from __future__ import annotations

import asyncio
import itertools
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import PlainTextResponse

from . import __version__
from .persistence import EpisodeRecord, read_episode, write_episode
from .reward import RewardModel, eval_reward_grid, format_reward_grid
from .scenario import VARIANTS, EpisodeConfig, EpisodeStepper, build_scenario
from .social_force import SfmParams
from .student import (
    MdnPolicy,
    StudentController,
    decompose_uncertainty,
    load_checkpoint,
    mdn_forward,
)
from .teacher import TeacherPolicy
from .world import LidarConfig, VelocityCommand

PROTOCOL_VERSION = 1
MODES = ("teleop", "teacher-drive", "student-drive", "replay")

# Must match the export-reward-map CLI defaults so the overlay grid is
# byte-identical to the exported file.
OVERLAY_BOUNDS = (0.0, 4.0, 0.0, 4.0)
OVERLAY_RESOLUTION = 64


class SessionError(ValueError):
    """Client-visible protocol or state error."""


class Session:
    """One driver, one world. Synchronous tick core used by the network
    layer and directly by tests."""

    def __init__(
        self,
        session_id: str,
        variant: str,
        mode: str,
        seed: int,
        episode_config: EpisodeConfig = EpisodeConfig(),
        sfm: SfmParams = SfmParams(),
        lidar: LidarConfig = LidarConfig(),
        policy=None,
        replay_record: EpisodeRecord | None = None,
        config_hash: str = "",
    ):
        if mode not in MODES:
            raise SessionError(f"unknown mode {mode!r}")
        if mode in ("teacher-drive", "student-drive") and policy is None:
            raise SessionError(f"{mode} needs a policy loaded on the server")
        if mode == "replay" and replay_record is None:
            raise SessionError("replay needs a record")
        self.session_id = session_id
        self.variant = variant
        self.mode = mode
        self.seed = seed
        self.config_hash = config_hash
        self.policy = policy
        self.replay_record = replay_record
        self._replay_cursor = 0
        self.latched = VelocityCommand(0.0, 0.0)
        self.labeled = False
        if mode == "replay":
            self.stepper = None
        else:
            scenario = build_scenario(variant, seed)
            self.stepper = EpisodeStepper(scenario, episode_config, sfm, lidar)
            if policy is not None:
                policy.reset()

    @property
    def done(self) -> bool:
        if self.mode == "replay":
            return self._replay_cursor >= len(self.replay_record.frames)
        return self.stepper.done

    def set_command(self, v: float, omega: float) -> None:
        self.latched = VelocityCommand(float(v), float(omega))

    def _base(self, msg_type: str) -> dict:
        return {"type": msg_type, "v": PROTOCOL_VERSION, "session": self.session_id}

    def _state_message(self, obs, world, cmd, uncertainty=None) -> dict:
        stepper = self.stepper
        robot = world.robot
        msg = self._base("state")
        msg.update(
            {
                "tick": stepper.tick,
                "t": stepper.t,
                "mode": self.mode,
                "robot": [robot.px, robot.py, robot.theta],
                "humans": [
                    [h.position[0], h.position[1], h.velocity[0], h.velocity[1], h.radius]
                    for h in world.humans
                ],
                "goal": [float(world.goal[0]), float(world.goal[1])],
                "ranges": [float(r) for r in stepper.last_ranges],
                "clearance": stepper.current_clearance(),
                "command": [cmd.v, cmd.omega],
            }
        )
        if uncertainty is not None:
            msg["uncertainty"] = {
                "epistemic": [float(v) for v in uncertainty.sigma_epis],
                "aleatoric": [float(v) for v in uncertainty.sigma_alea],
            }
        return msg

    def tick(self) -> list[dict]:
        """Advance one control period; returns the messages to stream."""
        if self.done:
            raise SessionError("episode over; label it or start a new one")
        if self.mode == "replay":
            frame = self.replay_record.frames[self._replay_cursor]
            self._replay_cursor += 1
            msg = self._base("state")
            msg.update(
                {
                    "tick": self._replay_cursor - 1,
                    "t": frame.t,
                    "mode": "replay",
                    "robot": list(frame.pose),
                    "humans": [list(h) for h in frame.humans],
                    "goal": None,
                    "ranges": None,
                    "clearance": frame.clearance,
                    "command": list(frame.command),
                }
            )
            out = [msg]
            if self.done:
                end = self._base("episode_end")
                end["result"] = self.replay_record.result
                out.append(end)
            return out

        obs, world = self.stepper.sense()
        uncertainty = None
        if self.mode == "teleop":
            cmd = self.latched
        else:
            cmd = self.policy.act(obs, world)
            if self.mode == "student-drive" and isinstance(self.policy, StudentController):
                model = self.policy.model
                if isinstance(model, MdnPolicy):
                    uncertainty = decompose_uncertainty(mdn_forward(obs, model))
        state = self._state_message(obs, world, cmd, uncertainty)
        termination = self.stepper.apply(obs, cmd)
        out = [state]
        if termination is not None:
            end = self._base("episode_end")
            end["result"] = self.stepper.record().result
            out.append(end)
        return out

    def finish(self, label: int, source: str, records_dir) -> Path | None:
        """Persist the recording buffer with a fidelity label; 0 = unlabeled
        flush. Returns the written path (None for replay or empty buffers)."""
        if self.mode == "replay" or self.stepper is None or not self.stepper.frames:
            return None
        record = self.stepper.record(source=source, config_hash=self.config_hash)
        record.label = label
        records_dir = Path(records_dir)
        records_dir.mkdir(parents=True, exist_ok=True)
        kind = {1: "pos", -1: "neg", 0: "unlabeled"}[label]
        path = records_dir / f"{self.session_id}-{self.variant}-{self.seed}-{kind}.jsonl"
        write_episode(record, path)
        self.labeled = True
        return path


class ServiceState:
    """Sessions and the artifacts shared across them."""

    def __init__(
        self,
        config: dict,
        cfg_hash: str,
        reward_model: RewardModel | None = None,
        student_checkpoint=None,
    ):
        self.config = config
        self.cfg_hash = cfg_hash
        self.reward_model = reward_model
        self.student_checkpoint = student_checkpoint
        self.sessions: dict[str, Session] = {}
        self._counter = itertools.count(1)
        self.episode_config = EpisodeConfig(**config["episode"])
        self.sfm = SfmParams(**config["sfm"])
        self.lidar = LidarConfig(**config["lidar"])
        self.records_dir = Path(config["service"]["records_dir"])
        self.grace_s = float(config["service"]["disconnect_grace_s"])

    def new_session_id(self) -> str:
        return f"s{next(self._counter):04d}"

    def make_policy(self, mode: str):
        if mode == "teacher-drive":
            t = self.config["teacher"]
            from .teacher import RolloutConfig

            return TeacherPolicy(
                reward_model=self.reward_model,
                rollout_config=RolloutConfig(
                    horizon=t["horizon"], dt=t["dt"], human_prediction=t["human_prediction"]
                ),
                lidar=self.lidar,
                ema=t["ema"],
                sfm=self.sfm,
            )
        if mode == "student-drive":
            if self.student_checkpoint is None:
                raise SessionError("no student checkpoint loaded")
            return StudentController(load_checkpoint(self.student_checkpoint))
        return None

    def start_session(self, message: dict) -> Session:
        mode = message.get("mode", "teleop")
        seed = int(message.get("seed", 0))
        replay_record = None
        variant = message.get("variant", "HR-RL")
        if mode == "replay":
            name = message.get("record")
            if not name or "/" in str(name) or str(name).startswith("."):
                raise SessionError("replay needs a record file name inside the records dir")
            replay_record = read_episode(self.records_dir / name)
            variant = replay_record.variant
        elif variant not in VARIANTS:
            raise SessionError(f"unknown variant {variant!r}")
        session = Session(
            self.new_session_id(),
            variant,
            mode,
            seed,
            episode_config=self.episode_config,
            sfm=self.sfm,
            lidar=self.lidar,
            policy=self.make_policy(mode),
            replay_record=replay_record,
            config_hash=self.cfg_hash,
        )
        self.sessions[session.session_id] = session
        return session

    def close_session(self, session: Session, flush: bool) -> None:
        if flush and session.mode != "replay" and not session.labeled and session.stepper.frames:
            session.finish(0, source=_source_for(session.mode), records_dir=self.records_dir)
        self.sessions.pop(session.session_id, None)

    def overlay_text(self, gamma: float = 1.0) -> str:
        if self.reward_model is None:
            raise SessionError("no reward model loaded")
        model = self.reward_model
        fixed = np.zeros(model.dim - 2) if model.dim > 2 else None
        grid = eval_reward_grid(
            model, OVERLAY_BOUNDS, OVERLAY_RESOLUTION, fixed=fixed, query_gamma=gamma
        )
        return format_reward_grid(grid)


def _source_for(mode: str) -> str:
    return {"teleop": "teleop", "teacher-drive": "teacher", "student-drive": "student"}.get(
        mode, "teleop"
    )


def _error(message: str, session_id: str | None = None) -> dict:
    return {
        "type": "error",
        "v": PROTOCOL_VERSION,
        "session": session_id,
        "message": message,
    }


def create_app(
    config: dict,
    cfg_hash: str,
    reward_model: RewardModel | None = None,
    student_checkpoint=None,
    ui_dir=None,
):
    app = FastAPI(title="socnav session service", version=__version__)
    state = ServiceState(config, cfg_hash, reward_model, student_checkpoint)
    app.state.socnav = state

    @app.get("/health")
    def health():
        return {
            "version": __version__,
            "protocol": PROTOCOL_VERSION,
            "config": cfg_hash,
            "sessions": len(state.sessions),
        }

    @app.get("/reward-map", response_class=PlainTextResponse)
    def reward_map(gamma: float = 1.0):
        try:
            return state.overlay_text(gamma)
        except SessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    ui_path = Path(ui_dir) if ui_dir else Path(__file__).parent / "ui"
    if ui_path.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_path, html=True), name="ui")

    @app.websocket("/ws")
    async def ws_endpoint(ws: WebSocket):
        await ws.accept()
        session: Session | None = None
        run_task: asyncio.Task | None = None

        async def run_loop(sess: Session, paced: bool):
            period = 1.0 / sess.stepper.config.control_rate if sess.stepper else 0.1
            start = time.monotonic()
            n = 0
            while not sess.done:
                for msg in sess.tick():
                    await ws.send_json(msg)
                n += 1
                if paced:
                    target = start + n * period
                    delay = target - time.monotonic()
                    if delay > 0:
                        await asyncio.sleep(delay)
                else:
                    await asyncio.sleep(0)

        try:
            while True:
                message = await ws.receive_json()
                mtype = message.get("type")
                if message.get("v") != PROTOCOL_VERSION:
                    await ws.send_json(_error(f"unsupported protocol version {message.get('v')}"))
                    continue
                if mtype == "start_episode":
                    requested = message.get("session")
                    if requested and requested in state.sessions:
                        await ws.send_json(
                            _error(f"session {requested} already has a driver", requested)
                        )
                        continue
                    if run_task is not None and not run_task.done():
                        await ws.send_json(_error("session already running", session.session_id))
                        continue
                    try:
                        session = state.start_session(message)
                    except (SessionError, ValueError, OSError) as exc:
                        await ws.send_json(_error(str(exc)))
                        continue
                    await ws.send_json(
                        {
                            "type": "episode_started",
                            "v": PROTOCOL_VERSION,
                            "session": session.session_id,
                            "variant": session.variant,
                            "mode": session.mode,
                            "seed": session.seed,
                        }
                    )
                    run_task = asyncio.create_task(
                        run_loop(session, bool(message.get("paced", True)))
                    )
                elif mtype == "command":
                    if session is None or session.mode != "teleop":
                        await ws.send_json(_error("no teleop session to command"))
                        continue
                    session.set_command(message.get("v_lin", 0.0), message.get("omega", 0.0))
                elif mtype == "label":
                    if session is None or not session.done:
                        await ws.send_json(_error("no finished episode to label"))
                        continue
                    value = message.get("value")
                    if value == "discard":
                        state.close_session(session, flush=False)
                        await ws.send_json(
                            {
                                "type": "label_ack",
                                "v": PROTOCOL_VERSION,
                                "session": session.session_id,
                                "path": None,
                            }
                        )
                        session = None
                        continue
                    if value not in (1, -1):
                        await ws.send_json(_error("label must be 1, -1, or 'discard'"))
                        continue
                    path = session.finish(
                        int(value), _source_for(session.mode), state.records_dir
                    )
                    await ws.send_json(
                        {
                            "type": "label_ack",
                            "v": PROTOCOL_VERSION,
                            "session": session.session_id,
                            "path": str(path) if path else None,
                        }
                    )
                    state.close_session(session, flush=False)
                    session = None
                elif mtype == "overlay_request":
                    try:
                        grid = state.overlay_text(float(message.get("gamma", 1.0)))
                    except SessionError as exc:
                        await ws.send_json(_error(str(exc)))
                        continue
                    await ws.send_json(
                        {
                            "type": "overlay",
                            "v": PROTOCOL_VERSION,
                            "session": session.session_id if session else None,
                            "grid": grid,
                        }
                    )
                else:
                    await ws.send_json(_error(f"unknown message type {mtype!r}"))
        except WebSocketDisconnect:
            pass
        finally:
            if run_task is not None:
                run_task.cancel()
            if session is not None:
                # grace window before the session closes and unlabeled data
                # is flushed
                await asyncio.sleep(state.grace_s)
                state.close_session(session, flush=True)

    return app


def serve(
    config: dict,
    cfg_hash: str,
    host: str,
    port: int,
    reward_model: RewardModel | None = None,
    student_checkpoint=None,
) -> None:
    import uvicorn

    app = create_app(config, cfg_hash, reward_model, student_checkpoint)
    uvicorn.run(app, host=host, port=port)
