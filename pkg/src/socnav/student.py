"""Distilled student policies: a mixture-density network and an MLP baseline,
trained to imitate the teacher via dataset aggregation.

The MDN maps the 29-dim observation to a 10-component diagonal Gaussian
mixture over (v, omega) and yields a closed-form split of predictive variance
into aleatoric (mean component variance) and epistemic (component
disagreement) parts via the law of total variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .scenario import EpisodeConfig, ScenarioInstance, build_scenario, run_episode
from .social_force import SfmParams
from .world import LidarConfig, VelocityCommand, WorldSnapshot

ACTION_DIM = 2
V_LIMITS = (0.0, 0.8)
OMEGA_LIMIT = 0.4 * math.pi

# All student models run in float64: cheap at this scale and it keeps the
# finite-difference gradient checks clean.
torch.set_default_dtype(torch.float64)


@dataclass(frozen=True)
class MdnArchitecture:
    input_dim: int = 29
    hidden: int = 128
    components: int = 10
    dropout: float = 0.1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 1e-3
    epochs: int = 50
    seed: int = 0


@dataclass(frozen=True)
class DaggerSchedule:
    initial_episodes: int = 50
    rounds: int = 10
    episodes_per_round: int = 50


@dataclass
class MixtureParams:
    """Per-observation mixture head output (numpy views)."""

    weights: np.ndarray  # (K,)
    means: np.ndarray  # (K, 2)
    variances: np.ndarray  # (K, 2)


@dataclass
class UncertaintyEstimate:
    """Per-action-dimension variance split; alea + epis is the total
    predictive variance."""

    sigma_alea: np.ndarray
    sigma_epis: np.ndarray


def _trunk(arch: MdnArchitecture) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(arch.input_dim, arch.hidden),
        nn.ReLU(),
        nn.Dropout(arch.dropout),
        nn.Linear(arch.hidden, arch.hidden),
        nn.ReLU(),
        nn.Dropout(arch.dropout),
    )


class MdnPolicy(nn.Module):
    """Mixture-density student. Observations are standardized with statistics
    frozen into the model; variances are exp(log-scale) floored at 1e-6."""

    VAR_FLOOR = 1e-6

    def __init__(self, arch: MdnArchitecture = MdnArchitecture(), seed: int = 0):
        super().__init__()
        self.arch = arch
        torch.manual_seed(seed)
        self.trunk = _trunk(arch)
        self.logit_head = nn.Linear(arch.hidden, arch.components)
        self.mean_head = nn.Linear(arch.hidden, arch.components * ACTION_DIM)
        self.log_var_head = nn.Linear(arch.hidden, arch.components * ACTION_DIM)
        # Near-uniform initial mixture weights: shrink the logit head.
        with torch.no_grad():
            self.logit_head.weight.mul_(0.01)
            self.logit_head.bias.zero_()
        self.register_buffer("norm_mean", torch.zeros(arch.input_dim))
        self.register_buffer("norm_scale", torch.ones(arch.input_dim))

    def set_normalization(self, mean: np.ndarray, scale: np.ndarray) -> None:
        self.norm_mean.copy_(torch.as_tensor(mean))
        self.norm_scale.copy_(torch.as_tensor(np.maximum(scale, 1e-8)))

    def forward(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (log_weights (N,K), means (N,K,2), variances (N,K,2))."""
        x = (obs - self.norm_mean) / self.norm_scale
        h = self.trunk(x)
        log_w = torch.log_softmax(self.logit_head(h), dim=-1)
        k = self.arch.components
        means = self.mean_head(h).view(-1, k, ACTION_DIM)
        variances = torch.exp(self.log_var_head(h)).view(-1, k, ACTION_DIM) + self.VAR_FLOOR
        return log_w, means, variances


class MlpPolicy(nn.Module):
    """Deterministic baseline: same trunk, direct 2-dim command head."""

    def __init__(self, arch: MdnArchitecture = MdnArchitecture(), seed: int = 0):
        super().__init__()
        self.arch = arch
        torch.manual_seed(seed)
        self.trunk = _trunk(arch)
        self.head = nn.Linear(arch.hidden, ACTION_DIM)
        self.register_buffer("norm_mean", torch.zeros(arch.input_dim))
        self.register_buffer("norm_scale", torch.ones(arch.input_dim))

    def set_normalization(self, mean: np.ndarray, scale: np.ndarray) -> None:
        self.norm_mean.copy_(torch.as_tensor(mean))
        self.norm_scale.copy_(torch.as_tensor(np.maximum(scale, 1e-8)))

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        x = (obs - self.norm_mean) / self.norm_scale
        return self.head(self.trunk(x))


def mdn_forward(obs: np.ndarray, model: MdnPolicy, mode: str = "eval") -> MixtureParams:
    """Single-observation forward pass. Eval mode disables dropout, so the
    output is a pure function of (weights, obs)."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    model.train(mode == "train")
    with torch.no_grad():
        log_w, means, variances = model(torch.as_tensor(np.asarray(obs, float)).reshape(1, -1))
    if not torch.isfinite(log_w).all():
        raise FloatingPointError("non-finite activations in mixture head")
    model.eval()
    return MixtureParams(
        weights=torch.exp(log_w[0]).numpy(),
        means=means[0].numpy(),
        variances=variances[0].numpy(),
    )


def nll_loss(
    log_w: torch.Tensor, means: torch.Tensor, variances: torch.Tensor, targets: torch.Tensor
) -> torch.Tensor:
    """Mean negative log mixture density with log-sum-exp stabilization.

    targets: (N, 2). Gradients flow to all heads via autograd.
    """
    diff = targets.unsqueeze(1) - means  # (N, K, 2)
    log_comp = -0.5 * (
        torch.sum(diff * diff / variances + torch.log(variances), dim=-1)
        + ACTION_DIM * math.log(2.0 * math.pi)
    )
    return -torch.logsumexp(log_w + log_comp, dim=-1).mean()


def clamp_command(v: float, omega: float) -> VelocityCommand:
    return VelocityCommand(
        float(np.clip(v, V_LIMITS[0], V_LIMITS[1])),
        float(np.clip(omega, -OMEGA_LIMIT, OMEGA_LIMIT)),
    )


def act(obs: np.ndarray, model: nn.Module) -> VelocityCommand:
    """Deployment rule: the MDN emits its top-weight component mean (no
    cross-mode averaging); the MLP its direct output. Both are clamped to
    the candidate-set envelope."""
    model.eval()
    with torch.no_grad():
        if isinstance(model, MdnPolicy):
            log_w, means, _ = model(torch.as_tensor(np.asarray(obs, float)).reshape(1, -1))
            best = int(torch.argmax(log_w[0]))
            cmd = means[0, best].numpy()
        else:
            cmd = model(torch.as_tensor(np.asarray(obs, float)).reshape(1, -1))[0].numpy()
    return clamp_command(cmd[0], cmd[1])


def decompose_uncertainty(params: MixtureParams) -> UncertaintyEstimate:
    """Law-of-total-variance split, per action dimension."""
    w = params.weights[:, None]
    mean = (w * params.means).sum(axis=0)
    alea = (w * params.variances).sum(axis=0)
    epis = (w * (params.means - mean) ** 2).sum(axis=0)
    return UncertaintyEstimate(sigma_alea=alea, sigma_epis=epis)


class StudentController:
    """Adapter exposing the episode-loop policy interface."""

    def __init__(self, model: nn.Module):
        self.model = model

    def reset(self) -> None:
        pass

    def act(self, obs_vector: np.ndarray, world: WorldSnapshot) -> VelocityCommand:
        return act(obs_vector, self.model)


def train_model(
    model: nn.Module,
    observations: np.ndarray,
    actions: np.ndarray,
    config: TrainConfig,
) -> list[float]:
    """Adam training loop; returns per-epoch mean losses. The MDN minimizes
    mixture NLL, the MLP squared error."""
    obs_t = torch.as_tensor(np.asarray(observations, float))
    act_t = torch.as_tensor(np.asarray(actions, float))
    n = obs_t.shape[0]
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(config.seed)
    losses = []
    model.train()
    for _ in range(config.epochs):
        perm = torch.randperm(n, generator=generator)
        epoch_loss, batches = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            optimizer.zero_grad()
            if isinstance(model, MdnPolicy):
                log_w, means, variances = model(obs_t[idx])
                loss = nll_loss(log_w, means, variances, act_t[idx])
            else:
                loss = torch.mean((model(obs_t[idx]) - act_t[idx]) ** 2)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at batch starting {start}")
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach())
            batches += 1
        losses.append(epoch_loss / max(batches, 1))
    model.eval()
    return losses


@dataclass
class DaggerResult:
    model: nn.Module
    observations: np.ndarray
    actions: np.ndarray
    round_sizes: list[int]
    training_log: list[dict]


def run_dagger(
    teacher,
    variant: str,
    schedule: DaggerSchedule = DaggerSchedule(),
    train_config: TrainConfig = TrainConfig(),
    arch: MdnArchitecture = MdnArchitecture(),
    model_kind: str = "mdn",
    episode_config: EpisodeConfig = EpisodeConfig(),
    sfm: SfmParams = SfmParams(),
    lidar: LidarConfig = LidarConfig(),
    seed_base: int = 7_000_000,
    progress=None,
) -> DaggerResult:
    """Dataset-aggregation distillation.

    Round 0 runs teacher-driven episodes; later rounds run the student and
    label every visited observation with the teacher's raw (pre-EMA) argmax
    command. The model is warm-started across rounds. Fully seeded.
    """
    if model_kind not in ("mdn", "mlp"):
        raise ValueError("model_kind must be 'mdn' or 'mlp'")
    all_obs: list[np.ndarray] = []
    all_act: list[np.ndarray] = []
    round_sizes: list[int] = []
    training_log: list[dict] = []

    # Round 0: teacher executes; its own raw argmax is the label.
    episode_idx = 0
    for _ in range(schedule.initial_episodes):
        scenario = build_scenario(variant, seed_base + episode_idx)
        episode_idx += 1
        record, result = run_episode(teacher, scenario, episode_config, sfm, lidar, source="teacher")
        if result.termination == "policy_error":
            raise RuntimeError(f"teacher failed in round 0, episode {episode_idx}")
        teacher.reset()
        teacher.d_total = float(np.linalg.norm(scenario.robot.position - scenario.goal))
        for frame in record.frames:
            world = _frame_world(scenario, frame)
            label = teacher.raw_action(world)
            all_obs.append(frame.observation)
            all_act.append(label.as_array())
    round_sizes.append(len(all_obs))

    norm_mean = np.mean(all_obs, axis=0)
    norm_scale = np.std(all_obs, axis=0)
    model: nn.Module = (
        MdnPolicy(arch, seed=train_config.seed)
        if model_kind == "mdn"
        else MlpPolicy(arch, seed=train_config.seed)
    )
    model.set_normalization(norm_mean, norm_scale)
    losses = train_model(model, np.array(all_obs), np.array(all_act), train_config)
    training_log.append({"round": 0, "dataset": len(all_obs), "final_loss": losses[-1]})
    if progress is not None:
        progress(0, len(all_obs), losses[-1])

    for rnd in range(1, schedule.rounds + 1):
        student = StudentController(model)
        for _ in range(schedule.episodes_per_round):
            scenario = build_scenario(variant, seed_base + episode_idx)
            episode_idx += 1
            record, result = run_episode(
                student, scenario, episode_config, sfm, lidar, source="student"
            )
            if result.termination == "policy_error":
                raise RuntimeError(f"student failed in round {rnd}, episode {episode_idx}")
            teacher.reset()
            teacher.d_total = float(np.linalg.norm(scenario.robot.position - scenario.goal))
            for frame in record.frames:
                world = _frame_world(scenario, frame)
                label = teacher.raw_action(world)
                all_obs.append(frame.observation)
                all_act.append(label.as_array())
        round_sizes.append(len(all_obs))
        losses = train_model(
            model,
            np.array(all_obs),
            np.array(all_act),
            dc_replace_seed(train_config, train_config.seed + rnd),
        )
        training_log.append({"round": rnd, "dataset": len(all_obs), "final_loss": losses[-1]})
        if progress is not None:
            progress(rnd, len(all_obs), losses[-1])

    return DaggerResult(
        model=model,
        observations=np.array(all_obs),
        actions=np.array(all_act),
        round_sizes=round_sizes,
        training_log=training_log,
    )


def dc_replace_seed(config: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        batch_size=config.batch_size,
        learning_rate=config.learning_rate,
        epochs=config.epochs,
        seed=seed,
    )


def _frame_world(scenario: ScenarioInstance, frame) -> WorldSnapshot:
    """Reconstruct the world snapshot a frame was sensed in."""
    from .world import Human, RobotState

    humans = [
        Human(np.array([h[0], h[1]]), np.array([h[2], h[3]]), h[4]) for h in frame.humans
    ]
    return WorldSnapshot(
        scenario.walls,
        humans,
        RobotState(frame.pose[0], frame.pose[1], frame.pose[2]),
        scenario.goal,
    )


def safe_risky_analysis(
    model: MdnPolicy, records: list, threshold: float = 0.8
) -> dict:
    """Partition frames by human-robot clearance and report mean epistemic
    and aleatoric uncertainty per class (scalarized as the mean over the two
    action dimensions). A class with no frames is reported as absent (None).
    """
    per_class: dict[str, list[tuple[float, float]]] = {"safe": [], "risky": []}
    for record in records:
        for frame in record.frames:
            params = mdn_forward(frame.observation, model, mode="eval")
            unc = decompose_uncertainty(params)
            cls = "safe" if frame.clearance > threshold else "risky"
            per_class[cls].append((float(unc.sigma_epis.mean()), float(unc.sigma_alea.mean())))
    out = {}
    for cls, values in per_class.items():
        if not values:
            out[cls] = None
        else:
            arr = np.array(values)
            out[cls] = {
                "n_frames": len(values),
                "epistemic": float(arr[:, 0].mean()),
                "aleatoric": float(arr[:, 1].mean()),
            }
    return out


CHECKPOINT_VERSION = 1


def save_checkpoint(model: nn.Module, path, metadata: dict | None = None) -> None:
    """Versioned checkpoint: architecture, kind, normalization, weights."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": "mdn" if isinstance(model, MdnPolicy) else "mlp",
        "arch": {
            "input_dim": model.arch.input_dim,
            "hidden": model.arch.hidden,
            "components": model.arch.components,
            "dropout": model.arch.dropout,
        },
        "metadata": metadata or {},
        "state_dict": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> nn.Module:
    payload = torch.load(path, weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    arch = MdnArchitecture(**payload["arch"])
    model = MdnPolicy(arch) if payload["kind"] == "mdn" else MlpPolicy(arch)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
