import math

import numpy as np
import pytest
import torch

from socnav.persistence import EpisodeRecord, Frame
from socnav.student import (
    MdnArchitecture,
    MdnPolicy,
    MixtureParams,
    MlpPolicy,
    StudentController,
    TrainConfig,
    act,
    clamp_command,
    decompose_uncertainty,
    load_checkpoint,
    mdn_forward,
    nll_loss,
    safe_risky_analysis,
    save_checkpoint,
    train_model,
)

SMALL = MdnArchitecture(input_dim=3, hidden=8, components=2, dropout=0.0)


def toy_dataset(n=512, seed=0, dim=29):
    rng = np.random.default_rng(seed)
    obs = rng.uniform(0, 10, (n, dim))
    actions = np.column_stack(
        [0.4 + 0.3 * np.sin(obs[:, 0]), 0.5 * np.cos(obs[:, 1])]
    )
    return obs, actions


class TestNllLoss:
    def test_single_standard_component_closed_form(self):
        # one component, unit variance, target at the mean: density is the
        # 2D standard normal at 0, so NLL = log(2 pi)
        log_w = torch.zeros(1, 1)
        means = torch.zeros(1, 1, 2)
        variances = torch.ones(1, 1, 2)
        targets = torch.zeros(1, 2)
        loss = nll_loss(log_w, means, variances, targets)
        assert float(loss) == pytest.approx(math.log(2.0 * math.pi))

    def test_two_component_closed_form(self):
        w = torch.log(torch.tensor([[0.25, 0.75]]))
        means = torch.tensor([[[0.0, 0.0], [1.0, 1.0]]])
        variances = torch.full((1, 2, 2), 0.5)
        target = torch.tensor([[0.0, 0.0]])
        norm = 1.0 / (2.0 * math.pi * 0.5)
        density = 0.25 * norm + 0.75 * norm * math.exp(-(1.0 + 1.0) / (2 * 0.5))
        assert float(nll_loss(w, means, variances, target)) == pytest.approx(-math.log(density))

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        model = MdnPolicy(SMALL, seed=1)
        model.eval()
        obs = torch.randn(4, 3)
        targets = torch.randn(4, 2) * 0.1

        def loss_fn():
            log_w, means, variances = model(obs)
            return nll_loss(log_w, means, variances, targets)

        loss = loss_fn()
        loss.backward()
        h = 1e-6
        checked = 0
        for param in model.parameters():
            flat = param.data.view(-1)
            grad = param.grad.view(-1)
            for i in range(0, flat.numel(), max(flat.numel() // 3, 1)):
                orig = float(flat[i])
                flat[i] = orig + h
                up = float(loss_fn().detach())
                flat[i] = orig - h
                down = float(loss_fn().detach())
                flat[i] = orig
                fd = (up - down) / (2 * h)
                assert float(grad[i]) == pytest.approx(fd, abs=1e-6, rel=1e-5)
                checked += 1
        assert checked >= 10


class TestMixture:
    def test_initial_weights_near_uniform(self):
        model = MdnPolicy(seed=0)
        rng = np.random.default_rng(1)
        for _ in range(5):
            params = mdn_forward(rng.uniform(0, 10, 29), model)
            assert np.all(params.weights > 0.05) and np.all(params.weights < 0.15)
            assert params.weights.sum() == pytest.approx(1.0)

    def test_eval_forward_deterministic(self):
        model = MdnPolicy(seed=0)
        obs = np.random.default_rng(2).uniform(0, 10, 29)
        a, b = mdn_forward(obs, model), mdn_forward(obs, model)
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_train_mode_dropout_varies(self):
        model = MdnPolicy(seed=0)
        obs = np.random.default_rng(3).uniform(0, 10, 29)
        torch.manual_seed(0)
        a = mdn_forward(obs, model, mode="train")
        b = mdn_forward(obs, model, mode="train")
        assert not np.array_equal(a.means, b.means)

    def test_nan_observation_raises(self):
        model = MdnPolicy(seed=0)
        obs = np.full(29, np.nan)
        with pytest.raises(FloatingPointError):
            mdn_forward(obs, model)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            mdn_forward(np.zeros(29), MdnPolicy(), mode="sample")


class TestUncertainty:
    def test_single_component_all_aleatoric(self):
        params = MixtureParams(
            weights=np.array([1.0]),
            means=np.array([[0.3, -0.2]]),
            variances=np.array([[0.04, 0.09]]),
        )
        unc = decompose_uncertainty(params)
        np.testing.assert_allclose(unc.sigma_epis, [0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(unc.sigma_alea, [0.04, 0.09])

    def test_symmetric_pair_closed_form(self):
        # equal weights, means +-m, shared variance v: alea = v, epis = m^2
        params = MixtureParams(
            weights=np.array([0.5, 0.5]),
            means=np.array([[0.2, 0.4], [-0.2, -0.4]]),
            variances=np.full((2, 2), 0.01),
        )
        unc = decompose_uncertainty(params)
        np.testing.assert_allclose(unc.sigma_alea, [0.01, 0.01])
        np.testing.assert_allclose(unc.sigma_epis, [0.04, 0.16])

    def test_total_variance_matches_monte_carlo(self):
        params = MixtureParams(
            weights=np.array([0.3, 0.7]),
            means=np.array([[0.1, -0.2], [0.5, 0.4]]),
            variances=np.array([[0.04, 0.09], [0.01, 0.25]]),
        )
        unc = decompose_uncertainty(params)
        rng = np.random.default_rng(4)
        n = 400_000
        comp = rng.choice(2, size=n, p=params.weights)
        samples = params.means[comp] + rng.standard_normal((n, 2)) * np.sqrt(
            params.variances[comp]
        )
        np.testing.assert_allclose(
            unc.sigma_alea + unc.sigma_epis, samples.var(axis=0), rtol=0.02
        )


class TestActing:
    def test_clamp_envelope(self):
        cmd = clamp_command(1.5, -3.0)
        assert cmd.v == 0.8
        assert cmd.omega == pytest.approx(-0.4 * math.pi)
        assert clamp_command(-0.5, 0.0).v == 0.0

    def test_mdn_act_is_top_weight_mean(self):
        model = MdnPolicy(seed=0)
        obs = np.random.default_rng(5).uniform(0, 10, 29)
        params = mdn_forward(obs, model)
        best = int(np.argmax(params.weights))
        expected = clamp_command(params.means[best, 0], params.means[best, 1])
        cmd = act(obs, model)
        assert (cmd.v, cmd.omega) == (expected.v, expected.omega)

    def test_mlp_act_matches_forward(self):
        model = MlpPolicy(seed=0)
        obs = np.random.default_rng(6).uniform(0, 10, 29)
        model.eval()
        with torch.no_grad():
            raw = model(torch.as_tensor(obs).reshape(1, -1))[0].numpy()
        cmd = act(obs, model)
        expected = clamp_command(raw[0], raw[1])
        assert (cmd.v, cmd.omega) == (expected.v, expected.omega)

    def test_controller_always_within_limits(self):
        controller = StudentController(MdnPolicy(seed=3))
        controller.reset()
        rng = np.random.default_rng(7)
        for _ in range(20):
            cmd = controller.act(rng.uniform(0, 10, 29), None)
            assert 0.0 <= cmd.v <= 0.8
            assert abs(cmd.omega) <= 0.4 * math.pi


class TestTraining:
    def test_mdn_loss_decreases(self):
        obs, actions = toy_dataset()
        model = MdnPolicy(seed=0)
        model.set_normalization(obs.mean(axis=0), obs.std(axis=0))
        losses = train_model(model, obs, actions, TrainConfig(epochs=15, seed=0))
        assert losses[-1] < losses[0]

    def test_mlp_loss_decreases(self):
        obs, actions = toy_dataset(seed=1)
        model = MlpPolicy(seed=0)
        model.set_normalization(obs.mean(axis=0), obs.std(axis=0))
        losses = train_model(model, obs, actions, TrainConfig(epochs=15, seed=0))
        assert losses[-1] < losses[0]

    def test_training_deterministic(self):
        obs, actions = toy_dataset(n=128)
        runs = []
        for _ in range(2):
            model = MdnPolicy(seed=0)
            model.set_normalization(obs.mean(axis=0), obs.std(axis=0))
            runs.append(train_model(model, obs, actions, TrainConfig(epochs=3, seed=0)))
        assert runs[0] == runs[1]


class TestCheckpoint:
    @pytest.mark.parametrize("kind", ["mdn", "mlp"])
    def test_round_trip(self, tmp_path, kind):
        model = MdnPolicy(seed=0) if kind == "mdn" else MlpPolicy(seed=0)
        obs = np.random.default_rng(8).uniform(0, 10, 29)
        before = act(obs, model)
        path = tmp_path / "model.pt"
        save_checkpoint(model, path, metadata={"note": "test"})
        loaded = load_checkpoint(path)
        assert type(loaded) is type(model)
        after = act(obs, loaded)
        assert (before.v, before.omega) == (after.v, after.omega)


class TestSafeRiskyAnalysis:
    def make_records(self, clearances):
        rng = np.random.default_rng(9)
        frames = [
            Frame(
                t=0.1 * i,
                observation=rng.uniform(0, 10, 29),
                command=(0.5, 0.0),
                pose=(2.0, 1.0, 0.0),
                humans=[],
                clearance=c,
            )
            for i, c in enumerate(clearances)
        ]
        return [EpisodeRecord(variant="HR-RL", seed=0, config_hash="", frames=frames)]

    def test_partition_counts(self):
        model = MdnPolicy(seed=0)
        out = safe_risky_analysis(model, self.make_records([1.2, 0.9, 0.3, 0.1, 2.0]))
        assert out["safe"]["n_frames"] == 3
        assert out["risky"]["n_frames"] == 2
        for cls in ("safe", "risky"):
            assert out[cls]["epistemic"] >= 0.0
            assert out[cls]["aleatoric"] > 0.0

    def test_absent_class_is_none(self):
        model = MdnPolicy(seed=0)
        out = safe_risky_analysis(model, self.make_records([2.0, 1.5]))
        assert out["risky"] is None
        assert out["safe"]["n_frames"] == 2
