import subprocess
import sys

import numpy as np
import pytest

from socnav.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from socnav.demos import generate_corridor_demos, write_demo_dir
from socnav.persistence import read_episode
from socnav.reward import load_reward_model, read_reward_grid
from socnav.student import MdnPolicy, save_checkpoint


@pytest.fixture(scope="module")
def corridor_demo_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("demos")
    records = generate_corridor_demos(n_right=2, n_left=1, n_negative=2, seed=0)
    write_demo_dir(records, path)
    return path


@pytest.fixture(scope="module")
def corridor_model(tmp_path_factory, corridor_demo_dir):
    out = tmp_path_factory.mktemp("model") / "model.npz"
    code = main(
        [
            "fit-reward",
            "--demos", str(corridor_demo_dir),
            "--space", "position-2d",
            "--length-scale-sq", "0.05",
            "--out", str(out),
        ]
    )
    assert code == EXIT_OK
    return out


class TestDispatch:
    def test_unknown_flag_is_usage_error(self):
        assert main(["--frobnicate"]) == EXIT_USAGE

    def test_unknown_subcommand_is_usage_error(self):
        assert main(["launch"]) == EXIT_USAGE

    def test_missing_required_flag(self):
        assert main(["export-reward-map"]) == EXIT_USAGE

    def test_missing_model_file_is_data_error(self, tmp_path):
        code = main(
            ["export-reward-map", "--model", str(tmp_path / "no.npz"),
             "--out", str(tmp_path / "g.tsv")]
        )
        assert code == EXIT_DATA

    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "socnav.cli", "--version"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "socnav" in proc.stdout


class TestFitReward:
    def test_model_round_trips(self, corridor_model):
        model = load_reward_model(corridor_model)
        assert model.dim == 2
        assert model.length_scale_sq == 0.05

    def test_empty_dir_is_data_error(self, tmp_path):
        assert main(["fit-reward", "--demos", str(tmp_path), "--out", str(tmp_path / "m.npz")]) == EXIT_DATA


class TestExportRewardMap:
    def test_emits_grid_and_figure(self, corridor_model, tmp_path):
        out = tmp_path / "map.tsv"
        code = main(
            ["export-reward-map", "--model", str(corridor_model),
             "--resolution", "16", "--out", str(out)]
        )
        assert code == EXIT_OK
        grid = read_reward_grid(out)
        assert grid.values.shape == (16, 16)
        assert out.with_suffix(".png").exists()


class TestRunTeacher:
    def test_rules_only_episode(self, tmp_path):
        out = tmp_path / "ep.jsonl"
        code = main(["run-teacher", "--variant", "HR-RL", "--seed", "1", "--out", str(out)])
        assert code == EXIT_OK
        record = read_episode(out)
        assert record.variant == "HR-RL"
        assert record.source == "teacher"
        assert len(record.frames) > 0


class TestEvaluate:
    def test_stop_policy_reports_zero_sr(self, tmp_path):
        out = tmp_path / "report.tsv"
        code = main(
            ["evaluate", "--policy", "stop", "--variants", "HR-RL",
             "--n-seeds", "1", "--n-trials", "2", "--workers", "1",
             "--out", str(out)]
        )
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# socnav evaluate config=")
        rows = [line.split("\t") for line in lines[2:]]
        overall = [r for r in rows if r[1] == "all"][0]
        assert float(overall[2]) == 0.0
        assert out.with_suffix(".png").exists()

    def test_teacher_without_model_is_data_error(self, tmp_path):
        code = main(
            ["evaluate", "--policy", "teacher", "--variants", "HR-RL",
             "--n-seeds", "1", "--n-trials", "1", "--workers", "1",
             "--out", str(tmp_path / "r.tsv")]
        )
        assert code == EXIT_DATA


class TestDistill:
    def test_minimal_schedule_writes_checkpoint_and_log(self, corridor_model, tmp_path):
        out = tmp_path / "student.pt"
        code = main(
            ["distill", "--model", str(corridor_model), "--variant", "HR-RL",
             "--kind", "mlp", "--initial-episodes", "1", "--rounds", "0",
             "--epochs", "2", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert out.exists()
        log = out.with_suffix(".log.tsv").read_text().splitlines()
        assert log[1].split("\t") == ["round", "dataset", "final_loss"]
        assert out.with_suffix(".png").exists()


class TestAnalyzeUncertainty:
    def test_generated_episodes(self, tmp_path):
        ckpt = tmp_path / "mdn.pt"
        save_checkpoint(MdnPolicy(seed=0), ckpt)
        out = tmp_path / "unc.tsv"
        code = main(
            ["analyze-uncertainty", "--checkpoint", str(ckpt),
             "--variant", "HR-RL", "--n-episodes", "1", "--out", str(out)]
        )
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[1].split("\t") == ["class", "n_frames", "epistemic", "aleatoric"]
        assert len(lines) == 4
        assert out.with_suffix(".png").exists()


class TestMakeSynthetic:
    def test_corridor_corpus(self, tmp_path):
        code = main(["make-synthetic", "--corpus", "corridor", "--out", str(tmp_path)])
        assert code == EXIT_OK
        files = sorted((tmp_path / "corridor").glob("*.jsonl"))
        assert len(files) == 28
        labels = [read_episode(f).label for f in files[:2]]
        assert labels == [1, 1]


class TestConfigOverride:
    def test_config_hash_changes_with_override(self, tmp_path, corridor_model):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("episode:\n  timeout: 12.5\n")
        out_a = tmp_path / "a.tsv"
        out_b = tmp_path / "b.tsv"
        for config_args, out in (([], out_a), (["--config", str(cfg)], out_b)):
            code = main(
                config_args
                + ["evaluate", "--policy", "stop", "--variants", "HR-RL",
                   "--n-seeds", "1", "--n-trials", "1", "--workers", "1",
                   "--out", str(out)]
            )
            assert code == EXIT_OK
        hash_a = out_a.read_text().splitlines()[0].split("config=")[1].split()[0]
        hash_b = out_b.read_text().splitlines()[0].split("config=")[1].split()[0]
        assert hash_a != hash_b

    def test_bad_config_file_is_data_error(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("- just\n- a list\n")
        code = main(
            ["--config", str(cfg), "evaluate", "--policy", "stop",
             "--variants", "HR-RL", "--n-seeds", "1", "--n-trials", "1",
             "--workers", "1", "--out", str(tmp_path / "r.tsv")]
        )
        assert code == EXIT_DATA
