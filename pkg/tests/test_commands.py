#!/usr/bin/env python3
"""
init_robust CLI コマンドのテスト
"""

import csv

import numpy as np
import pytest

from init_robust import cli
from init_robust.attacks import AttackConfig, AttackKind, NormScope
from init_robust.checkpoint import load_model
from init_robust.config import save_config
from init_robust.graph import gen_blobs
from init_robust.metrics import empirical_risk_samples

from test_helpers import small_config_dict


@pytest.fixture
def config_file(isolated_env):
    """小さな実験設定を config.toml に保存"""
    return save_config(small_config_dict(experiment={"repeats": 2, "base_seed": 0, "output_dir": "out"}))


@pytest.fixture
def trained(runner, config_file, isolated_env):
    """train を一度実行した出力ディレクトリ"""
    result = runner.invoke(cli, ["--config", str(config_file), "train"])
    assert result.exit_code == 0, result.output
    return isolated_env / "out"


class TestMainCLI:
    """メインCLIのテスト"""

    def test_cli_help(self, runner):
        """ヘルプメッセージの表示"""
        result = runner.invoke(cli, ["--help"])
        assert result.exit_code == 0
        assert "敵対的ロバスト性" in result.output
        for name in ("train", "attack", "bound", "run", "sweep", "plot"):
            assert name in result.output

    @pytest.mark.parametrize("name", ["train", "attack", "bound", "run", "sweep", "plot"])
    def test_command_help(self, runner, name):
        """個別コマンドのヘルプ"""
        result = runner.invoke(cli, [name, "--help"])
        assert result.exit_code == 0
        assert "Usage:" in result.output


class TestTrainCommand:
    """train コマンド"""

    def test_writes_checkpoint(self, trained):
        assert (trained / "model.npz").exists()
        assert (trained / "trajectory.npz").exists()
        assert (trained / "config.toml").exists()

    def test_output(self, runner, config_file):
        result = runner.invoke(cli, ["--config", str(config_file), "train"])
        assert "学習完了: epochs=4" in result.output
        assert "gcn_feature" in result.output

    def test_env_override(self, runner, config_file):
        result = runner.invoke(cli, ["train"], env={"INIT_ROBUST_TRAIN__EPOCHS": "2"})
        assert result.exit_code == 0, result.output
        assert "epochs=2" in result.output

    def test_out_option(self, runner, config_file, isolated_env):
        result = runner.invoke(cli, ["--config", str(config_file), "--out", "elsewhere", "train"])
        assert result.exit_code == 0, result.output
        assert (isolated_env / "elsewhere" / "model.npz").exists()

    def test_config_error_exits_1(self, runner, isolated_env):
        path = save_config({"model": {"arch": "transformer"}}, isolated_env / "bad.toml")
        result = runner.invoke(cli, ["--config", str(path), "train"])
        assert result.exit_code == 1
        assert "設定エラー" in result.output

    def test_broken_toml_exits_1(self, runner, isolated_env):
        path = isolated_env / "broken.toml"
        path.write_text("[model\n")
        result = runner.invoke(cli, ["--config", str(path), "train"])
        assert result.exit_code == 1


class TestBoundCommand:
    """bound コマンド"""

    def test_appends_rows(self, runner, config_file, trained):
        args = ["--config", str(config_file), "bound", "--trajectory", str(trained / "trajectory.npz"), "--epsilon", "0.1"]
        assert runner.invoke(cli, args).exit_code == 0
        assert runner.invoke(cli, args + ["--variant", "pow2"]).exit_code == 0
        with open(trained / "bounds.csv", newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
        pow2 = [row for row in rows if row["variant"] == "pow2"]
        assert {row["theorem_id"] for row in pow2} >= {"gcn_feature", "gcn_structure"}
        # 2回目は pow2 のみ
        assert len(pow2) > len(rows) - len(pow2)

    def test_bad_trajectory_exits_2(self, runner, config_file, isolated_env):
        path = isolated_env / "bad.npz"
        np.savez(path, format_version=np.array(0))
        result = runner.invoke(cli, ["--config", str(config_file), "bound", "--trajectory", str(path), "--epsilon", "0.1"])
        assert result.exit_code == 2
        assert "エラー" in result.output


class TestAttackCommand:
    """attack コマンド"""

    def test_feature_attack(self, runner, config_file, trained):
        result = runner.invoke(
            cli,
            ["--config", str(config_file), "attack", "--checkpoint", str(trained / "model.npz"),
             "--kind", "feature_pgd", "--budget", "0.1"],
        )
        assert result.exit_code == 0, result.output
        assert "sup_distance" in result.output

    def test_save_graph(self, runner, config_file, trained, isolated_env):
        result = runner.invoke(
            cli,
            ["--config", str(config_file), "attack", "--checkpoint", str(trained / "model.npz"),
             "--kind", "dice", "--budget", "0.2", "--save-graph", "attacked"],
        )
        assert result.exit_code == 0, result.output
        assert (isolated_env / "attacked" / "edges.tsv").exists()
        assert "検証エラー" not in result.output


    def test_mlp_reports_per_sample_mean(self, runner, isolated_env):
        """MLP ではサンプル毎の sup の平均を sup_distance として表示"""
        config_file = save_config(
            small_config_dict(
                dataset={"source": "blobs", "num_samples": 30, "classes": 3},
                model={"arch": "mlp"},
                attack={"kinds": ["feature_pgd"]},
                experiment={"repeats": 1, "base_seed": 0, "output_dir": "out"},
            )
        )
        assert runner.invoke(cli, ["--config", str(config_file), "train"]).exit_code == 0
        checkpoint = isolated_env / "out" / "model.npz"
        result = runner.invoke(
            cli,
            ["--config", str(config_file), "attack", "--checkpoint", str(checkpoint),
             "--kind", "feature_pgd", "--budget", "0.1"],
        )
        assert result.exit_code == 0, result.output

        graph = gen_blobs(30, 3, 4, seed=0)
        attack_cfg = AttackConfig(AttackKind.FEATURE_PGD, 0.1, steps=3, step_size=0.1, norm_scope=NormScope.PER_ROW)
        expected = empirical_risk_samples(load_model(checkpoint), graph, attack_cfg)
        assert repr(expected) in result.output
    def test_unknown_kind(self, runner, config_file, trained):
        result = runner.invoke(
            cli,
            ["--config", str(config_file), "attack", "--checkpoint", str(trained / "model.npz"),
             "--kind", "nettack", "--budget", "0.1"],
        )
        assert result.exit_code == 2
        assert "Invalid value" in result.output


class TestRunAndSweep:
    """run / sweep / plot コマンド"""

    def test_run(self, runner, config_file, isolated_env):
        result = runner.invoke(cli, ["--config", str(config_file), "run"])
        assert result.exit_code == 0, result.output
        assert "8 レコードを書き出しました" in result.output
        assert (isolated_env / "out" / "records.csv").exists()
        assert (isolated_env / "out" / "timings.csv").exists()

    def test_run_is_reproducible(self, runner, config_file, isolated_env):
        outputs = []
        for out in ("a", "b"):
            assert runner.invoke(cli, ["--config", str(config_file), "--out", out, "run"]).exit_code == 0
            outputs.append((isolated_env / out / "records.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_sweep(self, runner, config_file, isolated_env):
        result = runner.invoke(cli, ["--config", str(config_file), "sweep", "--axis", "sigma", "--values", "0.5,1.0"])
        assert result.exit_code == 0, result.output
        assert "2値 × 2回: 16 レコード" in result.output

    def test_sweep_empty_values(self, runner, config_file, isolated_env):
        result = runner.invoke(cli, ["--config", str(config_file), "sweep", "--axis", "sigma", "--values", ""])
        assert result.exit_code == 0
        assert "値が指定されていないため、実行するセルはありません。" in result.output
        assert not (isolated_env / "out" / "records.csv").exists()

    def test_sweep_bad_values(self, runner, config_file):
        result = runner.invoke(cli, ["--config", str(config_file), "sweep", "--axis", "sigma", "--values", "a,b"])
        assert result.exit_code == 2

    def test_sweep_axis_mismatch_exits_1(self, runner, config_file):
        """gaussian 初期化に beta スイープは設定エラー"""
        result = runner.invoke(cli, ["--config", str(config_file), "sweep", "--axis", "beta", "--values", "1.0"])
        assert result.exit_code == 1

    def test_plot(self, runner, config_file, isolated_env):
        assert runner.invoke(cli, ["--config", str(config_file), "run"]).exit_code == 0
        result = runner.invoke(cli, ["plot", "out/records.csv", "--out-dir", "charts"])
        assert result.exit_code == 0, result.output
        assert (isolated_env / "charts" / "accuracy_vs_epoch.svg").exists()

    def test_plot_missing_file_exits_2(self, runner, isolated_env):
        result = runner.invoke(cli, ["plot", "missing.csv"])
        assert result.exit_code == 2
