"""
pytest設定ファイル
環境変数の隔離と共通フィクスチャ
"""

import logging
import os
import sys
from pathlib import Path
from unittest.mock import patch

import pytest
from click.testing import CliRunner

# プロジェクトのルートディレクトリをパスに追加（一元化）
project_root = Path(__file__).parent.parent
if str(project_root) not in sys.path:
    sys.path.insert(0, str(project_root))

from init_robust.config import ENV_PREFIX  # noqa: E402
from init_robust.graph import gen_sbm  # noqa: E402
from init_robust.initializers import InitScheme  # noqa: E402
from init_robust.nn import Arch, build_model, train_gd  # noqa: E402


# 開発者のシェルに残った INIT_ROBUST_* を持ち込まない
@pytest.fixture(autouse=True)
def clean_env_vars():
    """INIT_ROBUST_ で始まる環境変数を取り除く"""
    cleaned = {key: value for key, value in os.environ.items() if not key.startswith(ENV_PREFIX)}
    with patch.dict(os.environ, cleaned, clear=True):
        yield


# setup_logging がルートロガーに付けたハンドラをテスト毎に外す
@pytest.fixture(autouse=True)
def reset_logging():
    """ルートロガーのハンドラとレベルを復元"""
    root = logging.getLogger()
    handlers = list(root.handlers)
    level = root.level
    yield
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


# Click CLIテスト用のrunnerフィクスチャ
@pytest.fixture
def runner():
    """Click CLI用のテストランナー"""
    return CliRunner()


# 一時的な隔離された環境でテストを実行
@pytest.fixture
def isolated_env(tmp_path):
    """隔離された環境でテストを実行"""
    original_cwd = os.getcwd()
    os.chdir(tmp_path)
    yield tmp_path
    os.chdir(original_cwd)


# 小さなSBMグラフ
@pytest.fixture
def small_sbm():
    """24ノード・2クラスのSBM"""
    return gen_sbm(24, 2, 0.5, 0.05, 4, seed=1)


# 学習済みの小さな GCN と軌跡
@pytest.fixture
def trained_gcn(small_sbm):
    """(graph, trajectory) を返す"""
    model = build_model(Arch.GCN, [4, 8, 2], InitScheme.gaussian(0.0, 1.0), seed=0)
    trajectory = train_gd(model, small_sbm, eta=0.1, epochs=20, seed=0)
    return small_sbm, trajectory
