#!/usr/bin/env python3
"""
Common utility functions for init-robust commands
"""

import csv
import functools
import logging
import sys
from pathlib import Path

import click

from .config import experiment_config_from_dict, load_config, save_config
from .errors import ConfigError, InitRobustError
from .logging import setup_logging

logger = logging.getLogger(__name__)

EXIT_CONFIG_ERROR = 1
EXIT_RUNTIME_ERROR = 2
EXIT_UNEXPECTED_ERROR = 3


def handle_errors(func):
    """
    コマンド実行中の例外を終了コードに変換するデコレータ

    ConfigError は終了コード1、その他の InitRobustError は終了コード2、
    それ以外の想定外の例外は終了コード3（トレースバックはデバッグログへ）。
    click 自身の例外はそのまま click に任せる。
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ConfigError as e:
            click.echo(f"設定エラー: {e}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except InitRobustError as e:
            click.echo(f"エラー: {e}", err=True)
            sys.exit(EXIT_RUNTIME_ERROR)
        except (click.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except Exception as e:
            logger.debug("unexpected error in %s", func.__name__, exc_info=True)
            click.echo(f"予期しないエラー: {type(e).__name__}: {e}", err=True)
            sys.exit(EXIT_UNEXPECTED_ERROR)

    return wrapper


def load_context_config(ctx):
    """
    グローバルオプションを反映した設定を読み込む

    Returns:
        tuple: (マージ済み設定辞書, ExperimentConfig)
    """
    obj = ctx.obj or {}
    config = load_config(obj.get("config_path"))
    experiment = config.setdefault("experiment", {})
    if obj.get("seed") is not None:
        experiment["base_seed"] = obj["seed"]
    if obj.get("out") is not None:
        experiment["output_dir"] = obj["out"]
    if obj.get("threads") is not None:
        experiment["threads"] = obj["threads"]
    setup_logging(config, verbose=obj.get("verbose", False))
    return config, experiment_config_from_dict(config)


def output_dir(cfg):
    """出力ディレクトリを作成して返す"""
    path = Path(cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def snapshot_config(config, out_dir):
    """実行時の有効設定を出力先に保存"""
    return save_config(config, Path(out_dir) / "config.toml")


def append_csv_rows(path, rows):
    """CSVに行を追記（新規ファイルならヘッダーも書く）"""
    if not rows:
        return path
    path = Path(path)
    new_file = not path.exists() or path.stat().st_size == 0
    fieldnames = list(rows[0].keys())
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n")
        if new_file:
            writer.writeheader()
        writer.writerows(rows)
    return path


def format_table(rows, columns):
    """行リストを固定幅テーブルの文字列にする"""
    widths = {c: max(len(c), *(len(str(r.get(c, ""))) for r in rows)) for c in columns}
    lines = ["  ".join(c.ljust(widths[c]) for c in columns)]
    for row in rows:
        lines.append("  ".join(str(row.get(c, "")).ljust(widths[c]) for c in columns))
    return "\n".join(lines)
