#!/usr/bin/env python3
"""
初期化と敵対的ロバスト性の関係を検証する実験CLIツール（パッケージ版）
"""

import click


# メイン CLI グループを定義
@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="設定ファイル (TOML)")
@click.option("--seed", type=int, help="ベースシード (experiment.base_seed を上書き)")
@click.option("--out", type=click.Path(file_okay=False), help="出力ディレクトリ")
@click.option("--threads", type=click.IntRange(min=1), help="並列実行するセル数")
@click.option("--verbose", "-v", is_flag=True, help="デバッグログを表示")
@click.pass_context
def cli(ctx, config_path, seed, out, threads, verbose):
    """
    重みの初期化が GNN / DNN の敵対的ロバスト性に与える影響を測る実験ツール。

    主要コマンド:
      train     1セル分の学習（モデルと学習軌跡を保存）
      attack    保存したモデルへの攻撃
      bound     学習軌跡からロバスト性の上界を評価
      run       repeats 回の実験
      sweep     初期化パラメータ/エポックのスイープ
      plot      records.csv からチャートを生成
    """
    ctx.ensure_object(dict)
    ctx.obj.update(
        config_path=config_path,
        seed=seed,
        out=out,
        threads=threads,
        verbose=verbose,
    )


# 各コマンドを動的にインポートして登録
def _register_commands():
    """全てのサブコマンドを登録"""
    from .commands.train import train
    from .commands.attack import attack
    from .commands.bound import bound
    from .commands.run import run
    from .commands.sweep import sweep
    from .commands.plot import plot

    cli.add_command(train)
    cli.add_command(attack)
    cli.add_command(bound)
    cli.add_command(run)
    cli.add_command(sweep)
    cli.add_command(plot)


# コマンドを登録
_register_commands()


# スクリプトエントリーポイント
if __name__ == "__main__":
    cli()
