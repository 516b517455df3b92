#!/usr/bin/env python3
"""
Sweep command for init-robust
"""

import click

from ..harness import SWEEP_AXES, RecordWriter, default_sweep_values, sweep as run_sweep
from ..utils import handle_errors, load_context_config, output_dir, snapshot_config


def _parse_values(axis, raw):
    """カンマ区切りの値リストを解釈（空文字なら空リスト）"""
    items = [item.strip() for item in raw.split(",") if item.strip()]
    if axis == "scheme":
        return items
    try:
        return [int(item) for item in items] if axis == "epochs" else [float(item) for item in items]
    except ValueError:
        raise click.BadParameter(f"{axis} の値は数値で指定してください: {raw!r}", param_hint="--values")


@click.command("sweep")
@click.option("--axis", type=click.Choice(SWEEP_AXES), required=True, help="スイープする軸")
@click.option("--values", "raw_values", help="カンマ区切りの値（省略時は設定のグリッド）")
@click.pass_context
@handle_errors
def sweep(ctx, axis, raw_values):
    """
    初期化パラメータ (sigma / beta / scheme) またはエポック数をスイープします。

    セルのシードは base_seed + (値の番号 × repeats + 反復番号) です。
    """
    config, cfg = load_context_config(ctx)
    values = default_sweep_values(cfg, axis) if raw_values is None else _parse_values(axis, raw_values)
    if not values:
        click.echo("値が指定されていないため、実行するセルはありません。")
        return

    out = output_dir(cfg)
    snapshot_config(config, out)
    with RecordWriter(out) as writer:
        records = run_sweep(cfg, axis, values, writer=writer)
    failed = sum(1 for record in records if record.failed)
    click.echo(f"{len(values)}値 × {cfg.repeats}回: {len(records)} レコード -> {writer.records_path}")
    if failed:
        click.echo(f"警告: {failed} セルが失敗しました", err=True)
