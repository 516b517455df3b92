#!/usr/bin/env python3
"""
Run command for init-robust (repeats of the configured cell)
"""

import click

from ..harness import RecordWriter, run_experiment
from ..utils import handle_errors, load_context_config, output_dir, snapshot_config


@click.command("run")
@click.pass_context
@handle_errors
def run(ctx):
    """
    設定された実験を repeats 回実行し、records.csv に書き出します。
    """
    config, cfg = load_context_config(ctx)
    out = output_dir(cfg)
    snapshot_config(config, out)
    with RecordWriter(out) as writer:
        records = run_experiment(cfg, writer=writer)
    failed = sum(1 for record in records if record.failed)
    click.echo(f"{len(records)} レコードを書き出しました: {writer.records_path}")
    if failed:
        click.echo(f"警告: {failed} セルが失敗しました", err=True)
