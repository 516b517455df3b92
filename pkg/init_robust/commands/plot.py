#!/usr/bin/env python3
"""
Plot command for init-robust
"""

from pathlib import Path

import click

from ..plots import emit_plots
from ..utils import handle_errors


@click.command("plot")
@click.argument("records_csv", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), help="出力先（省略時はCSVと同じディレクトリ）")
@handle_errors
def plot(records_csv, out_dir):
    """
    records.csv から SVG チャートを生成します。

    RECORDS_CSV: run / sweep が出力した records.csv
    """
    target = Path(out_dir) if out_dir else Path(records_csv).parent
    for path in emit_plots(records_csv, target):
        click.echo(f"チャートを出力: {path}")
