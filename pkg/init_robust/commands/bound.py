#!/usr/bin/env python3
"""
Bound command for init-robust
"""

from dataclasses import replace

import click

from ..bounds import Variant, bound_input_from_trajectory, bounds_for_arch
from ..checkpoint import load_trajectory, trajectory_meta
from ..errors import ContractError
from ..harness import graph_terms, load_dataset
from ..utils import append_csv_rows, format_table, handle_errors, load_context_config, output_dir

BOUNDS_FILE = "bounds.csv"


@click.command("bound")
@click.option("--trajectory", "trajectory_path", required=True, type=click.Path(exists=True, dir_okay=False), help="trajectory.npz")
@click.option("--epsilon", type=click.FloatRange(min=0), required=True, help="攻撃予算ε")
@click.option(
    "--variant",
    type=click.Choice(["all"] + [v.value for v in Variant]),
    default="all",
    show_default=True,
    help="2^t 版 (pow2) / (1+ηL)^t 版 (sharpened)",
)
@click.pass_context
@handle_errors
def bound(ctx, trajectory_path, epsilon, variant):
    """
    学習軌跡ファイルから、適用可能な全ての上界を評価して bounds.csv に追記します。
    """
    _, cfg = load_context_config(ctx)
    trajectory = load_trajectory(trajectory_path)
    meta = trajectory_meta(trajectory_path)
    if "arch" not in meta:
        raise ContractError(f"{trajectory_path} does not record the architecture")
    if meta["arch"] is not cfg.model.arch or len(meta["shapes"]) != cfg.model.layers:
        cfg = replace(cfg, model=replace(cfg.model, arch=meta["arch"], layers=len(meta["shapes"])))

    graph = load_dataset(cfg.dataset)
    terms = graph_terms(graph, cfg)
    variants = list(Variant) if variant == "all" else [Variant(variant)]

    reports = []
    for v in variants:
        b = bound_input_from_trajectory(trajectory, epsilon, v, **terms)
        reports.extend(bounds_for_arch(meta["arch"], b, cfg.init, meta["shapes"], cfg.mean_reading))
    if not reports:
        click.echo("警告: 評価できる上界がありません（L̂ が未推定）", err=True)
        return

    rows = [report.as_row(trajectory.num_layers) for report in reports]
    path = append_csv_rows(output_dir(cfg) / BOUNDS_FILE, rows)
    click.echo(format_table(rows, list(rows[0].keys())))
    click.echo(f"追記先: {path}")
