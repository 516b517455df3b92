#!/usr/bin/env python3
"""
Train command for init-robust (one cell)
"""

import click

from ..checkpoint import MODEL_FILE, TRAJECTORY_FILE, save_model, save_trajectory
from ..harness import evaluate_bounds, graph_terms, load_dataset, train_cell
from ..metrics import accuracy
from ..utils import format_table, handle_errors, load_context_config, output_dir, snapshot_config


@click.command("train")
@click.option("--epsilon", type=click.FloatRange(min=0), default=0.1, show_default=True, help="上界表示に使う攻撃予算ε")
@click.pass_context
@handle_errors
def train(ctx, epsilon):
    """
    設定に従って1セル分の初期化と学習を行い、model.npz と trajectory.npz を保存します。

    学習後のテスト精度と、アーキテクチャに適用可能な上界の表を表示します。
    """
    config, cfg = load_context_config(ctx)
    graph = load_dataset(cfg.dataset)
    seed = cfg.base_seed

    trajectory = train_cell(cfg, graph, seed)
    out = output_dir(cfg)
    save_model(trajectory.final_model, out / MODEL_FILE)
    save_trajectory(trajectory, out / TRAJECTORY_FILE)
    snapshot_config(config, out)

    test_acc = accuracy(trajectory.final_model, graph, graph.test_mask, cfg.model.self_loops)
    click.echo(f"学習完了: epochs={trajectory.epochs} loss={trajectory.loss_curve[-1]:.6g} test_acc={test_acc:.4f}")
    if trajectory.smoothness_estimate is not None:
        click.echo(f"L̂={trajectory.smoothness_estimate:.6g} η·L̂={trajectory.eta * trajectory.smoothness_estimate:.6g}")
    if not trajectory.converged:
        click.echo("警告: W* の近似が収束していません（最終イテレートを使用）", err=True)

    reports = evaluate_bounds(trajectory, cfg, graph_terms(graph, cfg), epsilon)
    if reports:
        rows = [report.as_row() for report in reports]
        click.echo(format_table(rows, ["theorem_id", "variant", "epsilon", "gamma", "eta_L_ok", "converged"]))
    click.echo(f"保存先: {out}")
