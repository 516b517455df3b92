#!/usr/bin/env python3
"""
Attack command for init-robust
"""

import click

from ..attacks import AttackConfig, AttackKind, NormScope, run_attack, verify_perturbation
from ..checkpoint import load_model
from ..graph import save_graph
from ..harness import load_dataset
from ..metrics import empirical_risk
from ..nn import Arch
from ..utils import format_table, handle_errors, load_context_config


@click.command("attack")
@click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False), help="model.npz")
@click.option("--kind", type=click.Choice([k.value for k in AttackKind]), required=True, help="攻撃の種類")
@click.option("--budget", type=click.FloatRange(min=0), required=True, help="特徴量攻撃はε、構造攻撃は|E|に対する割合")
@click.option("--trials", type=click.IntRange(min=1), default=1, show_default=True, help="攻撃の試行回数")
@click.option("--save-graph", "save_graph_dir", type=click.Path(file_okay=False), help="攻撃後のグラフを保存するディレクトリ")
@click.pass_context
@handle_errors
def attack(ctx, checkpoint, kind, budget, trials, save_graph_dir):
    """
    保存済みモデルに攻撃を1回実行し、経験的リスクを表示します。
    """
    _, cfg = load_context_config(ctx)
    graph = load_dataset(cfg.dataset)
    model = load_model(checkpoint)

    attack_cfg = AttackConfig(
        kind=AttackKind(kind),
        budget=budget,
        steps=cfg.attacks[0].steps if cfg.attacks else 100,
        step_size=cfg.attacks[0].step_size if cfg.attacks else 0.1,
        seed=cfg.base_seed,
        norm_scope=NormScope.PER_ROW if model.arch is Arch.MLP else NormScope.GLOBAL,
        target=cfg.attacks[0].target if cfg.attacks else "test",
    )
    risk = empirical_risk(model, graph, attack_cfg, trials, cfg.base_seed, cfg.model.self_loops)
    row = risk.as_row()
    click.echo(format_table([row], list(row.keys())))
    click.echo("sup_distance は経験的な下界です（真の敵対的リスクの下界）")
    if model.arch is Arch.MLP:
        click.echo("MLP の sup_distance はテストサンプル毎の sup の平均です")
    for flag in risk.flags:
        click.echo(f"警告: {flag}", err=True)

    if save_graph_dir:
        result = run_attack(model, graph, attack_cfg, cfg.model.self_loops)
        problems = verify_perturbation(graph, result, attack_cfg)
        for problem in problems:
            click.echo(f"検証エラー: {problem}", err=True)
        save_graph(result.graph, save_graph_dir)
        click.echo(f"攻撃後のグラフを保存: {save_graph_dir}")
