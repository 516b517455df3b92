#!/usr/bin/env python3
"""
実験オーケストレーション: 初期化 → 学習 → チェックポイント毎の攻撃と上界評価

Cells (repeat x sweep value) are independent and seeded as
base_seed + cell_index; records are written in cell order whatever order
the worker pool finishes them in.
"""

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .attacks import AttackConfig
from .bounds import (
    BoundReport,
    TheoremId,
    Variant,
    bound_input_from_trajectory,
    bounds_for_arch,
)
from .config import DatasetSpec, ExperimentConfig
from .errors import (
    ConfigError,
    ConvergenceError,
    DivergenceError,
    InitRobustError,
    SmoothnessEstimateError,
)
from .graph import (
    Graph,
    feature_norm_bound,
    gen_blobs,
    gen_sbm,
    load_graph,
    max_degree,
    normalize_adjacency,
    walk_sums,
)
from .initializers import InitKind
from .linalg import frobenius_norm, spectral_norm
from .logging import log_experiment_event
from .metrics import accuracy, empirical_risk
from .nn import Trajectory, build_model, train_gd


logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RECORDS_FILE = "records.csv"
TIMINGS_FILE = "timings.csv"

SWEEP_AXES = ("sigma", "beta", "scheme", "epochs")

GAMMA_THEOREMS = (
    TheoremId.GCN_FEATURE,
    TheoremId.GCN_STRUCTURE,
    TheoremId.GIN_FEATURE,
    TheoremId.DNN,
    TheoremId.GAUSSIAN_EXPECTED,
)
GAMMA_COLUMNS = [f"gamma_{t.value}_{v.value}" for t in GAMMA_THEOREMS for v in Variant]

CONFIG_COLUMNS = [
    "dataset",
    "arch",
    "activation",
    "hidden",
    "layers",
    "self_loops",
    "init",
    "init_kind",
    "mu",
    "sigma",
    "beta",
    "value",
    "eta",
    "epochs",
    "eval_every",
]

RECORD_COLUMNS = [
    "schema_version",
    "cell",
    "sweep_axis",
    "sweep_value",
    "repeat",
    "seed",
    *CONFIG_COLUMNS,
    "epoch",
    "attack",
    "budget",
    "trials",
    "clean_acc",
    "attacked_acc",
    "success_rate",
    "sup_distance",
    "perturbation_norm",
    "lipschitz_ceiling",
    "smoothness",
    "eta_L",
    "converged",
    *GAMMA_COLUMNS,
    "failed",
    "failure",
]

TIMING_COLUMNS = ["cell", "seed", "wallclock_ms"]


def _fmt(value) -> str:
    """CSV表現: floatはrepr、Noneは空欄、boolは0/1"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


@dataclass(frozen=True)
class ExperimentRecord:
    """1セル・1チェックポイント・1攻撃予算ぶんの結果"""

    cell: int
    repeat: int
    seed: int
    config: Dict[str, object]
    epoch: Optional[int] = None
    sweep_axis: str = ""
    sweep_value: str = ""
    attack: str = "none"
    budget: Optional[float] = None
    trials: Optional[int] = None
    clean_acc: Optional[float] = None
    attacked_acc: Optional[float] = None
    success_rate: Optional[float] = None
    sup_distance: Optional[float] = None
    perturbation_norm: Optional[float] = None
    lipschitz_ceiling: Optional[float] = None
    smoothness: Optional[float] = None
    eta_l: Optional[float] = None
    converged: Optional[bool] = None
    gammas: Dict[str, float] = field(default_factory=dict)
    failed: bool = False
    failure: str = ""

    def as_row(self) -> dict:
        row = {
            "schema_version": SCHEMA_VERSION,
            "cell": self.cell,
            "sweep_axis": self.sweep_axis,
            "sweep_value": self.sweep_value,
            "repeat": self.repeat,
            "seed": self.seed,
        }
        row.update({key: _fmt(self.config.get(key)) for key in CONFIG_COLUMNS})
        row.update(
            {
                "epoch": _fmt(self.epoch),
                "attack": self.attack,
                "budget": _fmt(self.budget),
                "trials": _fmt(self.trials),
                "clean_acc": _fmt(self.clean_acc),
                "attacked_acc": _fmt(self.attacked_acc),
                "success_rate": _fmt(self.success_rate),
                "sup_distance": _fmt(self.sup_distance),
                "perturbation_norm": _fmt(self.perturbation_norm),
                "lipschitz_ceiling": _fmt(self.lipschitz_ceiling),
                "smoothness": _fmt(self.smoothness),
                "eta_L": _fmt(self.eta_l),
                "converged": _fmt(self.converged),
            }
        )
        row.update({column: _fmt(self.gammas.get(column)) for column in GAMMA_COLUMNS})
        row["failed"] = _fmt(self.failed)
        row["failure"] = self.failure
        return row


@dataclass
class CellResult:
    cell: int
    seed: int
    records: List[ExperimentRecord]
    wallclock_ms: float


# ---------------------------------------------------------------------------
# データセットとモデル
# ---------------------------------------------------------------------------


def load_dataset(spec: DatasetSpec) -> Graph:
    """設定に従ってグラフを用意（sbm / path / blobs）"""
    if spec.source == "path":
        return load_graph(spec.path, spec.num_classes)
    if spec.source == "blobs":
        return gen_blobs(spec.num_samples, spec.classes, spec.feat_dim, spec.seed, spec.center_scale)
    return gen_sbm(spec.n, spec.classes, spec.p_in, spec.p_out, spec.feat_dim, spec.seed)


def model_dims(cfg: ExperimentConfig, graph: Graph) -> List[int]:
    hidden = [cfg.model.hidden] * (cfg.model.layers - 1)
    return [graph.feature_dim, *hidden, graph.num_classes]


def train_cell(cfg: ExperimentConfig, graph: Graph, seed: int) -> Trajectory:
    """1セル分の初期化と学習（チェックポイントのスナップショット付き）"""
    model = build_model(cfg.model.arch, model_dims(cfg, graph), cfg.init, seed, cfg.model.activation)
    return train_gd(
        model,
        graph,
        eta=cfg.train.eta,
        epochs=cfg.train.epochs,
        seed=seed,
        self_loops=cfg.model.self_loops,
        snapshot_epochs=cfg.train.checkpoints(),
        grad_tol=cfg.train.grad_tol,
        inflation=cfg.train.smoothness_inflation,
    )


def graph_terms(graph: Graph, cfg: ExperimentConfig) -> dict:
    """上界に必要なグラフ側の量（Σŵ, ‖X‖, B, 最大次数）"""
    na = normalize_adjacency(graph, cfg.model.self_loops)
    if cfg.x_norm == "frobenius":
        x_norm = frobenius_norm(graph.features)
    else:
        x_norm = spectral_norm(graph.features)
    return {
        "walk_total": walk_sums(na, cfg.model.layers - 1).total,
        "x_norm": x_norm,
        "feat_bound": feature_norm_bound(graph),
        "max_deg": max_degree(graph),
    }


def evaluate_bounds(
    trajectory: Trajectory,
    cfg: ExperimentConfig,
    terms: dict,
    epsilon: float,
    epoch: Optional[int] = None,
) -> List[BoundReport]:
    """設定された全バリアントについて、アーキテクチャに適用可能な上界を評価"""
    shapes = trajectory.final_model.shapes if trajectory.final_model is not None else None
    reports = []
    for variant in cfg.bound_variants:
        b = bound_input_from_trajectory(trajectory, epsilon, variant, epoch, **terms)
        reports.extend(bounds_for_arch(cfg.model.arch, b, cfg.init, shapes, cfg.mean_reading))
    return reports


def _gamma_columns(reports: Sequence[BoundReport], structural: bool) -> Dict[str, float]:
    gammas = {}
    for report in reports:
        if (report.theorem_id is TheoremId.GCN_STRUCTURE) != structural:
            continue
        gammas[f"gamma_{report.theorem_id.value}_{report.variant.value}"] = report.gamma
    return gammas


def config_columns(cfg: ExperimentConfig) -> Dict[str, object]:
    return {
        "dataset": cfg.dataset.path if cfg.dataset.source == "path" else cfg.dataset.source,
        "arch": cfg.model.arch.value,
        "activation": cfg.model.activation.value,
        "hidden": cfg.model.hidden,
        "layers": cfg.model.layers,
        "self_loops": cfg.model.self_loops,
        "init": cfg.init.label(),
        "init_kind": cfg.init.kind.value,
        "mu": cfg.init.mu,
        "sigma": cfg.init.sigma,
        "beta": cfg.init.beta,
        "value": cfg.init.value,
        "eta": cfg.train.eta,
        "epochs": cfg.train.epochs,
        "eval_every": cfg.train.eval_every,
    }


# ---------------------------------------------------------------------------
# セル実行
# ---------------------------------------------------------------------------


def run_cell(
    cfg: ExperimentConfig,
    graph: Graph,
    cell: int,
    repeat: int,
    seed: int,
    sweep_axis: str = "",
    sweep_value: str = "",
) -> CellResult:
    """1セルを実行。学習・攻撃・上界評価での失敗は failed=1 のレコードとして記録する"""
    started = time.perf_counter()
    base = dict(
        cell=cell,
        repeat=repeat,
        seed=seed,
        config=config_columns(cfg),
        sweep_axis=sweep_axis,
        sweep_value=sweep_value,
    )
    try:
        trajectory = train_cell(cfg, graph, seed)
    except (DivergenceError, ConvergenceError, SmoothnessEstimateError) as e:
        log_experiment_event("failure", str(e), cell=cell, seed=seed)
        records = [ExperimentRecord(**base, failed=True, failure=str(e))]
        return CellResult(cell, seed, records, (time.perf_counter() - started) * 1000.0)

    eta_l = None
    if trajectory.smoothness_estimate is not None:
        eta_l = trajectory.eta * trajectory.smoothness_estimate
    shared = dict(
        base,
        smoothness=trajectory.smoothness_estimate,
        eta_l=eta_l,
        converged=trajectory.converged,
    )

    records = []
    try:
        terms = graph_terms(graph, cfg)
        for epoch in cfg.train.checkpoints():
            records.extend(_checkpoint_records(cfg, graph, trajectory, terms, shared, epoch, seed))
    except ConfigError:
        raise
    except InitRobustError as e:
        # 攻撃・上界評価での失敗もセル単位で隔離する
        log_experiment_event("failure", str(e), cell=cell, seed=seed)
        records.append(ExperimentRecord(**shared, failed=True, failure=str(e)))

    elapsed = (time.perf_counter() - started) * 1000.0
    log_experiment_event("cell", f"cell {cell}", seed=seed, records=len(records))
    return CellResult(cell, seed, records, elapsed)


def _checkpoint_records(cfg, graph, trajectory, terms, shared, epoch, seed) -> List[ExperimentRecord]:
    """1チェックポイント分のレコード（攻撃 × 予算）"""
    model = trajectory.model_at(epoch)
    clean = accuracy(model, graph, graph.test_mask, cfg.model.self_loops)
    if not cfg.attacks:
        return [ExperimentRecord(**shared, epoch=epoch, clean_acc=clean)]
    records = []
    for spec in cfg.attacks:
        for budget in spec.budgets:
            attack_cfg = AttackConfig(
                kind=spec.kind,
                budget=budget,
                steps=spec.steps,
                step_size=spec.step_size,
                seed=seed,
                norm_scope=spec.norm_scope,
                target=spec.target,
            )
            # MLP の sup_distance はサンプル毎の sup の平均
            risk = empirical_risk(
                model, graph, attack_cfg, spec.trials, seed, cfg.model.self_loops
            )
            # 構造攻撃では実測した ‖ΔA‖₂ を ε として上界に渡す
            epsilon = risk.perturbation_norm if spec.kind.structural else budget
            reports = evaluate_bounds(trajectory, cfg, terms, epsilon, epoch)
            records.append(
                ExperimentRecord(
                    **shared,
                    epoch=epoch,
                    attack=spec.kind.value,
                    budget=budget,
                    trials=spec.trials,
                    clean_acc=risk.clean_accuracy,
                    attacked_acc=risk.attacked_accuracy,
                    success_rate=risk.success_rate,
                    sup_distance=risk.sup_distance,
                    perturbation_norm=risk.perturbation_norm,
                    lipschitz_ceiling=risk.ceiling,
                    gammas=_gamma_columns(reports, spec.kind.structural),
                )
            )
    return records


class RecordWriter:
    """records.csv / timings.csv への逐次書き込み（セル毎にflush）"""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.records_path = self.out_dir / RECORDS_FILE
        self.timings_path = self.out_dir / TIMINGS_FILE
        self._records_file = open(self.records_path, "w", newline="", encoding="utf-8")
        self._timings_file = open(self.timings_path, "w", newline="", encoding="utf-8")
        self._records = csv.DictWriter(self._records_file, fieldnames=RECORD_COLUMNS, lineterminator="\n")
        self._timings = csv.DictWriter(self._timings_file, fieldnames=TIMING_COLUMNS, lineterminator="\n")
        self._records.writeheader()
        self._timings.writeheader()

    def write(self, result: CellResult):
        for record in result.records:
            self._records.writerow(record.as_row())
        self._timings.writerow(
            {"cell": result.cell, "seed": result.seed, "wallclock_ms": repr(result.wallclock_ms)}
        )
        self._records_file.flush()
        self._timings_file.flush()

    def close(self):
        self._records_file.close()
        self._timings_file.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass(frozen=True)
class Cell:
    index: int
    repeat: int
    cfg: ExperimentConfig
    sweep_axis: str = ""
    sweep_value: str = ""


def _execute(cells: Sequence[Cell], graph: Graph, threads: int, base_seed: int, writer=None) -> List[ExperimentRecord]:
    """セルをワーカープールで実行し、セル番号順にマージ"""
    records: List[ExperimentRecord] = []

    def work(cell: Cell) -> CellResult:
        return run_cell(
            cell.cfg,
            graph,
            cell.index,
            cell.repeat,
            base_seed + cell.index,
            cell.sweep_axis,
            cell.sweep_value,
        )

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [pool.submit(work, cell) for cell in cells]
        for future in futures:
            result = future.result()
            if writer is not None:
                writer.write(result)
            records.extend(result.records)
    return records


def run_experiment(cfg: ExperimentConfig, graph: Optional[Graph] = None, writer=None) -> List[ExperimentRecord]:
    """repeats 回の独立セルを実行してレコードを返す"""
    graph = load_dataset(cfg.dataset) if graph is None else graph
    log_experiment_event("start", "run", repeats=cfg.repeats, base_seed=cfg.base_seed)
    cells = [Cell(repeat, repeat, cfg) for repeat in range(cfg.repeats)]
    records = _execute(cells, graph, cfg.threads, cfg.base_seed, writer)
    log_experiment_event("done", "run", records=len(records))
    return records


def _sweep_value_label(axis: str, value) -> str:
    if axis == "scheme":
        return str(value)
    if axis == "epochs":
        return str(int(value))
    return _fmt(float(value))


def apply_axis(cfg: ExperimentConfig, axis: str, value) -> ExperimentConfig:
    """スイープ軸の値を基本設定に適用"""
    scheme = cfg.init
    if axis == "sigma":
        if scheme.kind is not InitKind.GAUSSIAN:
            raise ConfigError(f"sigma sweep needs a gaussian init, got {scheme.kind.value}")
        return cfg.with_init(replace(scheme, sigma=float(value)))
    if axis == "beta":
        if scheme.kind not in (InitKind.UNIFORM, InitKind.ORTHOGONAL):
            raise ConfigError(f"beta sweep needs a uniform or orthogonal init, got {scheme.kind.value}")
        return cfg.with_init(replace(scheme, beta=float(value)))
    if axis == "scheme":
        try:
            return cfg.with_init(replace(scheme, kind=InitKind(str(value))))
        except ValueError:
            raise ConfigError(f"unknown init scheme {value!r}") from None
    if axis == "epochs":
        epochs = int(value)
        if epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {epochs}")
        return cfg.with_epochs(epochs)
    raise ConfigError(f"unknown sweep axis {axis!r} (choose from {', '.join(SWEEP_AXES)})")


def sweep(
    cfg: ExperimentConfig,
    axis: str,
    values: Sequence,
    graph: Optional[Graph] = None,
    writer=None,
) -> List[ExperimentRecord]:
    """values × repeats のセルを実行。cell = value_index * repeats + repeat"""
    cell_cfgs = [apply_axis(cfg, axis, value) for value in values]
    if not cell_cfgs:
        return []
    graph = load_dataset(cfg.dataset) if graph is None else graph
    log_experiment_event("start", f"sweep over {axis}", values=len(cell_cfgs), repeats=cfg.repeats)
    cells = [
        Cell(index * cfg.repeats + repeat, repeat, cell_cfg, axis, _sweep_value_label(axis, value))
        for index, (value, cell_cfg) in enumerate(zip(values, cell_cfgs))
        for repeat in range(cfg.repeats)
    ]
    records = _execute(cells, graph, cfg.threads, cfg.base_seed, writer)
    log_experiment_event("done", f"sweep over {axis}", records=len(records))
    return records


def default_sweep_values(cfg: ExperimentConfig, axis: str) -> List:
    if axis == "sigma":
        return list(cfg.sigma_grid)
    if axis == "beta":
        return list(cfg.beta_grid)
    if axis == "scheme":
        return ["uniform", "orthogonal", "glorot", "kaiming"]
    raise ConfigError(f"--values is required for the {axis} axis")
