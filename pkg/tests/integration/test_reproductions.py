#!/usr/bin/env python3
"""
デスクスケールでの再現実験（遅いので -m slow で実行）
"""

import csv
from collections import defaultdict

import numpy as np
import pytest
from scipy.stats import spearmanr

from init_robust.attacks import AttackConfig, AttackKind, NormScope
from init_robust.bounds import TheoremId
from init_robust.config import experiment_config_from_dict
from init_robust.harness import (
    RecordWriter,
    evaluate_bounds,
    graph_terms,
    load_dataset,
    run_experiment,
    sweep,
    train_cell,
)
from init_robust.initializers import InitScheme
from init_robust.metrics import accuracy, empirical_risk, lipschitz_ceiling, output_distance
from init_robust.nn import predict

pytestmark = [pytest.mark.slow, pytest.mark.integration]

SIGMAS = [0.1, 0.5, 1.0, 2.0]


def _sbm_config(**sections):
    config = {
        "dataset": {"source": "sbm", "n": 200, "classes": 4, "seed": 0},
        "model": {"arch": "gcn", "hidden": 16, "layers": 2, "activation": "tanh"},
        "train": {"epochs": 300, "eval_every": 0},
        "experiment": {"repeats": 10, "base_seed": 0, "threads": 1},
    }
    for name, values in sections.items():
        config.setdefault(name, {}).update(values)
    return experiment_config_from_dict(config)


def _read_rows(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


class TestBoundSoundness:
    """学習済み GCN で経験的距離 ≤ Lipschitz 上限 ≤ γ"""

    def test_feature_budgets(self):
        cfg = _sbm_config(attack={"kinds": ["feature_pgd"]}, experiment={"repeats": 1})
        graph = load_dataset(cfg.dataset)
        trajectory = train_cell(cfg, graph, seed=0)
        model = trajectory.final_model
        terms = graph_terms(graph, cfg)
        clean = predict(model, graph)
        rng = np.random.default_rng(0)

        for epsilon in (0.1, 0.5, 1.0):
            ceiling = lipschitz_ceiling(model, graph, epsilon)
            # PGD は内部で上限を検査し、超えれば BoundViolationError
            risk = empirical_risk(model, graph, AttackConfig(AttackKind.FEATURE_PGD, epsilon, steps=100))
            assert risk.sup_distance <= ceiling * (1 + 1e-9)

            for _ in range(1000):
                delta = rng.standard_normal(graph.features.shape)
                delta *= epsilon * rng.uniform() / np.linalg.norm(delta)
                attacked = predict(model, graph.with_features(graph.features + delta))
                assert output_distance(clean, attacked, graph.test_mask) <= ceiling * (1 + 1e-9)

            for report in evaluate_bounds(trajectory, cfg, terms, epsilon):
                if report.theorem_id is TheoremId.GCN_FEATURE and report.eta_l_ok:
                    assert ceiling <= report.gamma


@pytest.fixture(scope="module")
def sigma_sweep(tmp_path_factory):
    """σ スイープを2回実行した records.csv のパス"""
    cfg = _sbm_config(
        model={"self_loops": True},
        train={"eta": 0.2},
        attack={"kinds": ["structure_pgd"], "structure_budgets": [0.3], "target": "train"},
    )
    graph = load_dataset(cfg.dataset)
    paths = []
    for name in ("first", "second"):
        with RecordWriter(tmp_path_factory.mktemp(name)) as writer:
            sweep(cfg, "sigma", SIGMAS, graph, writer=writer)
        paths.append(writer.records_path)
    return paths


class TestSigmaTrend:
    """σ が大きいほど構造攻撃の成功率が上がる"""

    def test_success_rate_increases_with_sigma(self, sigma_sweep):
        by_sigma = defaultdict(list)
        for row in _read_rows(sigma_sweep[0]):
            assert row["failed"] == "0"
            by_sigma[float(row["sigma"])].append(float(row["success_rate"]))
        means = [np.mean(by_sigma[s]) for s in SIGMAS]
        assert all(len(by_sigma[s]) == 10 for s in SIGMAS)
        assert spearmanr(SIGMAS, means).correlation >= 0.8
        assert all(b >= a for a, b in zip(means, means[1:]))
        assert means[-1] - means[0] >= 0.03

    def test_byte_identical_reruns(self, sigma_sweep):
        first, second = sigma_sweep
        assert first.read_bytes() == second.read_bytes()


class TestEpochTradeoff:
    """攻撃下の精度は学習途中で最大になる"""

    def test_attacked_accuracy_peaks_early(self):
        cfg = _sbm_config(
            train={"epochs": 300, "eval_every": 10},
            attack={"kinds": ["structure_pgd"], "structure_budgets": [0.2]},
        )
        records = run_experiment(cfg)
        by_seed = defaultdict(list)
        for record in records:
            assert not record.failed
            by_seed[record.seed].append(record)

        hits = 0
        for seed_records in by_seed.values():
            seed_records.sort(key=lambda r: r.epoch)
            attacked = [r.attacked_acc for r in seed_records]
            best = seed_records[int(np.argmax(attacked))]
            final = seed_records[-1]
            if best.epoch < 300 and final.clean_acc >= best.clean_acc - 0.02:
                hits += 1
        assert len(by_seed) == 10
        assert hits >= 7


class TestMlpInitGap:
    """ガウス混合データ上の MLP で初期化による頑健性の差"""

    INITS = {
        "uniform": InitScheme.uniform(3.0),
        "orthogonal": InitScheme.orthogonal(1.0),
        "glorot": InitScheme.glorot(),
        "kaiming": InitScheme.kaiming(),
    }

    def test_gap_between_inits(self):
        cfg = experiment_config_from_dict(
            {
                "dataset": {"source": "blobs", "num_samples": 2000, "classes": 10, "feat_dim": 16, "seed": 0},
                "model": {"arch": "mlp", "hidden": 32, "layers": 2, "activation": "tanh"},
                "train": {"eta": 0.1, "epochs": 300, "eval_every": 0},
                "attack": {"kinds": ["feature_pgd"]},
                "experiment": {"repeats": 1},
            }
        )
        graph = load_dataset(cfg.dataset)
        epsilon = 0.1 * float(np.linalg.norm(graph.features, axis=1).mean())

        clean, attacked = {}, {}
        for name, scheme in self.INITS.items():
            model = train_cell(cfg.with_init(scheme), graph, seed=0).final_model
            clean[name] = accuracy(model, graph)
            attack_cfg = AttackConfig(AttackKind.FEATURE_PGD, epsilon, steps=50, norm_scope=NormScope.PER_ROW)
            attacked[name] = empirical_risk(model, graph, attack_cfg).attacked_accuracy

        assert max(clean.values()) - min(clean.values()) <= 0.05
        assert max(attacked.values()) - min(attacked.values()) >= 0.10
        assert max(attacked, key=attacked.get) != "uniform"
