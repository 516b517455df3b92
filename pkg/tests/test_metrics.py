import numpy as np
import pytest

from init_robust.attacks import AttackConfig, AttackKind, NormScope, random_flip, run_attack
from init_robust.errors import BoundViolationError, ContractError
from init_robust.graph import gen_blobs
from init_robust.initializers import InitScheme
from init_robust.metrics import (
    accuracy,
    accuracy_from_logits,
    empirical_risk,
    empirical_risk_samples,
    lipschitz_ceiling,
    output_distance,
    perturbation_size,
    success_rate,
    trial_configs,
    trial_seed,
)
from init_robust.nn import Arch, build_model, predict, train_gd

from test_helpers import complete_graph, make_graph


class TestAccuracy:
    """正解率"""

    def test_all_correct(self):
        logits = np.eye(3)
        assert accuracy_from_logits(logits, [0, 1, 2], [True] * 3) == 1.0

    def test_ties_go_to_lowest_class(self):
        logits = np.zeros((4, 3))
        assert accuracy_from_logits(logits, [0, 1, 2, 0], [True] * 4) == 0.5

    def test_single_wrong_node(self):
        assert accuracy_from_logits(np.array([[0.0, 1.0]]), [0], [True]) == 0.0

    def test_empty_mask(self):
        with pytest.raises(ContractError):
            accuracy_from_logits(np.zeros((2, 2)), [0, 1], [False, False])

    def test_model_accuracy_uses_test_mask(self, trained_gcn):
        graph, traj = trained_gcn
        logits = predict(traj.final_model, graph)
        expected = accuracy_from_logits(logits, graph.labels, graph.test_mask)
        assert accuracy(traj.final_model, graph) == expected


class TestSuccessRate:
    """攻撃成功率 = clean − attacked"""

    def test_subtraction(self):
        assert success_rate(0.8, 0.7) == pytest.approx(0.1)

    def test_equal_inputs(self):
        assert success_rate(0.42, 0.42) == 0.0

    def test_negative_not_clamped(self):
        assert success_rate(0.5, 0.6) == pytest.approx(-0.1)

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            success_rate(1.2, 0.5)


class TestDistances:
    """出力距離と摂動の大きさ"""

    def test_output_distance_masks_rows(self):
        clean = np.zeros((3, 2))
        attacked = np.array([[3.0, 4.0], [100.0, 0.0], [0.0, 0.0]])
        assert output_distance(clean, attacked, [True, False, True]) == pytest.approx(5.0)

    def test_structural_perturbation_size(self):
        g = complete_graph(4)
        result = random_flip(g, AttackConfig(AttackKind.RANDOM_FLIP, 1.0))
        # ΔA = -(J - I) の最大特異値は 3
        assert perturbation_size(g, result) == pytest.approx(3.0, abs=1e-8)

    def test_ceiling_requires_gcn(self, small_sbm):
        model = build_model(Arch.GIN, [4, 2], InitScheme.glorot(), seed=0)
        with pytest.raises(ContractError):
            lipschitz_ceiling(model, small_sbm, 0.1)

    def test_ceiling_on_edgeless_graph(self):
        """辺がなく歩道和が0でも、上限は ∏‖W‖·ε になる"""
        g = make_graph([], 4)
        model = build_model(Arch.GCN, [2, 3, 2], InitScheme.glorot(), seed=0)
        expected = float(np.prod(model.weight_norms())) * 0.5
        assert lipschitz_ceiling(model, g, 0.5) == pytest.approx(expected, rel=1e-12)
        assert lipschitz_ceiling(model, g, 0.5) > 0


class TestTrials:
    """試行シードの入れ子構造"""

    def test_first_trial_is_deterministic_run(self):
        cfg = AttackConfig(AttackKind.FEATURE_PGD, 0.1, seed=5)
        configs = trial_configs(cfg, 3)
        assert configs[0] == cfg
        assert all(c.random_start for c in configs[1:])
        assert configs[1].seed == trial_seed(5, 1)

    def test_nested(self):
        cfg = AttackConfig(AttackKind.FEATURE_PGD, 0.1)
        assert trial_configs(cfg, 4)[:2] == trial_configs(cfg, 2)

    def test_invalid_trials(self):
        with pytest.raises(ContractError):
            trial_configs(AttackConfig(AttackKind.DICE, 0.1), 0)


class TestEmpiricalRisk:
    """経験的な敵対的リスク"""

    def test_zero_budget(self, trained_gcn):
        graph, traj = trained_gcn
        risk = empirical_risk(traj.final_model, graph, AttackConfig(AttackKind.FEATURE_PGD, 0.0))
        assert risk.sup_distance == 0.0
        assert risk.attacked_accuracy == risk.clean_accuracy
        assert risk.success_rate == 0.0

    def test_single_trial_matches_attack(self, trained_gcn):
        graph, traj = trained_gcn
        model = traj.final_model
        cfg = AttackConfig(AttackKind.FEATURE_PGD, 0.5, steps=5)
        result = run_attack(model, graph, cfg)
        expected = output_distance(predict(model, graph), predict(model, result.graph), graph.test_mask)
        assert empirical_risk(model, graph, cfg).sup_distance == expected

    def test_monotone_in_trials(self, trained_gcn):
        graph, traj = trained_gcn
        cfg = AttackConfig(AttackKind.FEATURE_PGD, 0.5, steps=3)
        one = empirical_risk(traj.final_model, graph, cfg, trials=1).sup_distance
        three = empirical_risk(traj.final_model, graph, cfg, trials=3).sup_distance
        assert three >= one

    def test_below_lipschitz_ceiling(self, trained_gcn):
        graph, traj = trained_gcn
        cfg = AttackConfig(AttackKind.FEATURE_PGD, 1.0, steps=10)
        risk = empirical_risk(traj.final_model, graph, cfg, trials=4)
        assert risk.ceiling is not None
        assert risk.sup_distance <= risk.ceiling
        assert risk.perturbation_norm <= 1.0 + 1e-12

    def test_ceiling_violation_raises(self, trained_gcn, mocker):
        graph, traj = trained_gcn
        mocker.patch("init_robust.metrics.lipschitz_ceiling", return_value=0.0)
        with pytest.raises(BoundViolationError):
            empirical_risk(traj.final_model, graph, AttackConfig(AttackKind.FEATURE_PGD, 1.0, steps=3))

    def test_structural_records_adjacency_change(self, trained_gcn):
        graph, traj = trained_gcn
        risk = empirical_risk(traj.final_model, graph, AttackConfig(AttackKind.RANDOM_FLIP, 0.2, seed=1))
        assert risk.ceiling is None
        assert risk.perturbation_norm > 0

    def test_as_row(self, trained_gcn):
        graph, traj = trained_gcn
        row = empirical_risk(traj.final_model, graph, AttackConfig(AttackKind.DICE, 0.1)).as_row()
        assert list(row) == ["attack", "budget", "trials", "sup_distance", "clean_acc", "attacked_acc", "success_rate"]
        assert row["attack"] == "dice"

    def test_per_sample_risk_for_mlp(self):
        g = gen_blobs(60, 3, 4, seed=0)
        model = build_model(Arch.MLP, [4, 8, 3], InitScheme.glorot(), seed=0)
        model = train_gd(model, g, eta=0.1, epochs=10).final_model
        cfg = AttackConfig(AttackKind.FEATURE_PGD, 0.2, steps=3, norm_scope=NormScope.PER_ROW)
        mean_sup = empirical_risk_samples(model, g, cfg)
        assert mean_sup > 0
        # MLP の empirical_risk はサンプル毎の sup の平均を返す
        risk = empirical_risk(model, g, cfg)
        assert risk.sup_distance == pytest.approx(mean_sup, rel=1e-12)
        # 平均は差分行列のスペクトルノルムを超えない
        attacked = run_attack(model, g, cfg)
        clean_logits = predict(model, g)
        attacked_logits = predict(model, attacked.graph)
        assert mean_sup <= output_distance(clean_logits, attacked_logits, g.test_mask) + 1e-12

    def test_train_target_measured_on_test_nodes(self, trained_gcn):
        """攻撃対象が学習ノードでも距離と正解率はテストノードで測る"""
        graph, traj = trained_gcn
        model = traj.final_model
        cfg = AttackConfig(AttackKind.STRUCTURE_PGD, 0.2, steps=5, target="train")
        result = run_attack(model, graph, cfg)
        attacked_logits = predict(model, result.graph)
        risk = empirical_risk(model, graph, cfg)
        assert risk.sup_distance == output_distance(predict(model, graph), attacked_logits, graph.test_mask)
        assert risk.attacked_accuracy == accuracy_from_logits(attacked_logits, graph.labels, graph.test_mask)
