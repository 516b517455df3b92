#!/usr/bin/env python3
"""
Empirical adversarial risk, accuracy and attack success rate
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .attacks import AttackConfig, AttackKind, NormScope, PerturbedGraph, run_attack
from .errors import BoundViolationError, ContractError
from .graph import Graph, normalize_adjacency, walk_sums
from .linalg import spectral_norm
from .nn import Arch, Model, forward_context


logger = logging.getLogger(__name__)

# slack for round-off in the hard Lipschitz check
CEILING_RTOL = 1e-9


@dataclass(frozen=True)
class RiskEstimate:
    """Empirical sup (a lower bound on the true adversarial risk)"""

    attack: AttackKind
    budget: float
    sup_distance: float
    trials: int
    clean_accuracy: float
    attacked_accuracy: float
    success_rate: float
    perturbation_norm: float = 0.0
    ceiling: Optional[float] = None
    flags: Tuple[str, ...] = ()

    def as_row(self) -> dict:
        return {
            "attack": self.attack.value,
            "budget": repr(self.budget),
            "trials": self.trials,
            "sup_distance": repr(self.sup_distance),
            "clean_acc": repr(self.clean_accuracy),
            "attacked_acc": repr(self.attacked_accuracy),
            "success_rate": repr(self.success_rate),
        }


def accuracy_from_logits(logits, labels, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ContractError("accuracy over an empty mask")
    # argmax returns the lowest index on ties
    predictions = np.argmax(np.asarray(logits)[mask], axis=1)
    return float(np.mean(predictions == np.asarray(labels)[mask]))


def accuracy(model: Model, graph: Graph, mask=None, self_loops: bool = False) -> float:
    """Fraction of masked nodes whose argmax logit equals the label"""
    mask = graph.test_mask if mask is None else mask
    logits = forward_context(model, graph.adjacency, graph.features, self_loops).logits
    return accuracy_from_logits(logits, graph.labels, mask)


def success_rate(clean: float, attacked: float) -> float:
    """clean - attacked, not clamped"""
    for value in (clean, attacked):
        if not 0.0 <= value <= 1.0:
            raise ContractError(f"accuracy must lie in [0, 1], got {value}")
    return clean - attacked


def output_distance(clean_logits, attacked_logits, mask) -> float:
    """Spectral norm of the logit difference restricted to masked rows"""
    mask = np.asarray(mask, dtype=bool)
    diff = np.asarray(attacked_logits)[mask] - np.asarray(clean_logits)[mask]
    return spectral_norm(diff)


def lipschitz_ceiling(model: Model, graph: Graph, epsilon: float, self_loops: bool = False) -> float:
    """prod ||W^(l)|| * eps * max(sum_u w_u, 1) for a GCN under a feature budget eps.

    Â has spectral norm at most 1 and tanh/relu are 1-Lipschitz entrywise,
    so the Frobenius change of the logits is at most prod ||W|| * eps.

    The walk-sum factor is clamped below at 1, so this is not the literal
    prod ||W|| * eps * sum_u w_u when that sum is under 1. It only matters
    on graphs with isolated nodes and no self-loops, where the walk sum can
    be 0 (an edgeless graph). The returned value is then prod ||W|| * eps,
    which still bounds the logit change. Any graph with an edge has a walk
    sum of at least 1 and gets the literal product.
    """
    if model.arch is not Arch.GCN:
        raise ContractError("lipschitz_ceiling is defined for GCN models")
    na = normalize_adjacency(graph, self_loops)
    walk_total = walk_sums(na, model.num_layers - 1).total
    return math.prod(model.weight_norms()) * epsilon * max(walk_total, 1.0)


def perturbation_size(graph: Graph, result: PerturbedGraph) -> float:
    """||X' - X|| for feature attacks, ||A' - A||_2 for structural ones"""
    if result.attack_kind.structural:
        return spectral_norm(np.asarray(result.graph.adjacency) - graph.adjacency)
    return result.delta_feature_norm


def trial_seed(seed: int, trial: int) -> int:
    """Sub-seed of trial r > 0; trial sets for growing ``trials`` are nested"""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def trial_configs(cfg: AttackConfig, trials: int, seed: Optional[int] = None) -> List[AttackConfig]:
    """The deterministic run first, then random restarts with distinct seeds"""
    if trials < 1:
        raise ContractError(f"trials must be >= 1, got {trials}")
    seed = cfg.seed if seed is None else seed
    configs = [cfg]
    for trial in range(1, trials):
        configs.append(replace(cfg, seed=trial_seed(seed, trial), random_start=True))
    return configs


def _runs(model, graph, configs, self_loops):
    for run_cfg in configs:
        result = run_attack(model, graph, run_cfg, self_loops)
        logits = forward_context(model, result.graph.adjacency, result.graph.features, self_loops).logits
        yield run_cfg, result, logits


def empirical_risk(
    model: Model,
    graph: Graph,
    cfg: AttackConfig,
    trials: int = 1,
    seed: Optional[int] = None,
    self_loops: bool = False,
    check_ceiling: bool = True,
) -> RiskEstimate:
    """Max over ``trials`` attack runs of the logit distance on the test nodes.

    ``cfg.target`` only picks the nodes whose loss a gradient attack
    ascends; distances and accuracies are always measured on the test mask.
    For an MLP every test row is an independent sample, so sup_distance
    is the mean per-sample sup taken over the same runs (the quantity of
    empirical_risk_samples). Accuracy fields come from the worst run
    (lowest attacked accuracy, earliest on ties). For global feature
    attacks on a GCN every run is checked against lipschitz_ceiling and
    BoundViolationError is raised on any excess.
    """
    mask = graph.test_mask
    clean_logits = forward_context(model, graph.adjacency, graph.features, self_loops).logits
    clean_acc = accuracy_from_logits(clean_logits, graph.labels, mask)

    ceiling = None
    if (
        check_ceiling
        and model.arch is Arch.GCN
        and cfg.kind is AttackKind.FEATURE_PGD
        and cfg.norm_scope is NormScope.GLOBAL
    ):
        ceiling = lipschitz_ceiling(model, graph, cfg.budget, self_loops)

    sup = 0.0
    per_sample = np.zeros(int(np.count_nonzero(mask)))
    largest_perturbation = 0.0
    worst_acc: Optional[float] = None
    flags = []
    for run_cfg, result, logits in _runs(model, graph, trial_configs(cfg, trials, seed), self_loops):
        distance = output_distance(clean_logits, logits, mask)
        if ceiling is not None and distance > ceiling * (1.0 + CEILING_RTOL) + CEILING_RTOL:
            raise BoundViolationError(
                f"output distance {distance!r} exceeds the Lipschitz ceiling {ceiling!r} "
                f"(seed {run_cfg.seed})"
            )
        attacked_acc = accuracy_from_logits(logits, graph.labels, mask)
        sup = max(sup, distance)
        per_sample = np.maximum(per_sample, _sample_distances(clean_logits, logits, mask))
        largest_perturbation = max(largest_perturbation, perturbation_size(graph, result))
        if worst_acc is None or attacked_acc < worst_acc:
            worst_acc = attacked_acc
        if result.flag is not None and result.flag.value not in flags:
            flags.append(result.flag.value)

    if model.arch is Arch.MLP:
        sup = float(per_sample.mean())
    estimate = RiskEstimate(
        attack=cfg.kind,
        budget=cfg.budget,
        sup_distance=sup,
        trials=trials,
        clean_accuracy=clean_acc,
        attacked_accuracy=worst_acc,
        success_rate=success_rate(clean_acc, worst_acc),
        perturbation_norm=largest_perturbation,
        ceiling=ceiling,
        flags=tuple(flags),
    )
    logger.debug(
        "%s budget=%g: sup=%.6g clean=%.4f attacked=%.4f",
        cfg.kind.value, cfg.budget, sup, clean_acc, worst_acc,
    )
    return estimate


def empirical_risk_samples(
    model: Model,
    graph: Graph,
    cfg: AttackConfig,
    trials: int = 1,
    seed: Optional[int] = None,
) -> float:
    """Mean over masked samples of the per-sample sup ||f(x'_i) - f(x_i)||_2.

    The adversarial risk of a plain feed-forward network, where every test
    sample is an independent input.
    """
    mask = graph.test_mask
    clean_logits = forward_context(model, graph.adjacency, graph.features).logits
    per_sample = np.zeros(int(np.count_nonzero(mask)))
    for _, _, logits in _runs(model, graph, trial_configs(cfg, trials, seed), False):
        per_sample = np.maximum(per_sample, _sample_distances(clean_logits, logits, mask))
    return float(per_sample.mean())


def _sample_distances(clean_logits, attacked_logits, mask) -> np.ndarray:
    """Row-wise ||f(x'_i) - f(x_i)||_2 over the masked rows"""
    mask = np.asarray(mask, dtype=bool)
    diff = np.asarray(attacked_logits)[mask] - np.asarray(clean_logits)[mask]
    return np.linalg.norm(diff, axis=1)
