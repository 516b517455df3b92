#!/usr/bin/env python3
"""
Evasion attacks on a trained model

Feature PGD (Frobenius ball), structural PGD over a relaxed adjacency,
DICE and random edge flips. Every attack returns a new Graph; inputs are
never mutated.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

import numpy as np

from .errors import ContractError
from .graph import Graph
from .nn import Arch, Model, backward, cross_entropy, forward_context


logger = logging.getLogger(__name__)

DEFAULT_PGD_STEPS = 100
DEFAULT_PGD_STEP_SIZE = 0.1
DICE_MAX_RETRIES = 100
FEATURE_TOL = 1e-9


class AttackKind(str, Enum):
    FEATURE_PGD = "feature_pgd"
    STRUCTURE_PGD = "structure_pgd"
    DICE = "dice"
    RANDOM_FLIP = "random_flip"

    @property
    def structural(self) -> bool:
        return self is not AttackKind.FEATURE_PGD


class NormScope(str, Enum):
    GLOBAL = "global"  # ||X' - X||_F <= eps
    PER_ROW = "per_row"  # ||x'_i - x_i||_2 <= eps for every sample


class AttackFlag(str, Enum):
    ZERO_GRADIENT = "zero_gradient"
    BELOW_ONE_FLIP = "below_one_flip"
    POOL_EXHAUSTED = "pool_exhausted"


@dataclass(frozen=True)
class AttackConfig:
    """One attack run.

    ``budget`` is the Euclidean radius for feature attacks and the flip
    rate (fraction of |E|) for structural ones. ``target`` names the mask
    whose cross-entropy the gradient attacks ascend.
    """

    kind: AttackKind
    budget: float
    steps: int = DEFAULT_PGD_STEPS
    step_size: float = DEFAULT_PGD_STEP_SIZE
    seed: int = 0
    norm_scope: NormScope = NormScope.GLOBAL
    random_start: bool = False
    target: str = "test"

    def __post_init__(self):
        object.__setattr__(self, "kind", AttackKind(self.kind))
        object.__setattr__(self, "norm_scope", NormScope(self.norm_scope))
        if not math.isfinite(self.budget) or self.budget < 0:
            raise ContractError(f"attack budget must be finite and >= 0, got {self.budget}")
        if self.kind.structural and self.budget > 1:
            raise ContractError(f"flip rate must be <= 1, got {self.budget}")
        if self.kind in (AttackKind.FEATURE_PGD, AttackKind.STRUCTURE_PGD):
            if self.steps < 1:
                raise ContractError(f"PGD needs steps >= 1, got {self.steps}")
            if self.step_size <= 0:
                raise ContractError(f"PGD step size must be positive, got {self.step_size}")


@dataclass(frozen=True)
class PerturbedGraph:
    graph: Graph
    delta_feature_norm: float
    num_flips: int
    attack_kind: AttackKind
    flag: Optional[AttackFlag] = None
    requested_flips: int = 0


def flip_budget(rate: float, num_edges: int) -> int:
    """floor(rate * |E|), robust to rates such as 0.1 * 30 landing at 2.999..."""
    return int(math.floor(rate * num_edges + 1e-9))


def _unchanged(graph: Graph, kind: AttackKind, flag=None, requested: int = 0) -> PerturbedGraph:
    return PerturbedGraph(graph, 0.0, 0, kind, flag, requested)


def attack_loss(model: Model, graph: Graph, mask=None, self_loops: bool = False) -> float:
    """Masked cross-entropy the attacks ascend on (test nodes by default)"""
    mask = graph.test_mask if mask is None else mask
    context = forward_context(model, graph.adjacency, graph.features, self_loops)
    return cross_entropy(context.logits, graph.labels, mask)


# ---------------------------------------------------------------------------
# Feature PGD
# ---------------------------------------------------------------------------


def _project_features(delta: np.ndarray, radius: float, scope: NormScope) -> np.ndarray:
    if scope is NormScope.PER_ROW:
        norms = np.linalg.norm(delta, axis=1)
        scale = np.ones_like(norms)
        over = norms > radius
        scale[over] = radius / norms[over]
        return delta * scale[:, None]
    norm = float(np.linalg.norm(delta))
    if norm > radius:
        return delta * (radius / norm)
    return delta


def _normalized_step(grad: np.ndarray, scope: NormScope) -> np.ndarray:
    if scope is NormScope.PER_ROW:
        norms = np.linalg.norm(grad, axis=1)
        out = np.zeros_like(grad)
        nonzero = norms > 0
        out[nonzero] = grad[nonzero] / norms[nonzero, None]
        return out
    return grad / float(np.linalg.norm(grad))


def feature_distance(x, x_adv, scope: NormScope = NormScope.GLOBAL) -> float:
    delta = np.asarray(x_adv, dtype=np.float64) - np.asarray(x, dtype=np.float64)
    if NormScope(scope) is NormScope.PER_ROW:
        return float(np.linalg.norm(delta, axis=1).max())
    return float(np.linalg.norm(delta))


def feature_pgd(model: Model, graph: Graph, cfg: AttackConfig, self_loops: bool = False) -> PerturbedGraph:
    """Projected gradient ascent on X with normalized steps.

    Returns the best-loss iterate seen (the clean features included), so the
    attack loss never ends below its starting value.
    """
    if cfg.kind is not AttackKind.FEATURE_PGD:
        raise ContractError(f"feature_pgd called with {cfg.kind.value}")
    if cfg.budget == 0:
        return _unchanged(graph, cfg.kind)

    mask = graph.mask(cfg.target)
    x0 = graph.features
    adjacency = graph.adjacency

    def loss_and_grad(x):
        context = forward_context(model, adjacency, x, self_loops)
        loss = cross_entropy(context.logits, graph.labels, mask)
        return loss, backward(model, context, graph.labels, mask).input

    clean_loss, clean_grad = loss_and_grad(x0)
    x = np.array(x0)
    grad = clean_grad
    if cfg.random_start:
        rng = np.random.default_rng(cfg.seed)
        noise = rng.standard_normal(x0.shape)
        noise = _project_features(noise * (cfg.budget / float(np.linalg.norm(noise))), cfg.budget, cfg.norm_scope)
        x = x0 + noise * rng.random()
        _, grad = loss_and_grad(x)
    elif not np.any(clean_grad):
        logger.debug("feature PGD: zero gradient at the clean input")
        return _unchanged(graph, cfg.kind, AttackFlag.ZERO_GRADIENT)

    best_x, best_loss = x0, clean_loss
    for _ in range(cfg.steps):
        if not np.any(grad):
            break
        step = cfg.step_size * _normalized_step(grad, cfg.norm_scope)
        x = x0 + _project_features(x + step - x0, cfg.budget, cfg.norm_scope)
        loss, grad = loss_and_grad(x)
        if loss > best_loss:
            best_x, best_loss = x, loss

    logger.debug("feature PGD: loss %.6g -> %.6g", clean_loss, best_loss)
    return PerturbedGraph(
        graph=graph.with_features(best_x),
        delta_feature_norm=feature_distance(x0, best_x, cfg.norm_scope),
        num_flips=0,
        attack_kind=cfg.kind,
    )


# ---------------------------------------------------------------------------
# Structural attacks
# ---------------------------------------------------------------------------


def _flip_pairs(adjacency: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    a = np.array(adjacency)
    a[rows, cols] = 1.0 - a[rows, cols]
    a[cols, rows] = a[rows, cols]
    return a


def _project_scores(s: np.ndarray, k: int) -> np.ndarray:
    """Euclidean projection onto {0 <= s <= 1, sum(s) <= k} by bisection"""
    clipped = np.clip(s, 0.0, 1.0)
    if clipped.sum() <= k:
        return clipped
    lo, hi = 0.0, float(s.max())
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.clip(s - mid, 0.0, 1.0).sum() > k:
            lo = mid
        else:
            hi = mid
    return np.clip(s - hi, 0.0, 1.0)


def structure_pgd(model: Model, graph: Graph, cfg: AttackConfig, self_loops: bool = False) -> PerturbedGraph:
    """Gradient ascent on continuous flip scores, then top-k discretization.

    Scores live on the upper triangle; the relaxed adjacency is
    A + (1 - 2A) * S and is re-normalized at every step. Ties in the final
    ranking go to the lexicographically smaller (i, j). A score gradient
    that is zero at the first step carries no ranking, so the graph is
    returned unchanged with the zero_gradient flag.
    """
    if cfg.kind is not AttackKind.STRUCTURE_PGD:
        raise ContractError(f"structure_pgd called with {cfg.kind.value}")
    if model.arch not in (Arch.GCN, Arch.GIN):
        raise ContractError(f"structure_pgd needs a GCN or GIN model, got {model.arch.value}")
    k = flip_budget(cfg.budget, graph.num_edges)
    if cfg.budget == 0:
        return _unchanged(graph, cfg.kind)
    if k < 1:
        logger.debug("structure PGD: rate %g of %d edges is below one flip", cfg.budget, graph.num_edges)
        return _unchanged(graph, cfg.kind, AttackFlag.BELOW_ONE_FLIP)

    mask = graph.mask(cfg.target)
    a = graph.adjacency
    rows, cols = np.triu_indices(graph.n, k=1)
    direction = 1.0 - 2.0 * a[rows, cols]
    s = np.zeros(rows.shape[0])
    if cfg.random_start:
        rng = np.random.default_rng(cfg.seed)
        s = _project_scores(rng.random(s.shape[0]) * (k / s.shape[0]), k)

    for t in range(cfg.steps):
        scores = np.zeros_like(a)
        scores[rows, cols] = s
        scores = scores + scores.T
        relaxed = a + (1.0 - 2.0 * a) * scores
        context = forward_context(model, relaxed, graph.features, self_loops)
        grad_a = backward(model, context, graph.labels, mask, adjacency_grad=True).adjacency
        grad = (grad_a[rows, cols] + grad_a[cols, rows]) * direction
        norm = float(np.linalg.norm(grad))
        if norm == 0.0:
            if t == 0:
                logger.debug("structure PGD: zero score gradient, graph left unchanged")
                return _unchanged(graph, cfg.kind, AttackFlag.ZERO_GRADIENT, k)
            break
        lr = cfg.step_size * k / math.sqrt(t + 1)
        s = _project_scores(s + lr * grad / norm, k)

    chosen = np.argsort(-s, kind="stable")[:k]
    perturbed = _flip_pairs(a, rows[chosen], cols[chosen])
    return PerturbedGraph(graph.with_adjacency(perturbed), 0.0, k, cfg.kind, None, k)


class _Pool:
    """Candidate pairs with O(1) uniform draw-and-remove"""

    def __init__(self, rows: np.ndarray, cols: np.ndarray):
        self.rows = np.array(rows)
        self.cols = np.array(cols)
        self.size = int(self.rows.shape[0])

    def __bool__(self):
        return self.size > 0

    def pop(self, rng: np.random.Generator):
        index = int(rng.integers(self.size))
        pair = (int(self.rows[index]), int(self.cols[index]))
        last = self.size - 1
        self.rows[index], self.cols[index] = self.rows[last], self.cols[last]
        self.size = last
        return pair


def dice_attack(graph: Graph, cfg: AttackConfig) -> PerturbedGraph:
    """Disconnect Internally, Connect Externally.

    Each of the floor(r |E|) modifications flips a fair coin between
    deleting an intra-class edge and adding an inter-class non-edge, falling
    back to the other pool when one is empty. A deletion that would isolate
    a node is discarded and re-drawn, up to DICE_MAX_RETRIES times.
    """
    if cfg.kind is not AttackKind.DICE:
        raise ContractError(f"dice_attack called with {cfg.kind.value}")
    k = flip_budget(cfg.budget, graph.num_edges)
    if k == 0:
        return _unchanged(graph, cfg.kind, requested=0)

    rng = np.random.default_rng(cfg.seed)
    a = np.array(graph.adjacency)
    labels = graph.labels
    rows, cols = np.triu_indices(graph.n, k=1)
    present = a[rows, cols] == 1
    same = labels[rows] == labels[cols]
    deletions = _Pool(rows[present & same], cols[present & same])
    additions = _Pool(rows[~present & ~same], cols[~present & ~same])
    degrees = a.sum(axis=1)

    def delete_one() -> bool:
        for _ in range(DICE_MAX_RETRIES):
            if not deletions:
                return False
            i, j = deletions.pop(rng)
            if degrees[i] > 1 and degrees[j] > 1:
                a[i, j] = a[j, i] = 0.0
                degrees[i] -= 1
                degrees[j] -= 1
                return True
        return False

    def add_one() -> bool:
        if not additions:
            return False
        i, j = additions.pop(rng)
        a[i, j] = a[j, i] = 1.0
        degrees[i] += 1
        degrees[j] += 1
        return True

    done = 0
    flag = None
    while done < k:
        first, second = (delete_one, add_one) if rng.random() < 0.5 else (add_one, delete_one)
        if first() or second():
            done += 1
            continue
        flag = AttackFlag.POOL_EXHAUSTED
        logger.debug("DICE: pools exhausted after %d of %d flips", done, k)
        break

    return PerturbedGraph(graph.with_adjacency(a), 0.0, done, cfg.kind, flag, k)


def random_flip(graph: Graph, cfg: AttackConfig) -> PerturbedGraph:
    """Flip floor(r |E|) distinct upper-triangle pairs uniformly at random"""
    if cfg.kind is not AttackKind.RANDOM_FLIP:
        raise ContractError(f"random_flip called with {cfg.kind.value}")
    k = flip_budget(cfg.budget, graph.num_edges)
    if k == 0:
        return _unchanged(graph, cfg.kind)
    rng = np.random.default_rng(cfg.seed)
    rows, cols = np.triu_indices(graph.n, k=1)
    chosen = np.sort(rng.choice(rows.shape[0], size=k, replace=False))
    perturbed = _flip_pairs(graph.adjacency, rows[chosen], cols[chosen])
    return PerturbedGraph(graph.with_adjacency(perturbed), 0.0, k, cfg.kind, None, k)


def run_attack(model: Model, graph: Graph, cfg: AttackConfig, self_loops: bool = False) -> PerturbedGraph:
    if cfg.kind is AttackKind.FEATURE_PGD:
        return feature_pgd(model, graph, cfg, self_loops)
    if cfg.kind is AttackKind.STRUCTURE_PGD:
        return structure_pgd(model, graph, cfg, self_loops)
    if cfg.kind is AttackKind.DICE:
        return dice_attack(graph, cfg)
    return random_flip(graph, cfg)


# ---------------------------------------------------------------------------
# Independent budget verifier
# ---------------------------------------------------------------------------


def verify_perturbation(original: Graph, result: PerturbedGraph, cfg: AttackConfig) -> List[str]:
    """Re-check a PerturbedGraph against its budget contract.

    Returns a list of violation messages (empty when the result is sound).
    Nothing reported by the attack itself is trusted.
    """
    problems = []
    a = np.asarray(result.graph.adjacency)
    if not np.array_equal(a, a.T):
        problems.append("adjacency is not symmetric")
    if not np.all((a == 0) | (a == 1)):
        problems.append("adjacency is not binary")
    if np.any(np.diag(a) != 0):
        problems.append("adjacency has a non-zero diagonal")
    if not np.array_equal(result.graph.labels, original.labels):
        problems.append("labels changed")
    for name in ("train", "val", "test"):
        if not np.array_equal(result.graph.mask(name), original.mask(name)):
            problems.append(f"{name} mask changed")

    if not cfg.kind.structural:
        if not np.array_equal(a, original.adjacency):
            problems.append("feature attack changed the adjacency")
        distance = feature_distance(original.features, result.graph.features, cfg.norm_scope)
        if distance > cfg.budget + FEATURE_TOL:
            problems.append(f"feature perturbation {distance!r} exceeds budget {cfg.budget!r}")
        if abs(distance - result.delta_feature_norm) > FEATURE_TOL:
            problems.append("reported feature distance does not match")
        return problems

    if not np.array_equal(result.graph.features, original.features):
        problems.append("structural attack changed the features")
    rows, cols = np.triu_indices(original.n, k=1)
    before = original.adjacency[rows, cols]
    after = a[rows, cols]
    changed = np.flatnonzero(before != after)
    if changed.size != result.num_flips:
        problems.append(f"{changed.size} pairs changed, {result.num_flips} reported")
    expected = flip_budget(cfg.budget, original.num_edges)
    if result.flag is AttackFlag.POOL_EXHAUSTED:
        if changed.size > expected:
            problems.append(f"{changed.size} flips exceed budget {expected}")
    elif result.flag in (AttackFlag.BELOW_ONE_FLIP, AttackFlag.ZERO_GRADIENT):
        if changed.size != 0:
            problems.append(f"{result.flag.value} result changed the graph")
    elif changed.size != expected:
        problems.append(f"{changed.size} flips, budget requires exactly {expected}")

    if cfg.kind is AttackKind.DICE:
        labels = original.labels
        for index in changed:
            i, j = rows[index], cols[index]
            if before[index] == 1 and labels[i] != labels[j]:
                problems.append(f"DICE deleted inter-class edge ({i}, {j})")
            if before[index] == 0 and labels[i] == labels[j]:
                problems.append(f"DICE added intra-class edge ({i}, {j})")
    return problems
