#!/usr/bin/env python3
"""
Closed-form robustness bounds gamma(epsilon) from initial and optimal
weight norms, in the 2^t and (1 + eta L)^t growth variants
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .errors import ContractError, MissingBoundFieldError
from .initializers import InitScheme, MeanReading, expected_norm_bound


logger = logging.getLogger(__name__)


class Variant(str, Enum):
    POW2 = "pow2"
    SHARPENED = "sharpened"


class TheoremId(str, Enum):
    GCN_FEATURE = "gcn_feature"
    GCN_STRUCTURE = "gcn_structure"
    GIN_FEATURE = "gin_feature"
    DNN = "dnn"
    STRONG_CONVEX = "strong_convex"
    GAUSSIAN_EXPECTED = "gaussian_expected"


@dataclass(frozen=True)
class BoundInput:
    epsilon: float
    epochs: int
    w0_norms: Tuple[float, ...]
    wstar_norms: Tuple[float, ...]
    eta: Optional[float] = None
    smoothness: Optional[float] = None
    walk_total: Optional[float] = None
    x_norm: Optional[float] = None
    feat_bound: Optional[float] = None
    max_deg: Optional[int] = None
    strong_convexity: Optional[float] = None
    converged: Optional[bool] = None
    variant: Variant = Variant.POW2

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "w0_norms", tuple(float(v) for v in self.w0_norms))
        object.__setattr__(self, "wstar_norms", tuple(float(v) for v in self.wstar_norms))
        if len(self.w0_norms) != len(self.wstar_norms) or not self.w0_norms:
            raise ContractError("w0_norms and wstar_norms need one entry per layer")
        if self.epsilon < 0:
            raise ContractError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.epochs < 0:
            raise ContractError(f"epochs must be non-negative, got {self.epochs}")
        if any(v < 0 for v in self.w0_norms + self.wstar_norms):
            raise ContractError("weight norms must be non-negative")
        if self.strong_convexity is not None:
            if self.strong_convexity <= 0:
                raise ContractError("strong convexity mu must be positive")
            if self.smoothness is not None and self.strong_convexity > self.smoothness:
                raise ContractError("strong convexity mu must not exceed L")

    @property
    def num_layers(self) -> int:
        return len(self.w0_norms)

    @property
    def eta_l(self) -> Optional[float]:
        if self.eta is None or self.smoothness is None:
            return None
        return self.eta * self.smoothness


@dataclass(frozen=True)
class BoundReport:
    """gamma = scale * prod(per_layer_factors) * tail"""

    theorem_id: TheoremId
    variant: Variant
    epsilon: float
    epochs: int
    gamma: float
    per_layer_factors: Tuple[float, ...]
    scale: float
    tail: float
    eta_l_ok: Optional[bool] = None
    converged: Optional[bool] = None
    notes: Tuple[str, ...] = field(default=())

    @property
    def assumption_flags(self) -> dict:
        return {"eta_L_ok": self.eta_l_ok, "converged": self.converged}

    def rederive(self) -> float:
        return _combine(self.scale, self.per_layer_factors, self.tail)

    def as_row(self, num_layers: Optional[int] = None) -> dict:
        """One CSV row: theorem_id, variant, epsilon, epochs, gamma, factor_i, flags"""
        row = {
            "theorem_id": self.theorem_id.value,
            "variant": self.variant.value,
            "epsilon": repr(self.epsilon),
            "epochs": self.epochs,
            "gamma": repr(self.gamma),
        }
        width = num_layers or len(self.per_layer_factors)
        for i in range(width):
            value = self.per_layer_factors[i] if i < len(self.per_layer_factors) else ""
            row[f"factor_{i + 1}"] = repr(value) if value != "" else ""
        row["eta_L_ok"] = _flag(self.eta_l_ok)
        row["converged"] = _flag(self.converged)
        return row


def _flag(value: Optional[bool]) -> str:
    return "" if value is None else str(int(value))


def _combine(scale: float, factors: Sequence[float], tail: float) -> float:
    return scale * math.prod(factors) * tail


def growth_base(b: BoundInput) -> float:
    """c = 2 for pow2, c = 1 + eta L for the sharpened variant"""
    if b.variant is Variant.POW2:
        return 2.0
    if b.eta is None:
        raise MissingBoundFieldError(b.variant.value, "eta")
    if b.smoothness is None:
        raise MissingBoundFieldError(b.variant.value, "smoothness")
    return 1.0 + b.eta * b.smoothness


def layer_factors(b: BoundInput, w0_norms: Optional[Sequence[float]] = None) -> List[float]:
    """F_i = c^t ||W_0^(i)|| + 2 c^t ||W_*^(i)||, shared by every bound"""
    growth = _safe_pow(growth_base(b), b.epochs)
    w0 = b.w0_norms if w0_norms is None else w0_norms
    # all-zero layers stay 0 even when the growth term overflows
    return [growth * (w + 2.0 * ws) if w or ws else 0.0 for w, ws in zip(w0, b.wstar_norms)]


def _flags(b: BoundInput):
    eta_l = b.eta_l
    return (None if eta_l is None else eta_l <= 1.0), b.converged


def _report(theorem: TheoremId, b: BoundInput, factors, scale, tail, notes=()) -> BoundReport:
    eta_l_ok, converged = _flags(b)
    return BoundReport(
        theorem_id=theorem,
        variant=b.variant,
        epsilon=b.epsilon,
        epochs=b.epochs,
        gamma=_combine(scale, factors, tail),
        per_layer_factors=tuple(factors),
        scale=scale,
        tail=tail,
        eta_l_ok=eta_l_ok,
        converged=converged,
        notes=tuple(notes),
    )


def _require(b: BoundInput, theorem: TheoremId, name: str):
    value = getattr(b, name)
    if value is None:
        raise MissingBoundFieldError(theorem.value, name)
    return value


def gcn_feature_bound(b: BoundInput) -> BoundReport:
    """gamma = eps * prod F_i * sum_u w_u"""
    walk_total = _require(b, TheoremId.GCN_FEATURE, "walk_total")
    return _report(TheoremId.GCN_FEATURE, b, layer_factors(b), b.epsilon, walk_total)


def gcn_structural_bound(b: BoundInput) -> BoundReport:
    """gamma = eps * P * ||X|| * (1 + T P) with P = prod F_i.

    The stated epoch count of this bound is read as t (the training
    epochs), which is what the derivation uses.
    """
    x_norm = _require(b, TheoremId.GCN_STRUCTURE, "x_norm")
    factors = layer_factors(b)
    product = math.prod(factors)
    tail = x_norm * (1.0 + b.num_layers * product)
    return _report(TheoremId.GCN_STRUCTURE, b, factors, b.epsilon, tail)


def gin_feature_bound(b: BoundInput) -> BoundReport:
    """gamma = prod F_i * (B T max_deg + eps)"""
    feat_bound = _require(b, TheoremId.GIN_FEATURE, "feat_bound")
    max_deg = _require(b, TheoremId.GIN_FEATURE, "max_deg")
    tail = feat_bound * b.num_layers * max_deg + b.epsilon
    return _report(TheoremId.GIN_FEATURE, b, layer_factors(b), 1.0, tail)


def dnn_bound(b: BoundInput) -> BoundReport:
    """gamma = eps * prod F_i"""
    return _report(TheoremId.DNN, b, layer_factors(b), b.epsilon, 1.0)


def strong_convex_bound(b: BoundInput) -> BoundReport:
    """gamma = eps * prod((1 - mu/L)^t ||W_0|| + 2 ||W_*||)"""
    mu = _require(b, TheoremId.STRONG_CONVEX, "strong_convexity")
    smoothness = _require(b, TheoremId.STRONG_CONVEX, "smoothness")
    contraction = (1.0 - mu / smoothness) ** b.epochs
    factors = [contraction * w + 2.0 * ws for w, ws in zip(b.w0_norms, b.wstar_norms)]
    return _report(TheoremId.STRONG_CONVEX, b, factors, b.epsilon, 1.0)


def gaussian_expected_bound(
    b: BoundInput,
    scheme: InitScheme,
    shapes: Sequence[Tuple[int, int]],
    mean_reading: MeanReading = MeanReading.VECTORIZED,
) -> BoundReport:
    """GCN feature bound with E||W_0|| replaced by sqrt(||mu||^2 + tr(Sigma))"""
    walk_total = _require(b, TheoremId.GAUSSIAN_EXPECTED, "walk_total")
    if len(shapes) != b.num_layers:
        raise ContractError(f"need {b.num_layers} layer shapes, got {len(shapes)}")
    expected = [expected_norm_bound(scheme, rows, cols, mean_reading) for rows, cols in shapes]
    if any(value is None for value in expected):
        raise ContractError("gaussian_expected_bound requires a Gaussian scheme")
    factors = layer_factors(b, expected)
    return _report(TheoremId.GAUSSIAN_EXPECTED, b, factors, b.epsilon, walk_total)


# ---------------------------------------------------------------------------
# Weight-norm recursion checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RecursionRow:
    epoch: int
    layer: int
    norm: float
    ceiling: float
    tight_ceiling: float
    slack: float
    passed: bool


@dataclass(frozen=True)
class RecursionReport:
    rows: Tuple[RecursionRow, ...]
    passed: bool

    @property
    def failures(self) -> List[RecursionRow]:
        return [row for row in self.rows if not row.passed]

    @property
    def min_slack(self) -> float:
        return min(row.slack for row in self.rows)


def _check_rows(norms, w0, wstar, ceiling_fn, tight_fn, tolerance) -> RecursionReport:
    rows = []
    for epoch, epoch_norms in enumerate(norms):
        for layer, norm in enumerate(epoch_norms):
            ceiling = ceiling_fn(epoch, w0[layer], wstar[layer])
            tight = tight_fn(epoch, w0[layer], wstar[layer])
            slack = ceiling - float(norm)
            rows.append(
                RecursionRow(epoch, layer, float(norm), ceiling, tight, slack, slack >= -tolerance)
            )
    return RecursionReport(tuple(rows), all(row.passed for row in rows))


def _wstar(trajectory, wstar_norms) -> List[float]:
    wstar = trajectory.wstar_norms if wstar_norms is None else wstar_norms
    if wstar is None or len(wstar) != trajectory.num_layers:
        raise ContractError("need one W* norm per layer")
    return [float(v) for v in wstar]


def _safe_pow(base: float, exponent: int) -> float:
    try:
        return base**exponent
    except OverflowError:
        return math.inf


def norm_recursion_check(
    trajectory,
    smoothness: float,
    eta: float,
    wstar_norms: Optional[Sequence[float]] = None,
    tolerance: float = 1e-9,
) -> RecursionReport:
    """Check ||W_t|| <= (1 + eta L)^t ||W_0|| + 2^(t+1) ||W_*|| at every epoch.

    ``tight_ceiling`` keeps the geometric sum (2^(t+1) - 1) before its
    final relaxation. Failures are reported, never raised.
    """
    wstar = _wstar(trajectory, wstar_norms)
    w0 = trajectory.w0_norms
    growth = 1.0 + eta * smoothness

    def ceiling(t, a, s):
        return _safe_pow(growth, t) * a + _safe_pow(2.0, t + 1) * s

    def tight(t, a, s):
        return _safe_pow(growth, t) * a + (_safe_pow(2.0, t + 1) - 1.0) * s

    report = _check_rows(trajectory.per_epoch_norms, w0, wstar, ceiling, tight, tolerance)
    if not report.passed:
        logger.warning("norm recursion violated at %d (epoch, layer) cells", len(report.failures))
    return report


def strong_convexity_check(
    trajectory,
    strong_convexity: float,
    smoothness: float,
    wstar_norms: Optional[Sequence[float]] = None,
    tolerance: float = 1e-9,
) -> RecursionReport:
    """Check ||W_t|| <= (1 - mu/L)^t ||W_0|| + 2 ||W_*|| at every epoch"""
    if not 0 < strong_convexity <= smoothness:
        raise ContractError("need 0 < mu <= L")
    wstar = _wstar(trajectory, wstar_norms)
    w0 = trajectory.w0_norms
    rate = 1.0 - strong_convexity / smoothness

    def ceiling(t, a, s):
        return rate**t * a + 2.0 * s

    def tight(t, a, s):
        return rate**t * a + (1.0 + rate**t) * s

    return _check_rows(trajectory.per_epoch_norms, w0, wstar, ceiling, tight, tolerance)


# ---------------------------------------------------------------------------
# Trajectory helpers
# ---------------------------------------------------------------------------


def bound_input_from_trajectory(
    trajectory,
    epsilon: float,
    variant: Variant = Variant.POW2,
    epoch: Optional[int] = None,
    **graph_terms,
) -> BoundInput:
    """BoundInput at ``epoch`` (default: the last) from a finished trajectory"""
    if trajectory.wstar_norms is None:
        raise ContractError("trajectory has no W* proxy; run finalize_trajectory first")
    return BoundInput(
        epsilon=epsilon,
        epochs=trajectory.epochs if epoch is None else epoch,
        w0_norms=trajectory.w0_norms,
        wstar_norms=trajectory.wstar_norms,
        eta=trajectory.eta,
        smoothness=trajectory.smoothness_estimate,
        converged=trajectory.converged,
        variant=variant,
        **graph_terms,
    )


def bounds_for_arch(
    arch: str,
    b: BoundInput,
    scheme: Optional[InitScheme] = None,
    shapes: Optional[Sequence[Tuple[int, int]]] = None,
    mean_reading: MeanReading = MeanReading.VECTORIZED,
) -> List[BoundReport]:
    """Every bound applicable to the architecture.

    The sharpened variant is skipped (with a debug log) when no smoothness
    estimate exists.
    """
    arch = str(getattr(arch, "value", arch))
    if b.variant is Variant.SHARPENED and b.eta_l is None:
        logger.debug("no smoothness estimate; sharpened bounds skipped")
        return []
    reports = []
    if arch == "gcn":
        if b.walk_total is not None:
            reports.append(gcn_feature_bound(b))
        if b.x_norm is not None:
            reports.append(gcn_structural_bound(b))
        if scheme is not None and shapes is not None and b.walk_total is not None:
            if scheme.kind.value == "gaussian":
                reports.append(gaussian_expected_bound(b, scheme, shapes, mean_reading))
    elif arch == "gin":
        if b.feat_bound is not None and b.max_deg is not None:
            reports.append(gin_feature_bound(b))
    else:
        reports.append(dnn_bound(b))
    return reports


def with_epsilon(b: BoundInput, epsilon: float) -> BoundInput:
    return replace(b, epsilon=epsilon)
