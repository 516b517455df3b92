#!/usr/bin/env python3
"""
Weight initialization schemes and the Gaussian expected-norm bound
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractError, RankDeficientError
from .linalg import orthogonalize


ORTHOGONAL_MAX_REDRAWS = 10


class InitKind(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    ORTHOGONAL = "orthogonal"
    GLOROT = "glorot"
    KAIMING = "kaiming"
    CONSTANT = "constant"


class MeanReading(str, Enum):
    """How the Gaussian mean enters sqrt(||mu||^2 + tr(Sigma))"""

    VECTORIZED = "vectorized"  # rows*cols*mu^2
    SCALAR = "scalar"  # mu^2


@dataclass(frozen=True)
class InitScheme:
    kind: InitKind
    mu: float = 0.0
    sigma: float = 1.0
    beta: float = 1.0
    value: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", InitKind(self.kind))
        for name in ("mu", "sigma", "beta", "value"):
            if not math.isfinite(getattr(self, name)):
                raise ContractError(f"init parameter {name} must be finite")
        if self.sigma < 0 or self.beta < 0:
            raise ContractError("sigma and beta must be non-negative")

    @classmethod
    def gaussian(cls, mu: float = 0.0, sigma: float = 1.0) -> "InitScheme":
        return cls(InitKind.GAUSSIAN, mu=mu, sigma=sigma)

    @classmethod
    def uniform(cls, beta: float) -> "InitScheme":
        return cls(InitKind.UNIFORM, beta=beta)

    @classmethod
    def orthogonal(cls, beta: float = 1.0) -> "InitScheme":
        return cls(InitKind.ORTHOGONAL, beta=beta)

    @classmethod
    def glorot(cls) -> "InitScheme":
        return cls(InitKind.GLOROT)

    @classmethod
    def kaiming(cls) -> "InitScheme":
        return cls(InitKind.KAIMING)

    @classmethod
    def constant(cls, value: float) -> "InitScheme":
        return cls(InitKind.CONSTANT, value=value)

    def label(self) -> str:
        """Short human-readable tag used in records and chart legends"""
        if self.kind is InitKind.GAUSSIAN:
            return f"gaussian(mu={self.mu:g},sigma={self.sigma:g})"
        if self.kind in (InitKind.UNIFORM, InitKind.ORTHOGONAL):
            return f"{self.kind.value}(beta={self.beta:g})"
        if self.kind is InitKind.CONSTANT:
            return f"constant({self.value:g})"
        return self.kind.value


def initialize(scheme: InitScheme, rows: int, cols: int, seed: int) -> np.ndarray:
    """Draw a rows x cols weight matrix, deterministic per (scheme, shape, seed).

    Gaussian and uniform draws rescale one shared standard draw per
    (shape, seed), so norms are monotone in sigma / beta for a fixed seed.
    """
    if rows < 1 or cols < 1:
        raise ContractError(f"weight shape must be positive, got ({rows}, {cols})")
    rng = np.random.default_rng(seed)
    shape = (rows, cols)

    if scheme.kind is InitKind.GAUSSIAN:
        return scheme.mu + scheme.sigma * rng.standard_normal(shape)
    if scheme.kind is InitKind.UNIFORM:
        return scheme.beta * rng.uniform(-1.0, 1.0, shape)
    if scheme.kind is InitKind.ORTHOGONAL:
        return scheme.beta * _orthogonal(rng, rows, cols)
    if scheme.kind is InitKind.GLOROT:
        limit = math.sqrt(6.0 / (rows + cols))
        return limit * rng.uniform(-1.0, 1.0, shape)
    if scheme.kind is InitKind.KAIMING:
        # fan-in with the relu gain, whatever the activation
        return math.sqrt(2.0 / rows) * rng.standard_normal(shape)
    return np.full(shape, float(scheme.value))


def _orthogonal(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    tall = rows >= cols
    shape = (rows, cols) if tall else (cols, rows)
    for _ in range(ORTHOGONAL_MAX_REDRAWS):
        try:
            q = orthogonalize(rng.standard_normal(shape))
        except RankDeficientError:
            continue
        return q if tall else q.T
    raise RankDeficientError("could not draw a full-rank Gaussian matrix")


def expected_norm_bound(
    scheme: InitScheme,
    rows: int,
    cols: int,
    mean_reading: MeanReading = MeanReading.VECTORIZED,
) -> float | None:
    """Upper bound sqrt(||mu||^2 + tr(Sigma)) on E||W_0|| for Gaussian draws.

    Sigma is sigma^2 I over the vectorized entries; None for other schemes.
    """
    if scheme.kind is not InitKind.GAUSSIAN:
        return None
    entries = rows * cols
    if MeanReading(mean_reading) is MeanReading.SCALAR:
        mean_term = scheme.mu**2
    else:
        mean_term = entries * scheme.mu**2
    return math.sqrt(mean_term + entries * scheme.sigma**2)


def scheme_from_config(section: dict) -> InitScheme:
    """Build an InitScheme from the [init] config section"""
    kind = section.get("scheme", "gaussian")
    try:
        return InitScheme(
            InitKind(kind),
            mu=float(section.get("mu", 0.0)),
            sigma=float(section.get("sigma", 1.0)),
            beta=float(section.get("beta", 1.0)),
            value=float(section.get("value", 0.0)),
        )
    except ValueError as e:
        raise ContractError(f"invalid [init] section: {e}") from None
