#!/usr/bin/env python3
"""
Exception hierarchy for init-robust
"""


class InitRobustError(Exception):
    """Base class for every error raised by init-robust"""


class ContractError(InitRobustError, ValueError):
    """A precondition (shape, range, emptiness) was violated"""


class RankDeficientError(ContractError):
    """orthogonalize() received a matrix without full column rank"""


class ConvergenceError(InitRobustError, RuntimeError):
    """An iterative method ran out of iterations"""

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (best estimate {estimate!r})")
        self.estimate = estimate


class GraphFormatError(InitRobustError):
    """A dataset directory could not be parsed"""

    def __init__(self, path, line: int | None, message: str):
        location = f"{path}:{line}" if line is not None else f"{path}"
        super().__init__(f"{location}: {message}")
        self.path = path
        self.line = line


class EnumerationGuardError(ContractError):
    """Brute-force walk enumeration refused an instance that is too large"""


class DivergenceError(InitRobustError, RuntimeError):
    """Training loss became non-finite"""

    def __init__(self, epoch: int, loss: float):
        super().__init__(f"loss became non-finite at epoch {epoch}: {loss!r}")
        self.epoch = epoch
        self.loss = loss


class SmoothnessEstimateError(InitRobustError):
    """The smoothness constant cannot be estimated from the trajectory"""


class MissingBoundFieldError(ContractError):
    """A bound evaluator did not receive a field its formula needs"""

    def __init__(self, theorem_id: str, field: str):
        super().__init__(f"{theorem_id} requires '{field}'")
        self.theorem_id = theorem_id
        self.field = field


class BoundViolationError(InitRobustError, AssertionError):
    """An empirical distance exceeded an unconditional Lipschitz ceiling"""


class ConfigError(InitRobustError):
    """Invalid or unreadable configuration"""


class SchemaError(InitRobustError):
    """A records CSV does not carry the expected columns"""

    def __init__(self, message: str, missing=()):
        if missing:
            message = f"{message}: missing columns {', '.join(missing)}"
        super().__init__(message)
        self.missing = tuple(missing)
