"""pollwatch — exception hierarchy.

Library code raises these; the CLI turns them into a red message and exit 1.
"""

from __future__ import annotations

from typing import Optional


class PollwatchError(Exception):
    """Base for every error pollwatch raises on purpose."""


class ConfigError(PollwatchError, ValueError):
    pass


class SchemaError(PollwatchError, ValueError):
    pass


class PopulationError(PollwatchError, ValueError):
    pass


class VotingError(PollwatchError, ValueError):
    pass


class PollError(PollwatchError, ValueError):
    pass


class FraudError(PollwatchError, ValueError):
    pass


class EvaluationError(PollwatchError, ValueError):
    pass


class ConvergenceError(PollwatchError):
    """Solver stopped on its iteration budget before reaching tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(f"{message} (residual {residual:.3g} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


class DetectorError(PollwatchError):
    """A detection stage failed. `stage` names it; `cluster` is set for per-cluster fits."""

    def __init__(self, message: str, stage: str = "", cluster: Optional[int] = None):
        prefix = f"[{stage}] " if stage else ""
        where = f"cluster {cluster}: " if cluster is not None else ""
        super().__init__(f"{prefix}{where}{message}")
        self.stage = stage
        self.cluster = cluster
