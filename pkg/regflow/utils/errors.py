"""
Custom exception classes for regflow.

Every error carries the process exit code the CLI uses when it surfaces.
"""
from typing import Iterable, Optional


class RegFlowError(Exception):
    """Base exception for all regflow errors."""

    exit_code: int = 1


class ParseError(RegFlowError):
    """Malformed input file."""

    exit_code = 1

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ValidationError(RegFlowError):
    """Input violates a data-model invariant."""

    exit_code = 2


class BipartiteViolationError(ValidationError):
    """An arc connects two nodes of the same type."""

    def __init__(self, source: str, target: str, node_type: str):
        self.source = source
        self.target = target
        self.node_type = node_type
        super().__init__(
            f"arc ({source}, {target}) connects two nodes of type {node_type}"
        )


class MissingLabelsError(ValidationError):
    """Some nodes did not receive a label."""

    def __init__(self, missing: Iterable[str], what: str = "label"):
        self.missing = list(missing)
        preview = ", ".join(self.missing[:20])
        if len(self.missing) > 20:
            preview += f", ... ({len(self.missing)} total)"
        super().__init__(f"nodes without {what}: {preview}")


class DomainError(RegFlowError):
    """Parameter outside the domain of an operation."""

    exit_code = 2


class ConvergenceError(RegFlowError):
    """Power iteration did not reach the tolerance."""

    exit_code = 3

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"power iteration did not converge in {iterations} iterations "
            f"(last L1 residual {residual:.3e})"
        )


class PartitionError(RegFlowError):
    """Partition does not match the network it is evaluated on."""

    exit_code = 2


class ConfigError(RegFlowError):
    """Run or sweep configuration is invalid."""

    exit_code = 2
