"""
Two-level map equation.

L(M) = q H(Q) + sum_m p_m H(P^m), written in the expanded form

    L = plogp(q) - 2 sum_m plogp(q_m) - sum_i plogp(p_i) + sum_m plogp(q_m + p_m)

with q_m the encoded flow leaving module m and p_m its visit rate.
Logarithms are base 2 and 0 log 0 = 0.
"""
from dataclasses import dataclass
from typing import IO, Iterable, Optional

import numpy as np

from regflow.services.flow import FlowField, transition_masses
from regflow.services.graph import TextSource, iter_lines
from regflow.utils.errors import DomainError, ParseError, PartitionError


def plogp(x) -> np.ndarray:
    """x log2 x elementwise with 0 log 0 = 0."""
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log2(np.where(x > 0, x, 1.0)), 0.0)


def entropy(p) -> float:
    """Shannon entropy in bits."""
    return float(-plogp(p).sum())


@dataclass(frozen=True, eq=False)
class Partition:
    """
    Node to module assignment with contiguous module ids.

    `module_flow` and `exit_flow` are filled once the partition is bound
    to a FlowField.
    """

    module_of: np.ndarray
    n_modules: int
    module_flow: Optional[np.ndarray] = None
    exit_flow: Optional[np.ndarray] = None

    @classmethod
    def from_membership(cls, membership: Iterable[int]) -> "Partition":
        """Relabel arbitrary module ids to 0..M-1 (sorted by original id)."""
        raw = np.asarray(membership if isinstance(membership, np.ndarray) else list(membership))
        if raw.ndim != 1:
            raise PartitionError("membership must be one-dimensional")
        if raw.size == 0:
            return cls(module_of=np.zeros(0, dtype=np.int64), n_modules=0)
        _, module_of = np.unique(raw, return_inverse=True)
        module_of = module_of.astype(np.int64)
        return cls(module_of=module_of, n_modules=int(module_of.max()) + 1)

    @property
    def n_nodes(self) -> int:
        return int(self.module_of.size)

    @property
    def exit_total(self) -> Optional[float]:
        """Index codebook rate q = sum_m q_m."""
        return None if self.exit_flow is None else float(self.exit_flow.sum())

    def bind(self, flows: FlowField) -> "Partition":
        """Attach per-module visit rates and exit flows."""
        _check(flows, self)
        _, exit_node = transition_masses(flows, self.module_of)
        return Partition(
            module_of=self.module_of,
            n_modules=self.n_modules,
            module_flow=np.bincount(self.module_of, weights=flows.visit_rate, minlength=self.n_modules),
            exit_flow=np.bincount(self.module_of, weights=exit_node, minlength=self.n_modules),
        )

    def modules(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.module_of == m) for m in range(self.n_modules)]


def _check(flows: FlowField, part: Partition) -> None:
    if part.n_nodes != flows.n_nodes:
        raise PartitionError(
            f"partition covers {part.n_nodes} nodes, network has {flows.n_nodes}"
        )
    if part.n_nodes and (part.module_of.min() < 0 or part.module_of.max() >= part.n_modules):
        raise PartitionError("module ids must lie in 0..n_modules-1")


def codelength_terms(flows: FlowField, part: Partition) -> tuple[float, float]:
    """
    Index and module codelength of a partition, in bits.

    Raises:
        PartitionError: If the partition does not fit the flows
    """
    bound = part if part.exit_flow is not None else part.bind(flows)
    q_m = bound.exit_flow
    p_m = bound.module_flow
    index = float(plogp(q_m.sum()) - plogp(q_m).sum())
    module = float(
        -plogp(q_m).sum() - plogp(flows.visit_rate).sum() + plogp(q_m + p_m).sum()
    )
    return index, module


def codelength(flows: FlowField, part: Partition) -> float:
    """Two-level map equation L(M) in bits per step."""
    index, module = codelength_terms(flows, part)
    return index + module


def codelength_savings(L: float, L1: float) -> float:
    """
    Relative savings 1 - L / L1 against the one-module codelength.

    Raises:
        DomainError: If L1 is not positive
    """
    if L1 <= 0:
        raise DomainError(f"one-module codelength must be positive, got {L1}")
    return 1.0 - L / L1


# ============================================================================
# Partition files
# ============================================================================


def write_partition(part: Partition, names: Iterable[str], stream: IO[str]) -> None:
    """Two-column "node-id module-id" file."""
    stream.write("# node-id module-id\n")
    for name, module in zip(names, part.module_of):
        stream.write(f"{name} {int(module)}\n")


def read_partition(text: TextSource) -> dict[str, str]:
    """Read a partition (or any "node-id label") file into a name -> module map."""
    assignment: dict[str, str] = {}
    for line_number, raw in enumerate(iter_lines(text), start=1):
        line = raw.strip()
        if not line or line[0] in "#%":
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise ParseError(f"expected 'node-id module-id', got '{line}'", line_number)
        assignment[tokens[0]] = tokens[1]
    return assignment
