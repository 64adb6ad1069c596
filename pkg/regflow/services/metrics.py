"""
Partition comparison: adjusted mutual information.

AMI = (MI - E[MI]) / (norm(H(a), H(b)) - E[MI]) with E[MI] taken under the
permutation (hypergeometric) model. Natural logarithms throughout.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Literal

import numpy as np
from scipy import sparse
from scipy.special import gammaln

from regflow.utils.errors import DomainError, ValidationError

Average = Literal["arithmetic", "geometric", "min", "max"]
AVERAGES: tuple[str, ...] = ("arithmetic", "geometric", "min", "max")


@dataclass(frozen=True, eq=False)
class LabelingPair:
    """Two labelings of the same nodes and their contingency table."""

    labels_a: np.ndarray
    labels_b: np.ndarray

    @classmethod
    def of(cls, a: Iterable, b: Iterable) -> "LabelingPair":
        """
        Raises:
            ValidationError: If the labelings are empty or differ in length
        """
        labels_a = np.asarray(a if isinstance(a, np.ndarray) else list(a))
        labels_b = np.asarray(b if isinstance(b, np.ndarray) else list(b))
        if labels_a.ndim != 1 or labels_b.ndim != 1:
            raise ValidationError("labelings must be one-dimensional")
        if labels_a.size != labels_b.size:
            raise ValidationError(
                f"labelings differ in length ({labels_a.size} and {labels_b.size})"
            )
        if labels_a.size == 0:
            raise ValidationError("labelings are empty")
        return cls(labels_a=labels_a, labels_b=labels_b)

    @property
    def n(self) -> int:
        return int(self.labels_a.size)

    @cached_property
    def contingency(self) -> sparse.csr_array:
        _, rows = np.unique(self.labels_a, return_inverse=True)
        _, cols = np.unique(self.labels_b, return_inverse=True)
        shape = (int(rows.max()) + 1, int(cols.max()) + 1)
        table = sparse.coo_array((np.ones(self.n), (rows.ravel(), cols.ravel())), shape=shape).tocsr()
        table.sum_duplicates()
        return table

    @property
    def sizes_a(self) -> np.ndarray:
        return np.asarray(self.contingency.sum(axis=1)).ravel()

    @property
    def sizes_b(self) -> np.ndarray:
        return np.asarray(self.contingency.sum(axis=0)).ravel()

    @property
    def is_identical(self) -> bool:
        """Same partition up to relabeling."""
        table = self.contingency
        return table.shape[0] == table.shape[1] == table.nnz


def entropy_nats(sizes: np.ndarray) -> float:
    sizes = np.asarray(sizes, dtype=np.float64)
    sizes = sizes[sizes > 0]
    total = sizes.sum()
    if total == 0:
        return 0.0
    p = sizes / total
    return float(-(p * np.log(p)).sum())


def mutual_information(a: Iterable, b: Iterable) -> float:
    """Mutual information of two labelings in nats."""
    return _mutual_information(LabelingPair.of(a, b))


def _mutual_information(pair: LabelingPair) -> float:
    table = pair.contingency.tocoo()
    n = float(pair.n)
    n_ij = table.data
    a = pair.sizes_a[table.row]
    b = pair.sizes_b[table.col]
    return float(max((n_ij / n * np.log(n * n_ij / (a * b))).sum(), 0.0))


def expected_mutual_information(sizes_a: Iterable[int], sizes_b: Iterable[int], n: int) -> float:
    """
    E[MI] over all labelings with the given class sizes (hypergeometric model).

    Class sizes that repeat are evaluated once and weighted by multiplicity.

    Raises:
        DomainError: If the sizes do not sum to n
    """
    a_values, a_counts = np.unique(np.asarray(list(sizes_a), dtype=np.int64), return_counts=True)
    b_values, b_counts = np.unique(np.asarray(list(sizes_b), dtype=np.int64), return_counts=True)
    if int((a_values * a_counts).sum()) != n or int((b_values * b_counts).sum()) != n:
        raise DomainError(f"class sizes must sum to {n}")
    if np.any(a_values <= 0) or np.any(b_values <= 0):
        raise DomainError("class sizes must be positive")

    lg_n = gammaln(n + 1)
    emi = 0.0
    for a, count_a in zip(a_values.tolist(), a_counts.tolist()):
        lg_a = gammaln(a + 1) + gammaln(n - a + 1)
        for b, count_b in zip(b_values.tolist(), b_counts.tolist()):
            low = max(1, a + b - n)
            high = min(a, b)
            if low > high:
                continue
            nij = np.arange(low, high + 1, dtype=np.float64)
            log_prob = (
                lg_a + gammaln(b + 1) + gammaln(n - b + 1) - lg_n
                - gammaln(nij + 1) - gammaln(a - nij + 1) - gammaln(b - nij + 1)
                - gammaln(n - a - b + nij + 1)
            )
            term = (nij / n) * np.log(n * nij / (a * b)) * np.exp(log_prob)
            emi += count_a * count_b * float(term.sum())
    return emi


def _normalizer(h_a: float, h_b: float, average: str) -> float:
    if average == "arithmetic":
        return (h_a + h_b) / 2.0
    if average == "geometric":
        return float(np.sqrt(h_a * h_b))
    if average == "min":
        return min(h_a, h_b)
    if average == "max":
        return max(h_a, h_b)
    raise DomainError(f"unknown AMI normalization '{average}' (expected one of {', '.join(AVERAGES)})")


def ami(a: Iterable, b: Iterable, average: Average = "arithmetic") -> float:
    """
    Adjusted mutual information between two labelings.

    Args:
        a: Labels per node
        b: Labels per node, same length
        average: Entropy normalization (arithmetic, geometric, min, max)

    Returns:
        AMI, 1.0 for identical partitions with two or more classes and 0.0
        when the denominator vanishes

    Raises:
        ValidationError: If the labelings are empty or differ in length
        DomainError: If the normalization is unknown
    """
    if average not in AVERAGES:
        raise DomainError(f"unknown AMI normalization '{average}'")
    pair = LabelingPair.of(a, b)
    sizes_a, sizes_b = pair.sizes_a, pair.sizes_b
    if pair.is_identical and sizes_a.size >= 2:
        return 1.0

    mi = _mutual_information(pair)
    emi = expected_mutual_information(sizes_a, sizes_b, pair.n)
    h_a, h_b = entropy_nats(sizes_a), entropy_nats(sizes_b)
    denominator = _normalizer(h_a, h_b, average) - emi
    if denominator <= 0:
        return 0.0
    return float((mi - emi) / denominator)
