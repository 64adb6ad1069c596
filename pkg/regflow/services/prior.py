"""
Empirical Bayes prior over transition rates.

The prior network is complete (no self-links) with pseudo-counts

    gamma_ij = lambda_ij * c_ij,   c_ij = prefactor * out_factor_i * in_factor_j

where c_ij is the continuous configuration model weight. Because c_ij
factorizes, every quantity the flow and search code needs is an aggregate
over nodes or labels; no N x N structure is ever built.
"""
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from regflow.services.graph import MultiGraph
from regflow.utils.errors import DomainError, ValidationError


class PriorMode(str, Enum):
    UNIFORM = "uniform"
    BIPARTITE = "bipartite"
    METADATA = "metadata"


class WeightModel(str, Enum):
    CCM = "ccm"    # continuous configuration model
    UNIT = "unit"  # c_ij = 1


# ============================================================================
# Connectivity parameters
# ============================================================================


def uniform_lambda(n: int) -> float:
    """
    Connectivity threshold ln(n) / n of random graphs.

    Raises:
        DomainError: If n < 2
    """
    if n < 2:
        raise DomainError(f"uniform connectivity needs at least 2 nodes, got {n}")
    return math.log(n) / n


def bipartite_lambda(n_a: int, n_b: int) -> float:
    """
    Connectivity threshold ln(n_a + n_b) / min(n_a, n_b) of random bipartite graphs.

    Raises:
        DomainError: If either side is empty
    """
    if n_a < 1 or n_b < 1:
        raise DomainError(f"bipartite connectivity needs both sides non-empty, got {n_a} and {n_b}")
    return math.log(n_a + n_b) / min(n_a, n_b)


def label_lambda(n_m: int) -> float:
    """ln(N_m) / N_m; zero for singleton classes."""
    if n_m < 1:
        raise DomainError(f"label class size must be positive, got {n_m}")
    return math.log(n_m) / n_m


# ============================================================================
# Weight model
# ============================================================================


def _mean_weight(g: MultiGraph) -> float:
    total_degree = float(g.k_in.sum() + g.k_out.sum())
    if total_degree == 0:
        return 1.0
    return float(g.s_in.sum() + g.s_out.sum()) / total_degree


def ccm_prefactor(g: MultiGraph) -> float:
    """Global ratio sum(k_in + k_out) / sum(s_in + s_out), over all nodes."""
    return 1.0 / _mean_weight(g)


def strength_factors(g: MultiGraph) -> tuple[np.ndarray, np.ndarray]:
    """
    Per-node out_factor s_out/k_out and in_factor s_in/k_in.

    A node without out-arcs (in-arcs) falls back to its total strength per
    total degree, and a node without any arcs to the global mean weight.
    """
    fallback = np.full(g.n_nodes, _mean_weight(g))
    k_total = g.k_in + g.k_out
    s_total = g.s_in + g.s_out
    with np.errstate(divide="ignore", invalid="ignore"):
        total_factor = np.where(k_total > 0, s_total / k_total, fallback)
        out_factor = np.where(g.k_out > 0, g.s_out / g.k_out, total_factor)
        in_factor = np.where(g.k_in > 0, g.s_in / g.k_in, total_factor)
    return out_factor, in_factor


def ccm_weight(g: MultiGraph, i: int, j: int) -> float:
    """
    Continuous configuration model weight c_ij evaluated directly.

    Production code uses the factorized aggregates of PriorModel; this
    pointwise form serves small graphs and checks.
    """
    out_factor, in_factor = strength_factors(g)
    return ccm_prefactor(g) * float(out_factor[i]) * float(in_factor[j])


# ============================================================================
# Prior model
# ============================================================================


@dataclass(frozen=True, eq=False)
class PriorModel:
    """
    Aggregates of the prior network.

    `in_total` is S = sum_j in_factor_j; `in_by_label[m]` is S_m and
    `in_by_type[t]` the in-factor mass of type t. `gamma_out_total[i]` is
    sum_{j != i} gamma_ij and `alpha[i]` the weight of the prior in row i.
    """

    mode: PriorMode
    n_nodes: int
    lam: float
    lam_ab: Optional[float]
    lam_label: Optional[np.ndarray]
    prefactor: float
    out_factor: np.ndarray
    in_factor: np.ndarray
    in_total: float
    in_by_label: Optional[np.ndarray]
    in_by_type: Optional[np.ndarray]
    labels: Optional[np.ndarray]
    types: Optional[np.ndarray]
    gamma_out_total: np.ndarray
    alpha: np.ndarray
    scale: float = 1.0
    weight_model: WeightModel = WeightModel.CCM

    def connectivity(self, i: int, j: int) -> float:
        """lambda_ij for i != j."""
        if self.mode is PriorMode.UNIFORM:
            return self.lam
        if self.mode is PriorMode.BIPARTITE:
            return 0.0 if self.types[i] == self.types[j] else float(self.lam_ab)
        same = self.labels[i] == self.labels[j]
        return self.lam + (float(self.lam_label[self.labels[i]]) if same else 0.0)

    def weight(self, i: int, j: int) -> float:
        """c_ij from the stored factors."""
        return self.prefactor * float(self.out_factor[i]) * float(self.in_factor[j])


def build_prior(
    g: MultiGraph,
    mode: PriorMode = PriorMode.UNIFORM,
    scale: float = 1.0,
    weight_model: WeightModel = WeightModel.CCM,
) -> PriorModel:
    """
    Build the prior aggregates for a graph.

    Args:
        g: Observed network
        mode: uniform, bipartite (needs node types) or metadata (needs labels)
        scale: Multiplier on every connectivity parameter
        weight_model: ccm factors or unit weights

    Returns:
        Immutable PriorModel

    Raises:
        ValidationError: If the graph lacks the annotation the mode needs
        DomainError: If a connectivity parameter is undefined
    """
    mode = PriorMode(mode)
    n = g.n_nodes
    if scale <= 0:
        raise DomainError(f"prior scale must be positive, got {scale}")
    if n == 0:
        raise DomainError("prior needs at least one node")

    if WeightModel(weight_model) is WeightModel.UNIT:
        prefactor = 1.0
        out_factor = np.ones(n)
        in_factor = np.ones(n)
    else:
        prefactor = ccm_prefactor(g)
        out_factor, in_factor = strength_factors(g)

    # A single node has no one to connect to.
    lam = scale * uniform_lambda(n) if n >= 2 else 0.0
    in_total = float(in_factor.sum())
    lam_ab = lam_label = in_by_label = in_by_type = labels = types = None

    if mode is PriorMode.UNIFORM:
        gamma_out_total = lam * prefactor * out_factor * (in_total - in_factor)

    elif mode is PriorMode.BIPARTITE:
        if g.node_type is None:
            raise ValidationError("bipartite prior requires node types")
        types = g.node_type.astype(np.int64)
        lam_ab = scale * bipartite_lambda(g.n_a, g.n_b)
        in_by_type = np.bincount(types, weights=in_factor, minlength=2)
        other_mass = in_by_type[1 - types]
        gamma_out_total = lam_ab * prefactor * out_factor * other_mass

    else:
        if g.metadata is None:
            raise ValidationError("metadata prior requires metadata labels")
        labels = g.metadata.astype(np.int64)
        counts = g.label_counts
        lam_label = scale * np.array([label_lambda(int(c)) if c > 0 else 0.0 for c in counts])
        in_by_label = np.bincount(labels, weights=in_factor, minlength=counts.size)
        gamma_out_total = prefactor * out_factor * (
            lam * (in_total - in_factor)
            + lam_label[labels] * (in_by_label[labels] - in_factor)
        )

    gamma_out_total = np.maximum(gamma_out_total, 0.0)
    denominator = g.s_out + gamma_out_total
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(denominator > 0, gamma_out_total / denominator, 1.0)
    # Rows without observations are pure prior.
    alpha = np.where(g.s_out > 0, alpha, 1.0)

    return PriorModel(
        mode=mode,
        n_nodes=n,
        lam=lam,
        lam_ab=lam_ab,
        lam_label=lam_label,
        prefactor=prefactor,
        out_factor=out_factor,
        in_factor=in_factor,
        in_total=in_total,
        in_by_label=in_by_label,
        in_by_type=in_by_type,
        labels=labels,
        types=types,
        gamma_out_total=gamma_out_total,
        alpha=alpha,
        scale=scale,
        weight_model=WeightModel(weight_model),
    )


def gamma(g: MultiGraph, p: PriorModel, i: int, j: int) -> float:
    """
    Prior pseudo-count gamma_ij.

    Raises:
        DomainError: If i == j (the prior has no self-links)
    """
    if i == j:
        raise DomainError(f"the prior network has no self-links (node {i})")
    return p.connectivity(i, j) * p.weight(i, j)


def alpha(g: MultiGraph, p: PriorModel, i: int) -> float:
    """Weight of the prior in row i: sum_j gamma_ij / (s_out_i + sum_j gamma_ij)."""
    return float(p.alpha[i])


def posterior_mean_row(weights, gammas) -> np.ndarray:
    """
    Posterior mean of a Dirichlet-multinomial row: (w_j + gamma_j) / sum(w + gamma).

    Equals (1 - a) * w / sum(w) + a * gamma / sum(gamma) with
    a = sum(gamma) / (sum(w) + sum(gamma)).

    Raises:
        DomainError: On mismatched lengths, negative entries or zero total mass
    """
    w = np.asarray(weights, dtype=np.float64)
    gam = np.asarray(gammas, dtype=np.float64)
    if w.shape != gam.shape:
        raise DomainError("weights and gammas differ in length")
    if np.any(w < 0) or np.any(gam < 0):
        raise DomainError("weights and gammas must be non-negative")
    total = float(w.sum() + gam.sum())
    if total <= 0:
        raise DomainError("row has no observed or prior mass")
    return (w + gam) / total
