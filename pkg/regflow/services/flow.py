"""
Stationary flows of the regularized random walk.

The walker at node i follows an observed arc with probability 1 - alpha_i
(proportional to its weight) and otherwise takes a step through the prior
network. Prior steps are expressed as teleport channels: a channel has a
per-node source rate and a per-node target weight, and the prior step from
i to j carries p_i * src_rate_i * tgt_j (times the channel coefficient).
Metadata adds one channel per label. Applying the operator therefore costs
one pass over the arcs plus one pass over the nodes per channel.
"""
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse

from regflow.models.schemas import FlowModel
from regflow.services.graph import MultiGraph
from regflow.services.prior import PriorMode, PriorModel, WeightModel, build_prior, gamma
from regflow.utils.errors import ConvergenceError, DomainError, ValidationError

DEFAULT_TOLERANCE = 1e-12
DEFAULT_MAX_ITER = 10_000
DENSE_LIMIT = 2000


# ============================================================================
# Teleport channels
# ============================================================================


@dataclass(frozen=True, eq=False)
class TeleportChannels:
    """
    Aggregate description of all non-observed steps.

    Global channels are rows of `src_rate` / `tgt`; label channels connect
    nodes with equal `labels` only. With `exclude_self` a node never
    teleports to itself.
    """

    n_nodes: int
    coef: np.ndarray          # (C,)
    src_rate: np.ndarray      # (C, n)
    tgt: np.ndarray           # (C, n)
    exclude_self: bool
    labels: Optional[np.ndarray] = None
    label_coef: Optional[np.ndarray] = None
    label_src_rate: Optional[np.ndarray] = None
    label_tgt: Optional[np.ndarray] = None

    @property
    def n_channels(self) -> int:
        return int(self.coef.size)

    @property
    def n_labels(self) -> int:
        return 0 if self.label_coef is None else int(self.label_coef.size)

    @property
    def total(self) -> np.ndarray:
        return self.tgt.sum(axis=1)

    @property
    def label_total(self) -> Optional[np.ndarray]:
        if self.labels is None:
            return None
        return np.bincount(self.labels, weights=self.label_tgt, minlength=self.n_labels)

    @classmethod
    def empty(cls, n_nodes: int) -> "TeleportChannels":
        return cls(
            n_nodes=n_nodes,
            coef=np.zeros(0),
            src_rate=np.zeros((0, n_nodes)),
            tgt=np.zeros((0, n_nodes)),
            exclude_self=False,
        )

    def inflow(self, p: np.ndarray) -> np.ndarray:
        """Mass arriving at every node through the channels."""
        out = np.zeros(self.n_nodes)
        for c in range(self.n_channels):
            src = p * self.src_rate[c]
            accumulated = src.sum() - src if self.exclude_self else src.sum()
            out += self.coef[c] * self.tgt[c] * accumulated
        if self.labels is not None:
            src = p * self.label_src_rate
            by_label = np.bincount(self.labels, weights=src, minlength=self.n_labels)
            accumulated = by_label[self.labels]
            if self.exclude_self:
                accumulated = accumulated - src
            out += self.label_coef[self.labels] * self.label_tgt * accumulated
        return out

    def exit(self, p: np.ndarray, module_of: np.ndarray, n_modules: int) -> np.ndarray:
        """Per-node channel mass that lands outside the node's own module."""
        out = np.zeros(self.n_nodes)
        for c in range(self.n_channels):
            in_module = np.bincount(module_of, weights=self.tgt[c], minlength=n_modules)
            out += self.coef[c] * p * self.src_rate[c] * (self.tgt[c].sum() - in_module[module_of])
        if self.labels is not None:
            keys = module_of.astype(np.int64) * self.n_labels + self.labels
            unique, inverse = np.unique(keys, return_inverse=True)
            in_module = np.bincount(inverse, weights=self.label_tgt, minlength=unique.size)
            label_total = self.label_total
            out += (
                self.label_coef[self.labels] * p * self.label_src_rate
                * (label_total[self.labels] - in_module[inverse])
            )
        return np.maximum(out, 0.0)

    def outflow(self, p: np.ndarray) -> np.ndarray:
        """Total channel mass leaving every node."""
        return self.exit(p, np.arange(self.n_nodes), self.n_nodes) + self.self_flow(p)

    def self_flow(self, p: np.ndarray) -> np.ndarray:
        """Channel mass a node sends to itself (zero with exclude_self)."""
        if self.exclude_self:
            return np.zeros(self.n_nodes)
        out = np.zeros(self.n_nodes)
        for c in range(self.n_channels):
            out += self.coef[c] * p * self.src_rate[c] * self.tgt[c]
        if self.labels is not None:
            out += self.label_coef[self.labels] * p * self.label_src_rate * self.label_tgt
        return out


def prior_channels(prior: PriorModel) -> TeleportChannels:
    """
    Channels of the prior network.

    Source rates divide alpha_i by the row's prior mass (in units where the
    prefactor and out-factor cancel), so the channel flow from i to j is
    p_i * alpha_i * gamma_ij / sum_k gamma_ik.
    """
    n = prior.n_nodes
    alpha = prior.alpha
    tgt = prior.in_factor

    def _rate(denominator: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(denominator > 0, alpha / denominator, 0.0)

    if prior.mode is PriorMode.UNIFORM:
        return TeleportChannels(
            n_nodes=n,
            coef=np.ones(1),
            src_rate=_rate(prior.in_total - tgt)[None, :],
            tgt=tgt[None, :].copy(),
            exclude_self=True,
        )

    if prior.mode is PriorMode.BIPARTITE:
        types = prior.types
        is_a = types == 0
        rate = _rate(prior.in_by_type[1 - types])
        return TeleportChannels(
            n_nodes=n,
            coef=np.ones(2),
            src_rate=np.vstack([np.where(is_a, rate, 0.0), np.where(is_a, 0.0, rate)]),
            tgt=np.vstack([np.where(is_a, 0.0, tgt), np.where(is_a, tgt, 0.0)]),
            exclude_self=True,
        )

    labels = prior.labels
    lam_m = prior.lam_label[labels]
    denominator = prior.lam * (prior.in_total - tgt) + lam_m * (prior.in_by_label[labels] - tgt)
    rate = _rate(denominator)
    return TeleportChannels(
        n_nodes=n,
        coef=np.array([prior.lam]),
        src_rate=rate[None, :],
        tgt=tgt[None, :].copy(),
        exclude_self=True,
        labels=labels,
        label_coef=prior.lam_label.copy(),
        label_src_rate=rate.copy(),
        label_tgt=tgt.copy(),
    )


def uniform_teleport_channels(alpha: np.ndarray) -> TeleportChannels:
    """Teleportation to every node (itself included) with equal probability."""
    n = alpha.size
    return TeleportChannels(
        n_nodes=n,
        coef=np.ones(1),
        src_rate=(alpha / n)[None, :],
        tgt=np.ones((1, n)),
        exclude_self=False,
    )


# ============================================================================
# Operator
# ============================================================================


def observed_transitions(g: MultiGraph) -> sparse.csr_array:
    """Row-normalized observed weights (maximum likelihood rates); empty rows stay empty."""
    with np.errstate(divide="ignore", invalid="ignore"):
        row_scale = np.where(g.s_out > 0, 1.0 / g.s_out, 0.0)
    data = g.weight * row_scale[g.source]
    return sparse.csr_array((data, (g.source, g.target)), shape=(g.n_nodes, g.n_nodes))


@dataclass
class OperatorStats:
    """Work counters of a TransitionOperator."""

    applications: int = 0
    arc_visits: int = 0
    node_channel_visits: int = 0


@dataclass(eq=False)
class TransitionOperator:
    """p -> p T for T = (1 - alpha) * observed + channels."""

    observed: sparse.csr_array
    alpha: np.ndarray
    channels: TeleportChannels
    stats: OperatorStats = field(default_factory=OperatorStats)

    def __post_init__(self):
        self._observed_t = self.observed.T.tocsr()
        self._stay = 1.0 - self.alpha

    def apply(self, p: np.ndarray) -> np.ndarray:
        out = self._observed_t @ (p * self._stay)
        out += self.channels.inflow(p)
        self.stats.applications += 1
        self.stats.arc_visits += int(self.observed.nnz)
        self.stats.node_channel_visits += self.channels.n_nodes * (
            self.channels.n_channels + (1 if self.channels.labels is not None else 0)
        )
        return out


def regularized_operator(g: MultiGraph, prior: PriorModel) -> TransitionOperator:
    return TransitionOperator(observed_transitions(g), prior.alpha, prior_channels(prior))


def teleport_alpha_vector(g: MultiGraph, alpha: float) -> np.ndarray:
    """alpha for nodes with out-arcs, 1 for dangling nodes."""
    return np.where(g.s_out > 0, alpha, 1.0)


def apply_regularized(g: MultiGraph, p_model: PriorModel, p: np.ndarray) -> np.ndarray:
    """One step of the regularized walk applied to the distribution p."""
    return regularized_operator(g, p_model).apply(np.asarray(p, dtype=np.float64))


# ============================================================================
# Flow field
# ============================================================================


@dataclass(frozen=True, eq=False)
class FlowField:
    """
    Stationary visit rates together with the transition structure that produced them.

    `recorded` says whether channel steps are encoded by the map equation;
    the standard model's teleportation is not.
    """

    model: FlowModel
    visit_rate: np.ndarray
    alpha: np.ndarray
    observed: sparse.csr_array
    channels: TeleportChannels
    recorded: bool
    residual: float = 0.0
    iterations: int = 0
    prior: Optional[PriorModel] = None

    @property
    def n_nodes(self) -> int:
        return int(self.visit_rate.size)

    @property
    def prior_target_global(self) -> Optional[np.ndarray]:
        """Normalized in-factors v."""
        if self.prior is None:
            return None
        return self.prior.in_factor / self.prior.in_total

    @property
    def prior_target_by_label(self) -> Optional[dict[int, np.ndarray]]:
        """Per-label conditional target distributions (node ids, probabilities)."""
        if self.prior is None or self.prior.labels is None:
            return None
        targets = {}
        for m in range(self.prior.in_by_label.size):
            members = np.flatnonzero(self.prior.labels == m)
            if members.size:
                targets[m] = self.prior.in_factor[members] / self.prior.in_by_label[m]
        return targets

    def link_flow(self) -> sparse.csr_array:
        """
        Flow on observed arcs.

        Recorded channels take their share of each step, F_ij = p_i (1 - alpha_i) t_ij.
        Unrecorded teleportation is not a step of the encoded walk, so
        F_ij = p_i t_ij = p_i w_ij / s_i.
        """
        scale = self.visit_rate * (1.0 - self.alpha) if self.recorded else self.visit_rate
        return sparse.csr_array(sparse.diags_array(scale) @ self.observed)

    def operator(self) -> TransitionOperator:
        return TransitionOperator(self.observed, self.alpha, self.channels)


def _power_iteration(
    operator: TransitionOperator,
    start: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, float, int]:
    if tol <= 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    if max_iter < 1:
        raise DomainError(f"max_iter must be at least 1, got {max_iter}")
    p = start
    residual = math.inf
    for iteration in range(1, max_iter + 1):
        nxt = operator.apply(p)
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - p).sum())
        p = nxt
        if residual < tol:
            return p, residual, iteration
    raise ConvergenceError(max_iter, residual)


def _start_vector(g: MultiGraph, prior: Optional[PriorModel]) -> np.ndarray:
    if prior is not None and prior.mode is PriorMode.BIPARTITE:
        # Every step changes side, so stationary mass is split evenly.
        types = prior.types
        sizes = np.bincount(types, minlength=2).astype(np.float64)
        return 0.5 / sizes[types]
    return np.full(g.n_nodes, 1.0 / g.n_nodes)


def _single_node(model: FlowModel, g: MultiGraph, prior: Optional[PriorModel]) -> FlowField:
    alpha = np.where(g.s_out > 0, 0.0, 1.0)
    return FlowField(
        model=model,
        visit_rate=np.ones(1),
        alpha=alpha,
        observed=observed_transitions(g),
        channels=TeleportChannels.empty(1),
        recorded=True,
        prior=prior,
    )


def stationary_flow(
    g: MultiGraph,
    p_model: PriorModel,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    model: Optional[FlowModel] = None,
) -> FlowField:
    """
    Stationary distribution of the regularized walk by power iteration.

    Starts from the uniform vector (bipartite: uniform per side with half
    the mass on each side) and stops when one application changes the
    vector by less than `tol` in L1.

    Raises:
        ConvergenceError: If max_iter applications do not reach tol
    """
    model = model or FlowModel(p_model.mode.value)
    if g.n_nodes == 1:
        return _single_node(model, g, p_model)

    operator = regularized_operator(g, p_model)
    p, residual, iterations = _power_iteration(operator, _start_vector(g, p_model), tol, max_iter)
    return FlowField(
        model=model,
        visit_rate=p,
        alpha=p_model.alpha,
        observed=operator.observed,
        channels=operator.channels,
        recorded=True,
        residual=residual,
        iterations=iterations,
        prior=p_model,
    )


def undirected_flow(g: MultiGraph, p_model: PriorModel, model: Optional[FlowModel] = None) -> FlowField:
    """
    Closed-form stationary flow of an undirected graph, p_i ∝ s_i + sum_j gamma_ij.

    w_ij + gamma_ij is symmetric for undirected input, so the walk is
    reversible. The residual of one further application is recorded.

    Raises:
        ValidationError: If the graph is directed
    """
    if g.directed:
        raise ValidationError("closed-form flow requires an undirected graph")
    model = model or FlowModel(p_model.mode.value)
    if g.n_nodes == 1:
        return _single_node(model, g, p_model)

    mass = g.s_out + p_model.gamma_out_total
    p = mass / mass.sum()
    operator = regularized_operator(g, p_model)
    residual = float(np.abs(operator.apply(p) - p).sum())
    return FlowField(
        model=model,
        visit_rate=p,
        alpha=p_model.alpha,
        observed=operator.observed,
        channels=operator.channels,
        recorded=True,
        residual=residual,
        iterations=0,
        prior=p_model,
    )


def stationary_flow_teleport(
    g: MultiGraph,
    alpha: float,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    recorded: bool = True,
) -> FlowField:
    """
    PageRank flow: follow observed arcs with probability 1 - alpha, else
    teleport uniformly to any node. Dangling nodes always teleport.

    Args:
        g: Observed network
        alpha: Teleportation probability, 0 < alpha < 1
        recorded: Whether the map equation encodes the teleportation steps

    Raises:
        DomainError: If alpha is outside (0, 1)
        ConvergenceError: If the iteration does not converge
    """
    if not 0 < alpha < 1:
        raise DomainError(f"teleportation probability must be in (0, 1), got {alpha}")
    model = FlowModel.TELEPORT if recorded else FlowModel.NONE
    if g.n_nodes == 1:
        return _single_node(model, g, None)

    alpha_vec = teleport_alpha_vector(g, alpha)
    operator = TransitionOperator(observed_transitions(g), alpha_vec, uniform_teleport_channels(alpha_vec))
    p, residual, iterations = _power_iteration(operator, _start_vector(g, None), tol, max_iter)
    return FlowField(
        model=model,
        visit_rate=p,
        alpha=alpha_vec,
        observed=operator.observed,
        channels=operator.channels,
        recorded=recorded,
        residual=residual,
        iterations=iterations,
    )


def standard_flow(
    g: MultiGraph,
    alpha: float = 0.15,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
) -> FlowField:
    """
    Flow of the standard map equation.

    Undirected graphs use p_i ∝ s_i and no teleportation. Directed graphs
    use PageRank visit rates with unrecorded teleportation: only steps
    along observed arcs are encoded.
    """
    if g.directed:
        return stationary_flow_teleport(g, alpha, tol, max_iter, recorded=False)

    total = g.s_out.sum()
    p = g.s_out / total if total > 0 else np.full(g.n_nodes, 1.0 / g.n_nodes)
    return FlowField(
        model=FlowModel.NONE,
        visit_rate=p,
        alpha=np.zeros(g.n_nodes),
        observed=observed_transitions(g),
        channels=TeleportChannels.empty(g.n_nodes),
        recorded=False,
    )


def compute_flows(
    g: MultiGraph,
    model: FlowModel,
    teleport_alpha: float = 0.15,
    tol: float = DEFAULT_TOLERANCE,
    max_iter: int = DEFAULT_MAX_ITER,
    prior_scale: float = 1.0,
    weight_model: WeightModel = WeightModel.CCM,
    analytic_undirected: bool = True,
) -> FlowField:
    """
    Flows for any flow model.

    Raises:
        ValidationError: If the graph lacks types or labels the model needs
        ConvergenceError: If the power iteration does not converge
    """
    model = FlowModel(model)
    if model is FlowModel.NONE:
        return standard_flow(g, teleport_alpha, tol, max_iter)
    if model is FlowModel.TELEPORT:
        return stationary_flow_teleport(g, teleport_alpha, tol, max_iter, recorded=True)

    prior = build_prior(g, PriorMode(model.value), scale=prior_scale, weight_model=weight_model)
    if not g.directed and analytic_undirected:
        return undirected_flow(g, prior, model)
    return stationary_flow(g, prior, tol, max_iter, model)


# ============================================================================
# Module-level masses
# ============================================================================


def transition_masses(flows: FlowField, module_of: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Split each node's encoded out-flow into mass staying in its module and mass leaving it.

    Observed arcs are visited once; channel mass uses module aggregates of
    the target weights, never prior pairs.

    Returns:
        (within, exit) arrays indexed by node
    """
    module_of = np.asarray(module_of, dtype=np.int64)
    if module_of.shape != (flows.n_nodes,):
        raise ValidationError("module assignment length differs from number of nodes")
    n_modules = int(module_of.max()) + 1 if module_of.size else 0

    link = flows.link_flow().tocoo()
    crossing = module_of[link.row] != module_of[link.col]
    obs_exit = np.bincount(link.row[crossing], weights=link.data[crossing], minlength=flows.n_nodes)
    obs_total = np.bincount(link.row, weights=link.data, minlength=flows.n_nodes)

    within = obs_total - obs_exit
    exit_flow = obs_exit
    if flows.recorded and flows.channels.n_channels + flows.channels.n_labels > 0:
        channel_exit = flows.channels.exit(flows.visit_rate, module_of, n_modules)
        channel_total = flows.channels.outflow(flows.visit_rate)
        within = within + np.maximum(channel_total - channel_exit, 0.0)
        exit_flow = exit_flow + channel_exit
    return within, exit_flow


def node_transition_masses(
    g: MultiGraph,
    p_model: Optional[PriorModel],
    flows: FlowField,
    i: int,
    module_membership: np.ndarray,
) -> tuple[float, float]:
    """(within, exit) encoded out-flow of node i under a module assignment."""
    within, exit_flow = transition_masses(flows, module_membership)
    return float(within[i]), float(exit_flow[i])


# ============================================================================
# Dense oracle
# ============================================================================


def dense_transition_matrix(g: MultiGraph, p_model: PriorModel) -> np.ndarray:
    """
    Explicit posterior-mean transition matrix built from gamma() on all pairs.

    Quadratic in the number of nodes; meant for small graphs and checks.
    """
    n = g.n_nodes
    if n > DENSE_LIMIT:
        raise DomainError(f"dense transition matrix limited to {DENSE_LIMIT} nodes, got {n}")
    counts = g.adjacency.toarray()
    for i in range(n):
        for j in range(n):
            if i != j:
                counts[i, j] += gamma(g, p_model, i, j)
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(totals > 0, counts / totals, 0.0)
