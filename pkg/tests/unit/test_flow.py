"""
Unit tests for stationary flows of the regularized walk.
"""
import networkx as nx
import numpy as np
import pytest

from regflow.models.schemas import FlowModel
from regflow.services.flow import (
    apply_regularized,
    compute_flows,
    dense_transition_matrix,
    node_transition_masses,
    stationary_flow,
    stationary_flow_teleport,
    standard_flow,
    transition_masses,
    undirected_flow,
)
from regflow.services.graph import load_edge_list
from regflow.services.prior import PriorMode, build_prior
from regflow.utils.errors import ConvergenceError, DomainError, ValidationError
from tests.conftest import random_bipartite_graph, random_graph, with_random_labels

# Mark all tests as unit tests
pytestmark = pytest.mark.unit


def _annotated_case(case: int):
    """Small graph with a prior mode; the mode cycles uniform, bipartite, metadata."""
    n = 5 + case % 17
    if case % 3 == 0:
        return random_graph(seed=case, n=n, density=0.15 + 0.1 * (case % 4)), PriorMode.UNIFORM
    if case % 3 == 1:
        return random_bipartite_graph(seed=case, n_a=2 + case % 5, n_b=3 + case % 7), PriorMode.BIPARTITE
    g = with_random_labels(random_graph(seed=case, n=n), seed=case + 100, n_labels=2 + case % 4)
    return g, PriorMode.METADATA


ORACLE_CASES = range(50)


class TestOperator:
    """Test one application of the regularized transition operator."""

    @pytest.mark.parametrize("case", ORACLE_CASES)
    def test_matches_dense_matrix(self, case):
        g, mode = _annotated_case(case)
        prior = build_prior(g, mode)
        p = np.random.default_rng(case).random(g.n_nodes)
        p /= p.sum()
        dense = dense_transition_matrix(g, prior)
        assert np.allclose(apply_regularized(g, prior, p), p @ dense, atol=1e-12)

    @pytest.mark.parametrize("case", ORACLE_CASES)
    def test_dense_rows_are_stochastic(self, case):
        g, mode = _annotated_case(case)
        dense = dense_transition_matrix(g, build_prior(g, mode))
        assert np.allclose(dense.sum(axis=1), 1.0)

    def test_stats_count_work(self):
        g = random_graph(seed=1, n=8)
        flows = stationary_flow(g, build_prior(g))
        operator = flows.operator()
        operator.apply(flows.visit_rate)
        operator.apply(flows.visit_rate)
        assert operator.stats.applications == 2
        assert operator.stats.arc_visits == 2 * g.n_arcs
        assert operator.stats.node_channel_visits == 2 * g.n_nodes

    @pytest.mark.parametrize("mode", [PriorMode.UNIFORM, PriorMode.METADATA])
    def test_work_grows_linearly_with_size(self, mode):
        """Test that one application touches each arc and node channel once."""
        work = {}
        for n in (100, 200, 400, 800):
            g = random_graph(seed=n, n=n, density=6 / n)
            if mode is PriorMode.METADATA:
                g = with_random_labels(g, seed=n, n_labels=5)
            operator = stationary_flow(g, build_prior(g, mode)).operator()
            operator.apply(np.full(n, 1.0 / n))
            work[n] = operator.stats.arc_visits + operator.stats.node_channel_visits
            assert operator.stats.arc_visits == g.n_arcs
            assert work[n] <= 3 * (g.n_arcs + g.n_nodes)
        assert work[800] < 12 * work[100]


class TestStationaryFlow:
    """Test the power iteration and its closed-form shortcut."""

    @pytest.mark.parametrize("case", ORACLE_CASES)
    def test_is_fixed_point(self, case):
        g, mode = _annotated_case(case)
        prior = build_prior(g, mode)
        flows = stationary_flow(g, prior)
        p = flows.visit_rate
        assert p.sum() == pytest.approx(1.0)
        assert np.all(p > 0)
        assert np.abs(p @ dense_transition_matrix(g, prior) - p).sum() < 1e-9

    def test_bipartite_mass_is_split_evenly(self):
        g = random_bipartite_graph(seed=3, n_a=3, n_b=7)
        flows = stationary_flow(g, build_prior(g, PriorMode.BIPARTITE))
        assert flows.visit_rate[g.node_type == 0].sum() == pytest.approx(0.5, abs=1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_undirected_closed_form_matches_iteration(self, seed):
        n = 10 * (seed + 1)
        g = random_graph(seed=seed, n=n, density=min(0.5, 8 / n), directed=False)
        prior = build_prior(g)
        closed = undirected_flow(g, prior)
        iterated = stationary_flow(g, prior)
        assert np.allclose(closed.visit_rate, iterated.visit_rate, atol=1e-8)
        assert closed.residual < 1e-10

    def test_closed_form_rejects_directed(self):
        g = random_graph(seed=5, n=6)
        with pytest.raises(ValidationError):
            undirected_flow(g, build_prior(g))

    def test_convergence_error(self):
        g = random_graph(seed=6, n=10)
        with pytest.raises(ConvergenceError) as exc_info:
            stationary_flow(g, build_prior(g), max_iter=1)
        assert exc_info.value.iterations == 1
        assert exc_info.value.exit_code == 3

    def test_single_node(self):
        flows = compute_flows(load_edge_list("0 0 1\n"), FlowModel.UNIFORM)
        assert flows.visit_rate.tolist() == [1.0]


class TestStandardFlows:
    """Test the unregularized and teleportation models."""

    def test_undirected_flow_is_proportional_to_strength(self):
        g = random_graph(seed=7, n=9, directed=False)
        flows = standard_flow(g)
        assert np.allclose(flows.visit_rate, g.s_out / g.s_out.sum())
        assert not flows.recorded

    def test_teleport_matches_pagerank(self):
        g = load_edge_list("0 1 2\n1 2 1\n2 0 3\n2 3 1\n3 4 2\n4 2 1\n5 0 1\n")
        flows = stationary_flow_teleport(g, 0.15)
        graph = nx.DiGraph()
        graph.add_nodes_from(range(g.n_nodes))
        graph.add_weighted_edges_from(zip(g.source.tolist(), g.target.tolist(), g.weight.tolist()))
        ranks = nx.pagerank(graph, alpha=0.85, tol=1e-13, max_iter=10_000)
        expected = np.array([ranks[i] for i in range(g.n_nodes)])
        assert np.allclose(flows.visit_rate, expected, atol=1e-8)

    def test_dangling_nodes_always_teleport(self):
        g = load_edge_list("0 1\n1 2\n")
        flows = stationary_flow_teleport(g, 0.15)
        assert flows.alpha[2] == 1.0

    def test_two_node_chain_closed_form(self):
        flows = stationary_flow_teleport(load_edge_list("0 1\n"), 0.15)
        assert flows.visit_rate.tolist() == pytest.approx([1 / 2.85, 1.85 / 2.85])

    def test_teleport_alpha_domain(self):
        with pytest.raises(DomainError):
            stationary_flow_teleport(random_graph(seed=1, n=4), 1.0)

    def test_directed_standard_flow_is_unrecorded(self):
        flows = compute_flows(random_graph(seed=8, n=6), FlowModel.NONE)
        assert flows.model is FlowModel.NONE
        assert not flows.recorded
        assert compute_flows(random_graph(seed=8, n=6), FlowModel.TELEPORT).recorded

    def test_unrecorded_link_flow_is_not_damped_by_teleportation(self):
        g = load_edge_list("0 1 2\n1 2 1\n2 0 3\n2 3 1\n3 4 2\n4 2 1\n5 0 1\n")
        flows = standard_flow(g, 0.15)
        expected = np.zeros((g.n_nodes, g.n_nodes))
        for i, j, w in zip(g.source.tolist(), g.target.tolist(), g.weight.tolist()):
            expected[i, j] += flows.visit_rate[i] * w / g.s_out[i]
        assert np.allclose(flows.link_flow().toarray(), expected, atol=1e-15)

    def test_unrecorded_nodes_with_out_links_keep_their_whole_flow(self):
        g = random_graph(seed=21, n=12)
        flows = standard_flow(g, 0.15)
        within, exit_flow = transition_masses(flows, np.arange(g.n_nodes) % 3)
        has_out = g.s_out > 0
        assert np.allclose((within + exit_flow)[has_out], flows.visit_rate[has_out])
        assert np.allclose((within + exit_flow)[~has_out], 0.0)

    def test_recorded_teleport_link_flow_keeps_the_follow_share(self):
        g = random_graph(seed=21, n=12)
        flows = stationary_flow_teleport(g, 0.15, recorded=True)
        row_flow = np.asarray(flows.link_flow().sum(axis=1)).ravel()
        has_out = g.s_out > 0
        assert np.allclose(row_flow[has_out], 0.85 * flows.visit_rate[has_out])


class TestTransitionMasses:
    """Test the within/exit split of encoded out-flow."""

    def test_one_module_has_no_exit(self):
        g = random_graph(seed=9, n=10)
        flows = compute_flows(g, FlowModel.UNIFORM)
        _, exit_flow = transition_masses(flows, np.zeros(g.n_nodes, dtype=np.int64))
        assert np.allclose(exit_flow, 0.0)

    @pytest.mark.parametrize("model", [FlowModel.UNIFORM, FlowModel.TELEPORT, FlowModel.METADATA])
    def test_within_and_exit_add_up_to_visit_rate(self, model):
        g = with_random_labels(random_graph(seed=10, n=10), seed=2)
        flows = compute_flows(g, model)
        module_of = np.random.default_rng(0).integers(0, 3, size=g.n_nodes)
        within, exit_flow = transition_masses(flows, module_of)
        assert np.allclose(within + exit_flow, flows.visit_rate)
        assert np.all(exit_flow >= 0)

    def test_singletons_exit_matches_dense_off_diagonal(self):
        g = random_graph(seed=15, n=8)
        prior = build_prior(g)
        flows = stationary_flow(g, prior)
        dense = dense_transition_matrix(g, prior)
        _, exit_flow = transition_masses(flows, np.arange(g.n_nodes))
        expected = flows.visit_rate * (1.0 - np.diag(dense))
        assert np.allclose(exit_flow, expected, atol=1e-12)

    def test_node_masses_match_dense_rows(self):
        """Test one node's split against the explicit transition matrix."""
        g = random_graph(seed=16, n=8)
        prior = build_prior(g)
        flows = stationary_flow(g, prior)
        dense = dense_transition_matrix(g, prior)
        module_of = np.array([0, 0, 0, 1, 1, 1, 2, 2])
        for i in (0, 4, 7):
            same = module_of == module_of[i]
            within, exit_flow = node_transition_masses(g, prior, flows, i, module_of)
            assert within == pytest.approx(flows.visit_rate[i] * dense[i, same].sum(), abs=1e-12)
            assert exit_flow == pytest.approx(flows.visit_rate[i] * dense[i, ~same].sum(), abs=1e-12)

    def test_length_mismatch(self):
        flows = compute_flows(random_graph(seed=1, n=5), FlowModel.UNIFORM)
        with pytest.raises(ValidationError):
            transition_masses(flows, np.zeros(3, dtype=np.int64))
