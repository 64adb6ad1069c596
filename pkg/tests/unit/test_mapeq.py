"""
Unit tests for the two-level map equation.
"""
import io
import math

import numpy as np
import pytest

from regflow.models.schemas import FlowModel
from regflow.services.flow import compute_flows, dense_transition_matrix, standard_flow
from regflow.services.graph import load_edge_list
from regflow.services.mapeq import (
    Partition,
    codelength,
    codelength_savings,
    codelength_terms,
    entropy,
    plogp,
    read_partition,
    write_partition,
)
from regflow.utils.errors import DomainError, ParseError, PartitionError
from tests.conftest import clique_edges, random_graph, set_partitions, with_random_labels

# Mark all tests as unit tests
pytestmark = pytest.mark.unit


def _codebook_codelength(p: np.ndarray, T: np.ndarray, module_of: np.ndarray) -> float:
    """q H(Q) + sum_m p_m H(P^m) from an explicit transition matrix."""
    modules = np.unique(module_of)
    exits = []
    module_terms = 0.0
    for m in modules:
        inside = module_of == m
        q_m = float((p[inside, None] * T[np.ix_(inside, ~inside)]).sum())
        exits.append(q_m)
        rates = np.concatenate([[q_m], p[inside]])
        total = rates.sum()
        module_terms += total * entropy(rates / total)
    q = sum(exits)
    index = q * entropy(np.array(exits) / q) if q > 0 else 0.0
    return index + module_terms


class TestPlogp:
    """Test the entropy helpers."""

    def test_zero_is_zero(self):
        assert plogp(0.0) == 0.0
        assert plogp(np.array([0.0, 0.5])).tolist() == [0.0, -0.5]

    def test_entropy_in_bits(self):
        assert entropy([0.25] * 4) == pytest.approx(2.0)


class TestCodelength:
    """Test the codelength of fixed partitions."""

    def test_uniform_four_nodes_one_module(self):
        g = load_edge_list("\n".join(clique_edges(range(4))), directed=False)
        flows = standard_flow(g)
        assert codelength(flows, Partition.from_membership([0, 0, 0, 0])) == pytest.approx(2.0)

    def test_two_nodes_one_module(self):
        flows = standard_flow(load_edge_list("0 1\n", directed=False))
        assert codelength(flows, Partition.from_membership([0, 0])) == pytest.approx(1.0)

    def test_one_module_index_codelength_is_zero(self, two_triangles):
        flows = standard_flow(two_triangles)
        index, module = codelength_terms(flows, Partition.from_membership([0] * 6))
        assert index == 0.0
        assert module == pytest.approx(entropy(flows.visit_rate))

    def test_two_triangles_is_exhaustive_minimum(self, two_triangles):
        flows = standard_flow(two_triangles)
        planted = codelength(flows, Partition.from_membership([0, 0, 0, 1, 1, 1]))
        lengths = [codelength(flows, Partition.from_membership(m)) for m in set_partitions(6)]
        assert planted == pytest.approx(min(lengths))
        assert planted < codelength(flows, Partition.from_membership([0] * 6))

    def test_relabeling_does_not_change_codelength(self, two_triangles):
        flows = standard_flow(two_triangles)
        a = codelength(flows, Partition.from_membership([0, 0, 1, 1, 2, 2]))
        b = codelength(flows, Partition.from_membership([7, 7, 3, 3, 5, 5]))
        assert a == pytest.approx(b, rel=1e-12)

    def test_matches_codebook_form_for_standard_flow(self, two_triangles):
        flows = standard_flow(two_triangles)
        T = two_triangles.adjacency.toarray()
        T = T / T.sum(axis=1, keepdims=True)
        for membership in ([0, 0, 0, 1, 1, 1], [0, 1, 0, 1, 2, 2], [0, 1, 2, 3, 4, 5]):
            module_of = np.array(membership)
            expected = _codebook_codelength(flows.visit_rate, T, module_of)
            assert codelength(flows, Partition.from_membership(module_of)) == pytest.approx(expected)

    @pytest.mark.parametrize("model", [FlowModel.UNIFORM, FlowModel.METADATA])
    def test_matches_dense_oracle_under_prior(self, model):
        g = with_random_labels(random_graph(seed=21, n=9), seed=22)
        flows = compute_flows(g, model)
        T = dense_transition_matrix(g, flows.prior)
        rng = np.random.default_rng(3)
        for _ in range(5):
            module_of = rng.integers(0, 3, size=g.n_nodes)
            expected = _codebook_codelength(flows.visit_rate, T, module_of)
            assert codelength(flows, Partition.from_membership(module_of)) == pytest.approx(expected, abs=1e-10)

    def test_matches_dense_oracle_with_recorded_teleportation(self):
        g = random_graph(seed=23, n=8)
        flows = compute_flows(g, FlowModel.TELEPORT, teleport_alpha=0.2)
        t = g.adjacency.toarray()
        t = t / t.sum(axis=1, keepdims=True)
        T = 0.8 * t + 0.2 / g.n_nodes
        module_of = np.array([0, 0, 1, 1, 1, 2, 2, 0])
        expected = _codebook_codelength(flows.visit_rate, T, module_of)
        assert codelength(flows, Partition.from_membership(module_of)) == pytest.approx(expected, abs=1e-10)

    def test_partition_size_mismatch(self, two_triangles):
        flows = standard_flow(two_triangles)
        with pytest.raises(PartitionError):
            codelength(flows, Partition.from_membership([0, 0, 1]))

    def test_bind_attaches_module_rates(self, two_triangles):
        flows = standard_flow(two_triangles)
        part = Partition.from_membership([0, 0, 0, 1, 1, 1]).bind(flows)
        assert part.module_flow.tolist() == pytest.approx([0.5, 0.5])
        # One unit edge out of total strength 14 in each direction.
        assert part.exit_flow.tolist() == pytest.approx([1 / 14, 1 / 14])
        assert part.exit_total == pytest.approx(1 / 7)


class TestSavings:
    """Test relative savings."""

    def test_savings(self):
        assert codelength_savings(1.5, 2.0) == pytest.approx(0.25)

    def test_one_level_codelength_must_be_positive(self):
        with pytest.raises(DomainError):
            codelength_savings(1.0, 0.0)

    def test_two_triangles_saves_bits(self, two_triangles):
        flows = standard_flow(two_triangles)
        L = codelength(flows, Partition.from_membership([0, 0, 0, 1, 1, 1]))
        L1 = codelength(flows, Partition.from_membership([0] * 6))
        assert 0 < codelength_savings(L, L1) < 1
        assert L1 == pytest.approx(math.log2(14) - sum(
            (s / 14) * math.log2(s) for s in two_triangles.s_out
        ))


class TestPartitionFiles:
    """Test partition serialization."""

    def test_written_partition_reads_back(self):
        part = Partition.from_membership([2, 2, 9, 9])
        buffer = io.StringIO()
        write_partition(part, ["a", "b", "c", "d"], buffer)
        assert read_partition(buffer.getvalue()) == {"a": "0", "b": "0", "c": "1", "d": "1"}

    def test_malformed_partition_line(self):
        with pytest.raises(ParseError):
            read_partition("a 0\nb\n")
