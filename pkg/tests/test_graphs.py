"""Tests for graph families, weight matrices, connectivity, and spectra."""

import numpy as np
import pytest

from sociallearn.graphs import (
    Graph,
    GraphSequence,
    ReducibleMatrixError,
    WeightSchedule,
    b_connectivity_check,
    complete_graph,
    directed_cycle,
    edgeless_graph,
    lazy_metropolis_weights,
    metropolis_weights,
    path_graph,
    ring_graph,
    second_eigenvalue_modulus,
    stationary_distribution,
    validate_weight_schedule,
)


def random_undirected(rng, n, p=0.5):
    pairs = [
        (i, j)
        for i in range(n)
        for j in range(i + 1, n)
        if rng.random() < p
    ]
    return Graph.undirected(n, pairs)


class TestGraphBasics:
    def test_ring_of_three_is_triangle(self):
        g = ring_graph(3)
        assert g.n == 3
        assert g.degree(0) == 2
        assert sorted(g.undirected_pairs()) == [(0, 1), (0, 2), (1, 2)]

    def test_ring_of_two_single_edge(self):
        g = ring_graph(2)
        assert g.undirected_pairs() == ((0, 1),)

    def test_path_degrees(self):
        g = path_graph(4)
        assert [g.degree(i) for i in range(4)] == [1, 2, 2, 1]

    def test_complete_graph_regular(self):
        g = complete_graph(4)
        assert g.is_regular()
        assert g.degree(2) == 3

    def test_directed_cycle_arcs(self):
        g = directed_cycle(3)
        assert g.directed
        assert g.out_neighbors(0) == (1,)
        assert g.in_neighbors(0) == (2,)

    def test_self_loops_rejected(self):
        with pytest.raises(ValueError):
            Graph.from_arcs(2, [(0, 0)])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            Graph.undirected(2, [(0, 2)])


class TestMetropolisWeights:
    def test_two_node_edge(self):
        mat = metropolis_weights(ring_graph(2))
        np.testing.assert_allclose(mat, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)

    def test_edgeless_identity(self):
        mat = metropolis_weights(edgeless_graph(3))
        np.testing.assert_allclose(mat, np.eye(3), atol=0)

    def test_three_node_path(self):
        mat = metropolis_weights(path_graph(3))
        third = 1.0 / 3.0
        expected = np.array(
            [
                [2 * third, third, 0.0],
                [third, third, third],
                [0.0, third, 2 * third],
            ]
        )
        np.testing.assert_allclose(mat, expected, atol=1e-15)

    def test_directed_input_rejected(self):
        with pytest.raises(ValueError):
            metropolis_weights(directed_cycle(3))

    def test_symmetric_doubly_stochastic_on_random_graphs(self):
        rng = np.random.default_rng(404)
        for _ in range(60):
            n = int(rng.integers(2, 8))
            g = random_undirected(rng, n)
            mat = metropolis_weights(g)
            np.testing.assert_allclose(mat, mat.T, atol=1e-15)
            np.testing.assert_allclose(mat.sum(axis=0), np.ones(n), atol=1e-12)
            np.testing.assert_allclose(mat.sum(axis=1), np.ones(n), atol=1e-12)
            assert (mat >= 0).all()


class TestLazyMetropolisWeights:
    def test_two_node_edge(self):
        mat = lazy_metropolis_weights(ring_graph(2))
        np.testing.assert_allclose(mat, [[0.75, 0.25], [0.25, 0.75]], atol=1e-15)

    def test_edgeless_identity(self):
        np.testing.assert_allclose(
            lazy_metropolis_weights(edgeless_graph(2)), np.eye(2), atol=0
        )

    def test_three_node_path_diagonal(self):
        mat = lazy_metropolis_weights(path_graph(3))
        np.testing.assert_allclose(
            np.diag(mat), [5.0 / 6.0, 2.0 / 3.0, 5.0 / 6.0], atol=1e-15
        )
        assert mat[0, 1] == pytest.approx(1.0 / 6.0, abs=1e-15)
        assert mat[0, 2] == 0.0

    def test_diagonal_at_least_half_on_random_graphs(self):
        rng = np.random.default_rng(505)
        for _ in range(60):
            n = int(rng.integers(2, 8))
            mat = lazy_metropolis_weights(random_undirected(rng, n))
            assert (np.diag(mat) >= 0.5 - 1e-15).all()


class TestWeightScheduleValidation:
    def test_lazy_metropolis_static_clean(self):
        graphs = GraphSequence.static(ring_graph(4))
        schedule = WeightSchedule.from_graphs(graphs, "lazy-metropolis")
        report = validate_weight_schedule(schedule, graphs, 10)
        assert report.ok
        assert report.violations == ()

    def test_zero_diagonal_flagged(self):
        graphs = GraphSequence.static(ring_graph(2))
        mat = np.array([[0.0, 1.0], [1.0, 0.0]])
        schedule = WeightSchedule.static(mat, eta=1.0)
        report = validate_weight_schedule(schedule, graphs, 3)
        kinds = {v.kind for v in report.violations}
        assert "diagonal" in kinds

    def test_floor_violation_flagged(self):
        graphs = GraphSequence.static(ring_graph(2))
        mat = np.array([[1.0 - 1e-9, 1e-9], [1e-9, 1.0 - 1e-9]])
        schedule = WeightSchedule.static(mat, eta=1e-3)
        report = validate_weight_schedule(schedule, graphs, 1)
        kinds = {v.kind for v in report.violations}
        assert "floor" in kinds

    def test_nonconforming_entry_flagged(self):
        graphs = GraphSequence.static(edgeless_graph(2))
        mat = np.array([[0.5, 0.5], [0.5, 0.5]])
        schedule = WeightSchedule.static(mat, eta=0.5)
        report = validate_weight_schedule(schedule, graphs, 1)
        kinds = {v.kind for v in report.violations}
        assert "conformance" in kinds

    def test_column_check_only_when_required(self):
        graphs = GraphSequence.static(ring_graph(2))
        mat = np.array([[0.7, 0.3], [0.5, 0.5]])
        schedule = WeightSchedule.static(mat, eta=0.3)
        strict = validate_weight_schedule(schedule, graphs, 1)
        assert "column-sum" in {v.kind for v in strict.violations}
        relaxed = validate_weight_schedule(
            schedule, graphs, 1, require_doubly_stochastic=False
        )
        assert "column-sum" not in {v.kind for v in relaxed.violations}


class TestBConnectivity:
    def test_static_complete_connected(self):
        graphs = GraphSequence.static(complete_graph(3))
        result = b_connectivity_check(graphs, 1, 6)
        assert result.ok
        assert result.first_failing_window is None

    def test_alternating_sequence_needs_window_two(self):
        present = ring_graph(2)
        absent = edgeless_graph(2)
        graphs = GraphSequence.cyclic([present, absent])
        assert b_connectivity_check(graphs, 2, 8).ok
        failing = b_connectivity_check(graphs, 1, 8)
        assert not failing.ok
        assert failing.first_failing_window == 1

    def test_directed_cycle_strongly_connected(self):
        graphs = GraphSequence.static(directed_cycle(3))
        assert b_connectivity_check(graphs, 1, 3).ok

    def test_one_way_pair_not_strongly_connected(self):
        graphs = GraphSequence.static(Graph.from_arcs(2, [(0, 1)]))
        result = b_connectivity_check(graphs, 1, 2)
        assert not result.ok
        assert result.first_failing_window == 0

    def test_multiple_of_b_agrees(self):
        rng = np.random.default_rng(606)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            cycle = [random_undirected(rng, n, p=0.7) for _ in range(2)]
            graphs = GraphSequence.cyclic(cycle)
            if b_connectivity_check(graphs, 2, 8).ok:
                assert b_connectivity_check(graphs, 4, 8).ok

    def test_horizon_must_be_multiple(self):
        graphs = GraphSequence.static(ring_graph(3))
        with pytest.raises(ValueError):
            b_connectivity_check(graphs, 2, 5)


class TestStationaryDistribution:
    def test_doubly_stochastic_gives_uniform(self):
        mat = lazy_metropolis_weights(ring_graph(4))
        pi = stationary_distribution(mat)
        np.testing.assert_allclose(pi, np.full(4, 0.25), atol=1e-10)

    def test_hand_solved_two_state_chain(self):
        mat = np.array([[0.9, 0.1], [0.3, 0.7]])
        pi = stationary_distribution(mat)
        np.testing.assert_allclose(pi, [0.75, 0.25], atol=1e-10)

    def test_single_state(self):
        np.testing.assert_allclose(stationary_distribution(np.array([[1.0]])), [1.0])

    def test_residual_bound_holds(self):
        rng = np.random.default_rng(707)
        for _ in range(40):
            n = int(rng.integers(2, 6))
            mat = rng.dirichlet(np.ones(n), size=n) + 1e-3
            mat /= mat.sum(axis=1, keepdims=True)
            pi = stationary_distribution(mat)
            assert np.abs(pi @ mat - pi).sum() <= 1e-10
            assert (pi > 0).all()

    def test_absorbing_chain_raises(self):
        # The transient state loses all stationary mass, which the positivity
        # check converts into a reducibility error.
        mat = np.array([[1.0, 0.0], [0.5, 0.5]])
        with pytest.raises(ReducibleMatrixError):
            stationary_distribution(mat)

    def test_periodic_chain_still_converges(self):
        # A pure swap has no power-iteration limit without the lazy step.
        mat = np.array([[0.0, 1.0], [1.0, 0.0]])
        pi = stationary_distribution(mat)
        np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-10)


class TestSecondEigenvalueModulus:
    def test_rank_one_matrix(self):
        assert second_eigenvalue_modulus(np.array([[0.5, 0.5], [0.5, 0.5]])) == (
            pytest.approx(0.0, abs=1e-12)
        )

    def test_identity_has_repeated_one(self):
        assert second_eigenvalue_modulus(np.eye(2)) == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_circulant(self):
        mat = np.array([[0.75, 0.25], [0.25, 0.75]])
        assert second_eigenvalue_modulus(mat) == pytest.approx(0.5, abs=1e-12)

    def test_single_state_is_zero(self):
        assert second_eigenvalue_modulus(np.array([[1.0]])) == 0.0
