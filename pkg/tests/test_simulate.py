"""Tests for experiment execution, replay determinism and bound validation."""

import math

import numpy as np
import pytest

from sociallearn.graphs import (
    Graph,
    GraphSequence,
    WeightSchedule,
    directed_cycle,
    edgeless_graph,
    lazy_metropolis_weights,
    ring_graph,
)
from sociallearn.hypotheses import LikelihoodModel
from sociallearn.rules import BeliefMatrix, DegenerateUpdateError, geometric_then_bayes
from sociallearn.simulate import (
    AssumptionError,
    ExperimentConfig,
    TrajectoryLog,
    _attach_step,
    bound_report_for_config,
    default_burn_in,
    empirical_decay_rate,
    logged_steps,
    make_rng,
    mirror_descent_oracle,
    monte_carlo_validate,
    run_experiment,
    sample_signals,
    validate_config,
    wilson_interval,
)

INFORMATIVE_ROWS = [[0.8, 0.2], [0.2, 0.8], [0.5, 0.5]]


def ring_model(n=3):
    """Identifiable three-hypothesis model: hypothesis 0 matches the truth."""
    return LikelihoodModel.from_arrays(
        [INFORMATIVE_ROWS] * n, [[0.8, 0.2]] * n, alpha=0.2
    )


def binary_model(n):
    """Two mirror-image hypotheses; large objective gap for fast transients."""
    rows = [[0.8, 0.2], [0.2, 0.8]]
    return LikelihoodModel.from_arrays([rows] * n, [[0.8, 0.2]] * n, alpha=0.2)


def ring_config(**overrides):
    n = overrides.pop("n", 3)
    graph = ring_graph(n)
    base = dict(
        model=ring_model(n),
        graphs=GraphSequence.static(graph),
        rule="geometric-then-bayes",
        weights=WeightSchedule.from_graphs(GraphSequence.static(graph), "lazy-metropolis"),
        horizon=50,
        seed=7,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def single_agent_config(**overrides):
    graph = edgeless_graph(1)
    base = dict(
        model=ring_model(1),
        graphs=GraphSequence.static(graph),
        rule="geometric-then-bayes",
        weights=WeightSchedule.static(np.array([[1.0]]), eta=1.0),
        horizon=60,
        seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestSampling:
    def test_degenerate_truth_is_deterministic(self):
        model = LikelihoodModel.from_arrays(
            [[[1.0, 0.0], [0.5, 0.5]], [[0.5, 0.5], [0.0, 1.0]]],
            [[1.0, 0.0], [0.0, 1.0]],
            alpha=0.4,
        )
        rng = make_rng(0)
        for _ in range(100):
            signals = sample_signals(model, rng)
            assert signals[0] == 0 and signals[1] == 1

    def test_same_seed_same_stream(self):
        model = ring_model()
        a = [sample_signals(model, make_rng(42)) for _ in range(1)]
        rng1, rng2 = make_rng(42), make_rng(42)
        for _ in range(50):
            np.testing.assert_array_equal(
                sample_signals(model, rng1), sample_signals(model, rng2)
            )
        assert a  # first draw block exists

    def test_streams_are_independent(self):
        first = make_rng(5, 0).random(8)
        second = make_rng(5, 1).random(8)
        salted = make_rng(5, 1, 3).random(8)
        assert not np.array_equal(first, second)
        assert not np.array_equal(second, salted)

    def test_long_run_frequency(self):
        model = LikelihoodModel.from_arrays(
            [[[0.7, 0.3]]], [[0.7, 0.3]], alpha=0.3
        )
        rng = make_rng(99)
        draws = np.array([sample_signals(model, rng)[0] for _ in range(100_000)])
        freq = (draws == 0).mean()
        assert abs(freq - 0.7) < 0.01


class TestExperimentConfig:
    def test_replicate_seeds_are_consecutive(self):
        config = ring_config(replicates=3, seed=40)
        assert [config.replicate_seed(r) for r in range(3)] == [40, 41, 42]
        with pytest.raises(ValueError):
            config.replicate_seed(3)
        with pytest.raises(ValueError):
            config.replicate_seed(-1)

    def test_resolved_sigma_prefers_explicit(self):
        config = ring_config(rule="accelerated", sigma=0.25, grid_size=4.0)
        assert config.resolved_sigma() == 0.25
        derived = ring_config(rule="accelerated", grid_size=4.0)
        assert derived.resolved_sigma() == pytest.approx(1.0 - 2.0 / 37.0, rel=1e-12)
        with pytest.raises(ValueError):
            ring_config(rule="accelerated").resolved_sigma()

    def test_constructor_guards(self):
        with pytest.raises(ValueError):
            ring_config(rule="unheard-of")
        with pytest.raises(ValueError):
            ring_config(horizon=-1)
        with pytest.raises(ValueError):
            ring_config(stride=0)
        with pytest.raises(ValueError):
            ring_config(replicates=0)
        with pytest.raises(ValueError):
            ring_config(rho=1.0)

    def test_initial_beliefs_default_uniform(self):
        config = ring_config()
        np.testing.assert_allclose(
            config.initial_beliefs().linear, np.full((3, 3), 1.0 / 3.0), atol=1e-15
        )

    def test_logged_steps_include_endpoints(self):
        np.testing.assert_array_equal(logged_steps(10, 4), [0, 4, 8, 10])
        np.testing.assert_array_equal(logged_steps(9, 3), [0, 3, 6, 9])
        np.testing.assert_array_equal(logged_steps(0, 5), [0])


class TestValidateConfig:
    def test_clean_config_passes(self):
        validate_config(ring_config())

    def test_model_violation_rejected(self):
        bad = LikelihoodModel.from_arrays(
            [[[0.8, 0.1], [0.2, 0.8]]] * 3, [[0.8, 0.2]] * 3, alpha=0.05
        )
        with pytest.raises(AssumptionError):
            validate_config(ring_config(model=bad))

    def test_initial_rows_shape_checked(self):
        with pytest.raises(AssumptionError):
            validate_config(ring_config(initial_rows=np.full((2, 2), 0.5)))

    def test_optimal_support_required(self):
        rows = np.array([[0.0, 1.0], [0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(AssumptionError):
            validate_config(ring_config(initial_rows=rows))

    def test_disconnected_graph_rejected(self):
        graph = edgeless_graph(3)
        config = ring_config(
            graphs=GraphSequence.static(graph),
            weights=WeightSchedule.static(np.eye(3), eta=1.0),
        )
        with pytest.raises(AssumptionError):
            validate_config(config)

    def test_missing_weights_rejected(self):
        with pytest.raises(AssumptionError):
            validate_config(ring_config(weights=None))

    def test_accelerated_needs_lazy_metropolis(self):
        graph = ring_graph(3)
        config = ring_config(
            rule="accelerated",
            sigma=0.2,
            weights=WeightSchedule.static(lazy_metropolis_weights(graph) * 0.999 + 0.001 / 3),
        )
        with pytest.raises(AssumptionError):
            validate_config(config)

    def test_accelerated_rejects_directed_graph(self):
        graph = directed_cycle(3)
        config = ring_config(
            rule="accelerated",
            sigma=0.2,
            graphs=GraphSequence.static(graph),
        )
        with pytest.raises(AssumptionError):
            validate_config(config)

    def test_gossip_rejects_directed_graph(self):
        config = ring_config(
            rule="gossip", graphs=GraphSequence.static(directed_cycle(3)), weights=None
        )
        with pytest.raises(AssumptionError):
            validate_config(config)

    def test_waive_skips_validation(self):
        graph = edgeless_graph(3)
        config = ring_config(
            graphs=GraphSequence.static(graph),
            weights=WeightSchedule.static(np.eye(3), eta=1.0),
            waive=True,
            horizon=5,
        )
        log = run_experiment(config)
        assert log.logged_count() == 6


class TestRunExperiment:
    def test_replay_is_bit_identical(self):
        config = ring_config(horizon=80)
        a = run_experiment(config)
        b = run_experiment(config)
        assert np.array_equal(a.log_beliefs, b.log_beliefs)
        assert np.array_equal(a.signals, b.signals)
        assert np.array_equal(a.step_indices, b.step_indices)

    def test_zero_horizon_records_initial_only(self):
        config = ring_config(horizon=0)
        log = run_experiment(config)
        assert log.logged_count() == 1
        assert log.signals.shape == (0, 3)
        np.testing.assert_allclose(np.exp(log.log_beliefs[0]), 1.0 / 3.0, atol=1e-15)

    def test_replicate_index_shifts_seed(self):
        config = ring_config(replicates=3, seed=10)
        third = run_experiment(config, replicate=2)
        direct = run_experiment(ring_config(seed=12))
        assert third.seed == 12
        assert np.array_equal(third.signals, direct.signals)
        assert np.array_equal(third.log_beliefs, direct.log_beliefs)

    def test_single_agent_matches_manual_bayes(self):
        config = single_agent_config(horizon=40)
        log = run_experiment(config)
        model = config.model
        belief = np.full(3, 1.0 / 3.0)
        for k in range(40):
            like = model.likelihoods[0][:, int(log.signals[k, 0])]
            belief = belief * like
            belief /= belief.sum()
        np.testing.assert_allclose(np.exp(log.log_beliefs[-1, 0]), belief, atol=1e-12)

    def test_common_randomness_across_rules(self):
        signals = {}
        for rule in ("bayes", "geometric-then-bayes", "push-sum"):
            config = ring_config(rule=rule, horizon=30)
            signals[rule] = run_experiment(config).signals
        assert np.array_equal(signals["bayes"], signals["geometric-then-bayes"])
        assert np.array_equal(signals["bayes"], signals["push-sum"])

    def test_network_learns_identifiable_truth(self):
        config = ring_config(horizon=500, stride=100)
        log = run_experiment(config)
        final = np.exp(log.log_beliefs[-1])
        assert (final[:, 0] > 0.99).all()

    def test_reaction_zero_gamma_tracks_bayes(self):
        bayes = run_experiment(single_agent_config(rule="bayes", horizon=50))
        reaction = run_experiment(
            single_agent_config(rule="reaction", reaction_gamma=0.0, horizon=50)
        )
        np.testing.assert_allclose(
            np.exp(reaction.log_beliefs), np.exp(bayes.log_beliefs), atol=1e-12
        )

    def test_push_sum_records_weights(self):
        config = ring_config(
            rule="push-sum",
            graphs=GraphSequence.static(directed_cycle(3)),
            weights=None,
            horizon=40,
        )
        log = run_experiment(config)
        assert log.y_history is not None
        assert log.y_history.shape == (log.logged_count(), 3)
        # A directed cycle is 2-regular under self-inclusion, so the weights
        # never leave 1.
        np.testing.assert_array_equal(log.y_history, np.ones_like(log.y_history))

    def test_gossip_records_activated_edges(self):
        config = ring_config(rule="gossip", weights=None, horizon=60)
        log = run_experiment(config)
        assert log.activations is not None
        assert log.activations.shape == (60, 2)
        edges = set(ring_graph(3).undirected_pairs())
        for a, b in log.activations:
            assert (min(a, b), max(a, b)) in edges
        again = run_experiment(config)
        assert np.array_equal(log.activations, again.activations)
        assert np.array_equal(log.log_beliefs, again.log_beliefs)

    def test_failures_carry_step_context(self):
        # Zero likelihood for the only signal the truth emits; the declared
        # floor is left at its (vacuous) feasible default of zero.
        model = LikelihoodModel.from_arrays(
            [[[0.0, 1.0], [0.5, 0.5]]], [[1.0, 0.0]]
        )
        config = single_agent_config(
            model=model,
            rule="bayes",
            initial_rows=np.array([[1.0, 0.0]]),
            waive=True,
            horizon=5,
        )
        with pytest.raises(DegenerateUpdateError, match="^step 0: "):
            run_experiment(config)


class TestAttachStep:
    def test_prefix_and_identity(self):
        err = DegenerateUpdateError("normalizer vanished")
        out = _attach_step(err, 7)
        assert out is err
        assert out.args == ("step 7: normalizer vanished",)
        assert isinstance(out, ArithmeticError)

    def test_empty_args_fall_back_to_class_name(self):
        err = ArithmeticError()
        out = _attach_step(err, 3)
        assert out.args == ("step 3: ArithmeticError",)


class TestMirrorDescentOracle:
    def test_single_agent_uniform_is_bayes(self):
        model = binary_model(1)
        beliefs = BeliefMatrix.uniform(1, 2)
        out = mirror_descent_oracle(beliefs, 0, np.array([1.0]), model, 0)
        np.testing.assert_allclose(out, [0.8, 0.2], atol=1e-9)

    def test_self_weight_row_ignores_neighbors(self):
        model = binary_model(2)
        beliefs = BeliefMatrix.from_rows([[0.3, 0.7], [0.9, 0.1]])
        out = mirror_descent_oracle(beliefs, 0, np.array([1.0, 0.0]), model, 0)
        expected = np.array([0.3 * 0.8, 0.7 * 0.2])
        expected /= expected.sum()
        np.testing.assert_allclose(out, expected, atol=1e-9)

    def test_matches_geometric_then_bayes_on_random_instances(self):
        rng = np.random.default_rng(181)
        for _ in range(10):
            n = int(rng.integers(2, 5))
            m = int(rng.integers(2, 5))
            rows = []
            for _ in range(n):
                table = rng.dirichlet(np.ones(3), size=m) + 0.02
                rows.append(table / table.sum(axis=1, keepdims=True))
            model = LikelihoodModel.from_arrays(
                rows, [rng.dirichlet(np.ones(3)) for _ in range(n)], alpha=0.01
            )
            weights = lazy_metropolis_weights(ring_graph(n)) if n > 2 else np.full(
                (2, 2), 0.5
            )
            beliefs = BeliefMatrix.from_rows(rng.dirichlet(np.ones(m), size=n))
            signals = [int(s) for s in rng.integers(0, 3, size=n)]
            closed = geometric_then_bayes(beliefs, signals, model, weights)
            for i in range(n):
                solved = mirror_descent_oracle(
                    beliefs, signals[i], weights[i], model, i, tol=1e-12
                )
                gap = 0.5 * np.abs(solved - closed.linear[i]).sum()
                assert gap <= 1e-8

    def test_invalid_weight_row_rejected(self):
        model = binary_model(2)
        beliefs = BeliefMatrix.uniform(2, 2)
        with pytest.raises(ValueError):
            mirror_descent_oracle(beliefs, 0, np.array([0.7, 0.7]), model, 0)


def synthetic_log(values, stride=1):
    arr = np.asarray(values, dtype=float)
    steps = np.arange(arr.size) * stride
    return TrajectoryLog(
        rule="bayes",
        seed=0,
        rng_name="pcg64",
        stride=stride,
        step_indices=steps,
        log_beliefs=arr[:, None, None],
        signals=np.zeros((arr.size - 1, 1), dtype=int),
    )


class TestDecayRate:
    def test_linear_log_slope_recovered(self):
        ks = np.arange(200, dtype=float)
        log = synthetic_log(-0.2 * ks)
        assert empirical_decay_rate(log, 0, 0, burn_in=20) == pytest.approx(
            0.2, rel=1e-10
        )

    def test_constant_belief_has_zero_rate(self):
        log = synthetic_log(np.full(100, -1.5))
        assert empirical_decay_rate(log, 0, 0, burn_in=10) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_exact_zero_maps_to_infinity(self):
        values = -0.1 * np.arange(100, dtype=float)
        values[70] = -math.inf
        log = synthetic_log(values)
        assert empirical_decay_rate(log, 0, 0, burn_in=10) == math.inf

    def test_needs_two_points_past_burn_in(self):
        log = synthetic_log(np.zeros(5))
        with pytest.raises(ValueError):
            empirical_decay_rate(log, 0, 0, burn_in=4)

    def test_default_burn_in_floor(self):
        assert default_burn_in(1000) == 250
        assert default_burn_in(10) == 50


class TestWilsonInterval:
    def test_matches_direct_formula(self):
        z = 1.959963984540054
        low, high = wilson_interval(3, 10)
        p, t = 0.3, 10
        denom = 1 + z * z / t
        center = (p + z * z / (2 * t)) / denom
        half = z * math.sqrt(p * (1 - p) / t + z * z / (4 * t * t)) / denom
        assert low == pytest.approx(center - half, rel=1e-12)
        assert high == pytest.approx(center + half, rel=1e-12)

    def test_boundary_cases(self):
        low, _ = wilson_interval(0, 50)
        assert low == pytest.approx(0.0, abs=1e-12)
        _, high = wilson_interval(50, 50)
        assert high <= 1.0
        with pytest.raises(ValueError):
            wilson_interval(0, 0)

    def test_interval_contains_point_estimate(self):
        rng = np.random.default_rng(191)
        for _ in range(50):
            t = int(rng.integers(1, 500))
            s = int(rng.integers(0, t + 1))
            low, high = wilson_interval(s, t)
            assert low <= s / t <= high


class TestBoundDispatch:
    def test_geometric_then_bayes_uses_mixing_regime(self):
        report = bound_report_for_config(ring_config())
        assert report.rule == "theorem-1"

    def test_accelerated_uses_static_regime(self):
        config = ring_config(rule="accelerated", grid_size=4.0)
        report = bound_report_for_config(config)
        assert report.rule == "theorem-2"
        assert report.extras["grid_size"] == 4.0

    def test_push_sum_detects_regular_graph(self):
        config = ring_config(
            rule="push-sum", graphs=GraphSequence.static(directed_cycle(3)), weights=None
        )
        assert bound_report_for_config(config).rule == "theorem-3-regular"

    def test_push_sum_general_for_irregular_graph(self):
        graph = Graph.from_arcs(3, [(0, 1), (1, 2), (2, 0), (0, 2)])
        config = ring_config(
            rule="push-sum", graphs=GraphSequence.static(graph), weights=None
        )
        assert bound_report_for_config(config).rule == "theorem-3-general"

    def test_unsupported_rules_rejected(self):
        with pytest.raises(ValueError):
            bound_report_for_config(ring_config(rule="bayes"))
        with pytest.raises(ValueError):
            bound_report_for_config(ring_config(rule="accelerated"))


class TestMonteCarloValidate:
    def test_summary_structure_and_counts(self):
        config = ring_config(
            model=binary_model(3), horizon=300, stride=10, replicates=3, rho=0.1
        )
        summary = monte_carlo_validate(config)
        assert summary.rule == "theorem-1"
        assert summary.replicates == 3
        assert summary.violations == 0
        assert summary.frequency == 0.0
        assert summary.wilson_low == pytest.approx(0.0, abs=1e-12)
        assert summary.checked_to == 300
        assert summary.checked_from >= summary.n_rho
        # Optimal hypothesis column carries no decay estimate.
        assert np.isnan(summary.decay_rates[:, 0]).all()
        assert (summary.decay_rates[:, 1] > 0).all()
        doc = summary.to_json_dict()
        assert doc["decay_rates"][0][0] is None
        assert doc["violations"] == 0

    def test_window_beyond_horizon_checks_nothing(self):
        config = ring_config(
            model=binary_model(3), horizon=40, stride=5, replicates=2, rho=1e-30
        )
        summary = monte_carlo_validate(config)
        assert summary.n_rho > 40
        assert summary.checked_from == 40
        assert summary.violations == 0
