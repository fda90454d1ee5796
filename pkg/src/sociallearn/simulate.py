"""Seeded experiment execution, Monte Carlo bound checking and numerical oracles.

Signals are drawn once per step per agent from a PCG64 generator, so runs
with the same seed are bit-identical and different rules see the same signal
stream.  Gossip activations come from a second stream derived from the same
seed, keeping signal draws aligned across rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .bounds import (
    BoundReport,
    theorem1_report,
    theorem2_report,
    theorem3_report,
)
from .graphs import (
    Graph,
    GraphSequence,
    WeightSchedule,
    b_connectivity_check,
    lazy_metropolis_weights,
    validate_weight_schedule,
)
from .hypotheses import LikelihoodModel, optimal_set, validate_model
from .rules import (
    AcceleratedState,
    BeliefMatrix,
    DualAveragingState,
    PushSumState,
    _log_normalize_rows,
    _weighted_log_mix,
    accelerated_update,
    bayes_then_geometric,
    degroot_social_update,
    geometric_then_bayes,
    gossip_dual_averaging_step,
    push_sum_update,
    reaction_update,
)

RNG_NAME = "pcg64"

RULE_NAMES = (
    "bayes",
    "reaction",
    "degroot",
    "bayes-then-geometric",
    "geometric-then-bayes",
    "accelerated",
    "push-sum",
    "gossip",
)

# Rules that mix through a stochastic weight matrix each step.
WEIGHTED_RULES = ("degroot", "bayes-then-geometric", "geometric-then-bayes", "accelerated")

# Rules whose analysis needs doubly stochastic weights.
DOUBLY_STOCHASTIC_RULES = ("geometric-then-bayes", "accelerated")


class AssumptionError(ValueError):
    """A configured run violates the assumptions of its update rule."""


class OracleConvergenceError(RuntimeError):
    """The iterative oracle did not reach its tolerance within the budget."""


def make_rng(seed: int, stream: int = 0, salt: int | None = None) -> np.random.Generator:
    """Seeded PCG64 generator; distinct streams never share draws."""
    key: tuple[int, ...] = (seed, stream) if salt is None else (seed, stream, salt)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def sample_signals(model: LikelihoodModel, rng: np.random.Generator) -> np.ndarray:
    """One signal index per agent, by inverse CDF on a single uniform block."""
    draws = rng.random(model.n)
    out = np.empty(model.n, dtype=int)
    for i in range(model.n):
        cum = model.truth_cumulative[i]
        out[i] = min(int(np.searchsorted(cum, draws[i], side="right")), cum.size - 1)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved description of one experiment.

    ``initial_rows`` is linear-domain, one row per agent; None means
    uniform.  ``document`` carries the resolved configuration mapping for
    manifests and ``source_sha256`` the hash of the exact bytes it was
    parsed from.
    """

    model: LikelihoodModel
    graphs: GraphSequence
    rule: str
    weights: WeightSchedule | None = None
    horizon: int = 100
    replicates: int = 1
    seed: int = 0
    stride: int = 1
    rho: float = 0.1
    b_window: int = 1
    reaction_gamma: float = 0.0
    sigma: float | None = None
    grid_size: float | None = None
    step_size: float = 1.0
    gossip_salt: int = 0
    initial_rows: np.ndarray | None = None
    waive: bool = False
    document: Mapping | None = None
    source_sha256: str | None = None

    def __post_init__(self) -> None:
        if self.rule not in RULE_NAMES:
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be nonnegative, got {self.horizon}")
        if self.replicates < 1:
            raise ValueError(f"need at least one replicate, got {self.replicates}")
        if self.stride < 1:
            raise ValueError(f"stride must be at least 1, got {self.stride}")
        if self.b_window < 1:
            raise ValueError(f"connectivity window must be at least 1, got {self.b_window}")
        if not (0 < self.rho < 1):
            raise ValueError(f"failure probability must lie in (0, 1), got {self.rho}")
        if self.initial_rows is not None:
            arr = np.array(self.initial_rows, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, "initial_rows", arr)

    def replicate_seed(self, replicate: int) -> int:
        if not (0 <= replicate < self.replicates):
            raise ValueError(f"replicate {replicate} outside 0..{self.replicates - 1}")
        return self.seed + replicate

    def initial_beliefs(self) -> BeliefMatrix:
        if self.initial_rows is None:
            return BeliefMatrix.uniform(self.model.n, self.model.m)
        return BeliefMatrix.from_rows(self.initial_rows)

    def resolved_sigma(self) -> float:
        """Momentum weight: explicit sigma wins, else derived from grid_size."""
        if self.sigma is not None:
            return self.sigma
        if self.grid_size is not None:
            return 1.0 - 2.0 / (9.0 * self.grid_size + 1.0)
        raise ValueError("accelerated rule needs sigma or a scale parameter of at least n")


@dataclass(frozen=True)
class TrajectoryLog:
    """Everything needed to replay or audit one replicate bit-for-bit.

    ``log_beliefs`` holds the log-domain rows at the recorded step indices;
    ``signals`` has one row per executed step.  ``y_history`` (push-sum
    weights) and ``activations`` (gossip pairs) are present only for the
    rules that produce them.
    """

    rule: str
    seed: int
    rng_name: str
    stride: int
    step_indices: np.ndarray
    log_beliefs: np.ndarray
    signals: np.ndarray
    y_history: np.ndarray | None = None
    activations: np.ndarray | None = None

    def logged_count(self) -> int:
        return int(self.step_indices.size)


def logged_steps(horizon: int, stride: int) -> np.ndarray:
    """Step indices recorded for a run: every stride-th step plus the last."""
    steps = list(range(0, horizon + 1, stride))
    if steps[-1] != horizon:
        steps.append(horizon)
    return np.array(steps, dtype=int)


def _validation_horizon(period: int | None, b_window: int, horizon: int) -> int:
    """Window count covering all distinct windows of a periodic sequence."""
    if period:
        span = math.lcm(period, b_window)
    else:
        span = max(b_window, min(horizon, 1000))
        span += (-span) % b_window
    return max(span, b_window)


def validate_config(config: ExperimentConfig) -> None:
    """Enforce the model, weight and connectivity assumptions of the rule.

    Raises AssumptionError on the first failure; runs skip this entirely
    when the config waives validation.
    """
    report = validate_model(config.model)
    if not report.ok:
        first = report.violations[0]
        raise AssumptionError(
            f"model violates its contract ({len(report.violations)} finding(s)); "
            f"first: {first.detail}"
        )
    if config.initial_rows is not None:
        rows = np.asarray(config.initial_rows, dtype=float)
        if rows.shape != (config.model.n, config.model.m):
            raise AssumptionError(
                f"initial beliefs shape {rows.shape} does not fit the model"
            )
        try:
            BeliefMatrix.from_rows(rows)
        except ValueError as err:
            raise AssumptionError(f"initial beliefs invalid: {err}") from err
    initial = config.initial_beliefs()
    best = optimal_set(config.model)
    shared = set(best)
    for i in range(config.model.n):
        shared &= {t for t in best if initial.row(i)[t] > 0}
    if not shared:
        raise AssumptionError(
            "no objective-minimizing hypothesis receives positive initial mass from every agent"
        )
    needs_network = config.rule in WEIGHTED_RULES or config.rule in ("push-sum", "gossip")
    if needs_network and config.model.n > 1:
        result = b_connectivity_check(
            config.graphs,
            config.b_window,
            _validation_horizon(config.graphs.period, config.b_window, config.horizon),
        )
        if not result.ok:
            raise AssumptionError(
                f"graph sequence is not B-connected: window {result.first_failing_window} fails"
            )
    if config.rule in WEIGHTED_RULES:
        if config.weights is None:
            raise AssumptionError(f"rule {config.rule!r} needs a weight schedule")
        horizon = _validation_horizon(
            config.weights.period if config.weights.period == config.graphs.period else None,
            config.b_window,
            config.horizon,
        )
        weight_report = validate_weight_schedule(
            config.weights,
            config.graphs,
            horizon,
            require_doubly_stochastic=config.rule in DOUBLY_STOCHASTIC_RULES,
        )
        if not weight_report.ok:
            first = weight_report.violations[0]
            raise AssumptionError(
                f"weight schedule violates its contract ({len(weight_report.violations)} "
                f"finding(s)); first at step {first.k}: {first.detail}"
            )
    if config.rule == "accelerated":
        if config.graphs.period != 1:
            raise AssumptionError("the accelerated rule runs on a static graph")
        graph = config.graphs.graph_at(0)
        if graph.directed:
            raise AssumptionError("the accelerated rule needs an undirected graph")
        expected = lazy_metropolis_weights(graph)
        if config.weights is None or not np.allclose(
            config.weights.matrix_at(0), expected, atol=1e-12
        ):
            raise AssumptionError("the accelerated rule requires lazy-Metropolis weights")
        sigma = config.resolved_sigma()
        if not (0.0 <= sigma < 1.0):
            raise AssumptionError(f"momentum weight {sigma} outside [0, 1)")
    if config.rule == "gossip":
        if config.graphs.period != 1:
            raise AssumptionError("gossip runs on a static graph")
        if config.graphs.graph_at(0).directed:
            raise AssumptionError("gossip needs an undirected graph")


def _attach_step(err: ArithmeticError, k: int) -> ArithmeticError:
    """Prefix a rule failure with the step index it occurred at."""
    detail = err.args[0] if err.args else err.__class__.__name__
    err.args = (f"step {k}: {detail}",)
    return err


def _gossip_pair(graph: Graph, rng: np.random.Generator) -> tuple[int, int]:
    """Uniform edge activation; an isolated single agent activates itself."""
    pairs = graph.undirected_pairs()
    if not pairs:
        if graph.n == 1:
            return (0, 0)
        raise AssumptionError("gossip needs at least one edge for multiple agents")
    return pairs[int(rng.integers(len(pairs)))]


def run_experiment(config: ExperimentConfig, replicate: int = 0) -> TrajectoryLog:
    """Execute one replicate and record beliefs at the configured stride.

    The signal stream is consumed identically by every rule: one block of
    uniform draws per step.  Replays with the same config and replicate are
    bit-identical.
    """
    if not config.waive:
        validate_config(config)
    model = config.model
    n, m = model.n, model.m
    horizon = config.horizon
    seed = config.replicate_seed(replicate)
    signal_rng = make_rng(seed, 0)
    record = logged_steps(horizon, config.stride)
    record_set = set(int(k) for k in record)
    beliefs_out = np.empty((record.size, n, m))
    signals_out = np.empty((horizon, n), dtype=int)
    rule = config.rule

    log = config.initial_beliefs().log
    y_out = None
    activations_out = None

    if rule in ("bayes", "reaction"):
        gamma = config.reaction_gamma if rule == "reaction" else 0.0
        cursor = 0
        if 0 in record_set:
            beliefs_out[cursor] = log
            cursor += 1
        linear = np.exp(log) if rule == "reaction" else None
        for k in range(horizon):
            signals = sample_signals(model, signal_rng)
            signals_out[k] = signals
            try:
                if rule == "bayes":
                    log = _log_normalize_rows(
                        log + model.log_likelihood_columns(signals), signals=signals
                    )
                else:
                    rows = np.stack(
                        [
                            reaction_update(
                                linear[i], int(signals[i]), model.likelihoods[i], gamma
                            )
                            for i in range(n)
                        ]
                    )
                    linear = rows
                    with np.errstate(divide="ignore"):
                        log = np.log(rows)
            except ArithmeticError as err:
                raise _attach_step(err, k)
            if (k + 1) in record_set:
                beliefs_out[cursor] = log
                cursor += 1
    elif rule in ("degroot", "bayes-then-geometric", "geometric-then-bayes"):
        step_fns = {
            "degroot": degroot_social_update,
            "bayes-then-geometric": bayes_then_geometric,
            "geometric-then-bayes": geometric_then_bayes,
        }
        step = step_fns[rule]
        state = BeliefMatrix(log)
        cursor = 0
        if 0 in record_set:
            beliefs_out[cursor] = state.log
            cursor += 1
        for k in range(horizon):
            signals = sample_signals(model, signal_rng)
            signals_out[k] = signals
            try:
                state = step(state, signals, model, config.weights.matrix_at(k))
            except ArithmeticError as err:
                raise _attach_step(err, k)
            if (k + 1) in record_set:
                beliefs_out[cursor] = state.log
                cursor += 1
    elif rule == "accelerated":
        state = AcceleratedState.initial(BeliefMatrix(log), config.resolved_sigma())
        cursor = 0
        if 0 in record_set:
            beliefs_out[cursor] = state.beliefs.log
            cursor += 1
        for k in range(horizon):
            signals = sample_signals(model, signal_rng)
            signals_out[k] = signals
            try:
                state = accelerated_update(
                    state, signals, model, config.weights.matrix_at(k)
                )
            except ArithmeticError as err:
                raise _attach_step(err, k)
            if (k + 1) in record_set:
                beliefs_out[cursor] = state.beliefs.log
                cursor += 1
    elif rule == "push-sum":
        state = PushSumState.initial(BeliefMatrix(log))
        y_out = np.empty((record.size, n))
        cursor = 0
        if 0 in record_set:
            beliefs_out[cursor] = state.beliefs.log
            y_out[cursor] = state.y
            cursor += 1
        for k in range(horizon):
            signals = sample_signals(model, signal_rng)
            signals_out[k] = signals
            try:
                state = push_sum_update(state, signals, model, config.graphs.graph_at(k))
            except ArithmeticError as err:
                raise _attach_step(err, k)
            if (k + 1) in record_set:
                beliefs_out[cursor] = state.beliefs.log
                y_out[cursor] = state.y
                cursor += 1
    elif rule == "gossip":
        activation_rng = make_rng(seed, 1, config.gossip_salt)
        graph = config.graphs.graph_at(0)
        state = DualAveragingState.initial_state(
            config.initial_beliefs(), graph, config.step_size
        )
        activations_out = np.empty((horizon, 2), dtype=int)
        cursor = 0
        if 0 in record_set:
            beliefs_out[cursor] = state.beliefs().log
            cursor += 1
        for k in range(horizon):
            signals = sample_signals(model, signal_rng)
            signals_out[k] = signals
            a, b = _gossip_pair(graph, activation_rng)
            activations_out[k] = (a, b)
            try:
                state = gossip_dual_averaging_step(
                    state, (a, b), (int(signals[a]), int(signals[b])), model
                )
            except ArithmeticError as err:
                raise _attach_step(err, k)
            if (k + 1) in record_set:
                beliefs_out[cursor] = state.beliefs().log
                cursor += 1
    else:  # pragma: no cover - RULE_NAMES is closed
        raise ValueError(f"unknown rule {rule!r}")

    return TrajectoryLog(
        rule=rule,
        seed=seed,
        rng_name=RNG_NAME,
        stride=config.stride,
        step_indices=record,
        log_beliefs=beliefs_out,
        signals=signals_out,
        y_history=y_out,
        activations=activations_out,
    )


def mirror_descent_oracle(
    beliefs: BeliefMatrix,
    signal: int,
    weights_row,
    model: LikelihoodModel,
    agent: int,
    *,
    tol: float = 1e-10,
    learning_rate: float = 0.5,
    max_iter: int = 20000,
) -> np.ndarray:
    """Numerically solve one agent's proximal step and return the minimizer.

    Minimizes the expected negative log-likelihood of the agent's signal
    plus the weighted KL divergences to the neighboring beliefs, by
    projected exponentiated-gradient iterations from a uniform start.  Stops
    when successive iterates move less than ``tol`` in total variation.
    This route never forms the geometric-mixing closed form.
    """
    row = np.asarray(weights_row, dtype=float)
    if row.shape != (beliefs.n,):
        raise ValueError(f"weight row shape {row.shape} does not fit {beliefs.n} agents")
    if (row < 0).any() or abs(row.sum() - 1.0) > 1e-9:
        raise ValueError("weight row must be a probability vector")
    loglik = model.log_likelihoods[agent][:, int(signal)]
    anchor = _weighted_log_mix(row[None, :], beliefs.log)[0]
    support = np.isfinite(anchor + loglik)
    if not support.any():
        raise OracleConvergenceError("the proximal objective has empty support")
    idx = np.flatnonzero(support)
    x = np.full(idx.size, 1.0 / idx.size)
    neg_loglik = -loglik[idx]
    anchor_s = anchor[idx]
    for _ in range(max_iter):
        gradient = neg_loglik + np.log(x) - anchor_s
        step = x * np.exp(-learning_rate * gradient)
        step /= step.sum()
        if 0.5 * np.abs(step - x).sum() <= tol:
            x = step
            break
        x = step
    else:
        raise OracleConvergenceError(f"no convergence after {max_iter} iterations")
    out = np.zeros(beliefs.m)
    out[idx] = x
    return out


def empirical_decay_rate(
    trajectory: TrajectoryLog, agent: int, hypothesis: int, burn_in: int
) -> float:
    """Negated least-squares slope of a logged log-belief after burn-in.

    Returns +inf when the belief hit exact zero inside the fitted window.
    """
    mask = trajectory.step_indices > burn_in
    if int(mask.sum()) < 2:
        raise ValueError(
            f"need at least two logged steps beyond burn_in={burn_in}, have {int(mask.sum())}"
        )
    ks = trajectory.step_indices[mask].astype(float)
    logs = trajectory.log_beliefs[mask, agent, hypothesis]
    if np.isneginf(logs).any():
        return math.inf
    slope = np.polyfit(ks, logs, 1)[0]
    return float(-slope)


def default_burn_in(n_rho: int) -> int:
    return max(n_rho // 4, 50)


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """95 percent (by default) Wilson score interval for a binomial fraction."""
    if trials <= 0:
        raise ValueError("need at least one trial")
    p_hat = successes / trials
    denom = 1.0 + z * z / trials
    center = (p_hat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / trials + z * z / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class ValidationSummary:
    """Outcome of a Monte Carlo check of one concentration bound.

    ``decay_rates`` holds the mean fitted decay rate per agent and
    non-optimal hypothesis (NaN for optimal columns).
    """

    rule: str
    replicates: int
    violations: int
    frequency: float
    wilson_low: float
    wilson_high: float
    n_rho: int
    checked_from: int
    checked_to: int
    rho: float
    decay_rates: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "rule": self.rule,
            "replicates": self.replicates,
            "violations": self.violations,
            "frequency": self.frequency,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
            "n_rho": self.n_rho,
            "checked_from": self.checked_from,
            "checked_to": self.checked_to,
            "rho": self.rho,
            "decay_rates": [
                [None if math.isnan(v) else v for v in row] for row in self.decay_rates
            ],
        }


def bound_report_for_config(config: ExperimentConfig) -> BoundReport:
    """Constants of the analysis regime matching the configured rule."""
    model = config.model
    initial = config.initial_beliefs().linear
    if config.rule == "geometric-then-bayes":
        if config.weights is None:
            raise ValueError("the mixing regime needs a weight schedule")
        return theorem1_report(
            model, initial, eta=config.weights.eta, b_window=config.b_window, rho=config.rho
        )
    if config.rule == "accelerated":
        if config.grid_size is None:
            raise ValueError("the accelerated regime needs its scale parameter")
        return theorem2_report(model, grid_size=config.grid_size, rho=config.rho)
    if config.rule == "push-sum":
        regular = config.b_window == 1 and config.graphs.period == 1 and (
            config.graphs.graph_at(0).is_regular()
        )
        return theorem3_report(
            model, initial, b_window=config.b_window, rho=config.rho, regular=regular
        )
    raise ValueError(f"no concentration bound is defined for rule {config.rule!r}")


def monte_carlo_validate(
    config: ExperimentConfig, report: BoundReport | None = None
) -> ValidationSummary:
    """Run all replicates and count those whose beliefs ever exceed the bound.

    A replicate violates when any agent's belief in any non-optimal
    hypothesis rises above the bound at any logged step past the transient.
    """
    if report is None:
        report = bound_report_for_config(config)
    model = config.model
    rejected = [t for t in range(model.m) if t not in report.optimal]
    delta = float(report.extras.get("delta", 1.0))
    burn = default_burn_in(report.n_rho)
    record = logged_steps(config.horizon, config.stride)
    mask = record >= report.n_rho
    checked_from = int(record[mask][0]) if mask.any() else config.horizon
    # Same values belief_bound returns, vectorized over the checked window.
    offsets = np.array(report.gamma1)
    if report.rule.startswith("theorem-3"):
        offsets = offsets / delta
    exponents = -0.5 * record[mask].astype(float)[:, None] * report.gamma2 + offsets[None, :]
    log_bounds = np.minimum(exponents, 0.0)
    violations = 0
    rate_sums = np.zeros((model.n, model.m))
    rate_counts = np.zeros((model.n, model.m))
    for r in range(config.replicates):
        log = run_experiment(config, replicate=r)
        if mask.any() and rejected:
            logged = log.log_beliefs[mask][:, :, rejected]
            if (logged > log_bounds[:, :, None]).any():
                violations += 1
        for i in range(model.n):
            for t in rejected:
                try:
                    rate = empirical_decay_rate(log, i, t, burn)
                except ValueError:
                    continue
                if math.isfinite(rate):
                    rate_sums[i, t] += rate
                    rate_counts[i, t] += 1
    frequency = violations / config.replicates
    low, high = wilson_interval(violations, config.replicates)
    rates = np.where(rate_counts > 0, rate_sums / np.maximum(rate_counts, 1), math.nan)
    return ValidationSummary(
        rule=report.rule,
        replicates=config.replicates,
        violations=violations,
        frequency=frequency,
        wilson_low=low,
        wilson_high=high,
        n_rho=report.n_rho,
        checked_from=checked_from,
        checked_to=config.horizon,
        rho=config.rho,
        decay_rates=rates,
    )
