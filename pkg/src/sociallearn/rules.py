"""Belief-update operators for networks of learning agents.

Beliefs are stored in the log domain, one row per agent, one column per
hypothesis; exact zeros are kept as -inf and stay absorbing under every
multiplicative rule.  Rows are renormalized with a max-shifted log-sum-exp.
The operators cover plain Bayesian updating, over/under-reaction blending,
arithmetic (DeGroot) mixing, geometric mixing before or after the Bayesian
step, a one-step-memory accelerated variant, push-sum reweighting for
directed graphs, and pairwise-gossip dual averaging with its unrolled
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .graphs import Graph, STOCHASTIC_TOL
from .hypotheses import LikelihoodModel, validate_distribution

# Rows of a belief matrix must sum to one within this tolerance.
BELIEF_SUM_TOL = 1e-10


class DegenerateUpdateError(ArithmeticError):
    """An update produced a row with no mass left to normalize."""

    def __init__(self, detail: str, *, agent: int | None = None, signal: int | None = None):
        super().__init__(detail)
        self.agent = agent
        self.signal = signal


class InfeasibleReactionError(ArithmeticError):
    """An under-reaction weight produced a negative probability mass."""


def _log_normalize_rows(
    logs: np.ndarray, *, signals: Sequence[int] | None = None
) -> np.ndarray:
    """Subtract each row's log-sum-exp; rows with no mass left raise."""
    peak = logs.max(axis=1, keepdims=True)
    if not np.isfinite(peak).all():
        row = int(np.flatnonzero(~np.isfinite(peak[:, 0]))[0])
        signal = None if signals is None else int(signals[row])
        reason = "left zero mass everywhere" if np.isneginf(peak[row, 0]) else "divided by zero mass"
        suffix = "" if signal is None else f" on signal {signal}"
        raise DegenerateUpdateError(
            f"agent {row}: update {reason}{suffix}", agent=row, signal=signal
        )
    return logs - (peak + np.log(np.exp(logs - peak).sum(axis=1, keepdims=True)))


def _weighted_log_mix(weights: np.ndarray, logs: np.ndarray) -> np.ndarray:
    """Matrix product of weights and log-beliefs with the 0 * (-inf) = 0 convention."""
    dead = np.isneginf(logs)
    if not dead.any():
        return weights @ logs
    out = weights @ np.where(dead, 0.0, logs)
    out[(weights > 0) @ dead] = -np.inf
    return out


@dataclass(frozen=True)
class BeliefMatrix:
    """Log-domain beliefs of n agents over m hypotheses."""

    log: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.log, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"belief matrix must be 2-d, got shape {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "log", arr)

    @classmethod
    def uniform(cls, n: int, m: int) -> "BeliefMatrix":
        return cls(np.full((n, m), -np.log(m)))

    @classmethod
    def from_rows(cls, rows, *, tol: float = BELIEF_SUM_TOL) -> "BeliefMatrix":
        """Build from linear-domain rows, validating and renormalizing each."""
        arr = np.array(rows, dtype=float)
        if arr.ndim != 2:
            raise ValueError(f"belief rows must form a 2-d array, got shape {arr.shape}")
        if (arr < 0).any():
            raise ValueError("belief rows contain negative mass")
        sums = arr.sum(axis=1)
        off = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if off.size:
            raise ValueError(f"belief row {int(off[0])} sums to {sums[off[0]]!r}")
        with np.errstate(divide="ignore"):
            return cls(np.log(arr / sums[:, None]))

    @property
    def n(self) -> int:
        return self.log.shape[0]

    @property
    def m(self) -> int:
        return self.log.shape[1]

    @property
    def linear(self) -> np.ndarray:
        return np.exp(self.log)

    def row(self, agent: int) -> np.ndarray:
        return np.exp(self.log[agent])


def bayes_update(prior, signal: int, likelihoods) -> np.ndarray:
    """Posterior proportional to prior times the likelihood of the signal.

    ``likelihoods`` has one row per hypothesis, one column per signal.
    """
    prior = validate_distribution(prior, tol=BELIEF_SUM_TOL, name="prior")
    table = np.asarray(likelihoods, dtype=float)
    if table.ndim != 2 or table.shape[0] != prior.shape[0]:
        raise ValueError(f"likelihood table shape {table.shape} does not fit {prior.shape[0]} hypotheses")
    if not (0 <= signal < table.shape[1]):
        raise ValueError(f"signal {signal} is outside the table with {table.shape[1]} columns")
    unnormalized = prior * table[:, signal]
    total = unnormalized.sum()
    if total <= 0:
        raise DegenerateUpdateError(
            f"signal {signal} has zero probability under every supported hypothesis",
            signal=signal,
        )
    return unnormalized / total


def reaction_update(prior, signal: int, likelihoods, gamma: float) -> np.ndarray:
    """Blend the Bayesian posterior with the prior: (1-gamma)*posterior + gamma*prior.

    gamma in [0, 1] under-weights the new signal; gamma < 0 over-reacts and
    is rejected whenever it would drive some mass negative.  gamma > 1 is
    never a distribution-preserving blend and is rejected outright.
    """
    if gamma > 1:
        raise ValueError(f"reaction weight must be at most 1, got {gamma}")
    prior = validate_distribution(prior, tol=BELIEF_SUM_TOL, name="prior")
    posterior = bayes_update(prior, signal, likelihoods)
    blended = (1.0 - gamma) * posterior + gamma * prior
    if (blended < 0).any():
        worst = float(blended.min())
        raise InfeasibleReactionError(
            f"reaction weight {gamma} drives mass to {worst!r}; no clamping is applied"
        )
    return blended


def _check_mixing_matrix(weights, n: int, *, positive_diagonal: bool) -> np.ndarray:
    mat = np.asarray(weights, dtype=float)
    if mat.shape != (n, n):
        raise ValueError(f"mixing matrix shape {mat.shape} does not fit {n} agents")
    if (mat < 0).any():
        raise ValueError("mixing matrix has negative entries")
    if not np.allclose(mat.sum(axis=1), 1.0, atol=STOCHASTIC_TOL):
        raise ValueError("mixing matrix rows must sum to one")
    if positive_diagonal and (np.diag(mat) <= 0).any():
        raise ValueError("mixing matrix needs a strictly positive diagonal")
    return mat


def degroot_social_update(
    beliefs: BeliefMatrix, signals: Sequence[int], model: LikelihoodModel, weights
) -> BeliefMatrix:
    """Arithmetic opinion pooling: own Bayesian posterior plus neighbors' priors.

    Row i becomes w_ii * posterior_i + sum_j!=i w_ij * belief_j.  Mixing is
    arithmetic, so exact zeros are not preserved here.
    """
    mat = _check_mixing_matrix(weights, beliefs.n, positive_diagonal=True)
    linear = beliefs.linear
    out = np.empty_like(linear)
    others = np.arange(beliefs.n)
    for i in range(beliefs.n):
        posterior = bayes_update(linear[i], int(signals[i]), model.likelihoods[i])
        rest = mat[i, others != i] @ linear[others != i]
        out[i] = mat[i, i] * posterior + rest
    return BeliefMatrix.from_rows(out, tol=1e-8)


def bayes_then_geometric(
    beliefs: BeliefMatrix, signals: Sequence[int], model: LikelihoodModel, weights
) -> BeliefMatrix:
    """Every agent updates on its own signal, then rows mix geometrically."""
    mat = _check_mixing_matrix(weights, beliefs.n, positive_diagonal=False)
    posts = _log_normalize_rows(
        beliefs.log + model.log_likelihood_columns(signals), signals=signals
    )
    return BeliefMatrix(_log_normalize_rows(_weighted_log_mix(mat, posts)))


def geometric_then_bayes(
    beliefs: BeliefMatrix, signals: Sequence[int], model: LikelihoodModel, weights
) -> BeliefMatrix:
    """Rows mix geometrically, then every agent updates on its own signal."""
    mat = _check_mixing_matrix(weights, beliefs.n, positive_diagonal=False)
    mixed = _weighted_log_mix(mat, beliefs.log)
    return BeliefMatrix(
        _log_normalize_rows(mixed + model.log_likelihood_columns(signals), signals=signals)
    )


@dataclass(frozen=True)
class AcceleratedState:
    """Current and previous beliefs plus the momentum weight sigma.

    The first step has no earlier observations; when ``previous_signals`` is
    None the momentum term uses the previous beliefs alone.
    """

    beliefs: BeliefMatrix
    previous: BeliefMatrix
    sigma: float
    previous_signals: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not (0.0 <= self.sigma < 1.0):
            raise ValueError(f"momentum weight must lie in [0, 1), got {self.sigma}")
        if self.beliefs.log.shape != self.previous.log.shape:
            raise ValueError("current and previous beliefs must share one shape")

    @classmethod
    def initial(
        cls, beliefs: BeliefMatrix, sigma: float, previous_signals: Sequence[int] | None = None
    ) -> "AcceleratedState":
        signals = None if previous_signals is None else tuple(int(s) for s in previous_signals)
        return cls(beliefs, beliefs, sigma, signals)


def accelerated_update(
    state: AcceleratedState, signals: Sequence[int], model: LikelihoodModel, weights
) -> AcceleratedState:
    """One-step-memory geometric update with momentum.

    In the log domain the new row i is (1+sigma) * sum_j w_ij log mu_j plus
    the own log-likelihood, minus sigma * sum_j w_ij of the previous round's
    log-posterior mass, then renormalized.  With sigma = 0 this is exactly
    the mix-then-update rule, computed through the same code path.
    """
    mat = _check_mixing_matrix(weights, state.beliefs.n, positive_diagonal=False)
    sigma = state.sigma
    mixed = _weighted_log_mix(mat, state.beliefs.log)
    out = (1.0 + sigma) * mixed + model.log_likelihood_columns(signals)
    if sigma != 0.0:
        prev = state.previous.log
        if state.previous_signals is not None:
            prev = prev + model.log_likelihood_columns(state.previous_signals)
        correction = sigma * _weighted_log_mix(mat, prev)
        # Dead hypotheses stay dead even when the correction is also -inf.
        with np.errstate(invalid="ignore"):
            out = np.where(np.isneginf(out), -np.inf, out - correction)
    new_beliefs = BeliefMatrix(_log_normalize_rows(out, signals=signals))
    return AcceleratedState(
        new_beliefs, state.beliefs, sigma, tuple(int(s) for s in signals)
    )


@dataclass(frozen=True)
class PushSumState:
    """Beliefs plus the positive push-sum weights, which always sum to n."""

    beliefs: BeliefMatrix
    y: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.y, dtype=float)
        if arr.shape != (self.beliefs.n,):
            raise ValueError(f"weight vector shape {arr.shape} does not fit {self.beliefs.n} agents")
        if (arr <= 0).any():
            raise ValueError("push-sum weights must stay strictly positive")
        arr.setflags(write=False)
        object.__setattr__(self, "y", arr)

    @classmethod
    def initial(cls, beliefs: BeliefMatrix) -> "PushSumState":
        return cls(beliefs, np.ones(beliefs.n))


def push_sum_update(
    state: PushSumState, signals: Sequence[int], model: LikelihoodModel, graph: Graph
) -> PushSumState:
    """Directed-graph update where every node shares itself plus its out-arcs.

    Node j splits its weight into out_degree(j) + 1 equal shares; node i
    collects the shares of its in-neighbors and itself, giving the new
    weight, and tilts the shared geometric belief mix by its own likelihood
    with exponent 1 over that weight.
    """
    n = state.beliefs.n
    if graph.n != n:
        raise ValueError(f"graph has {graph.n} nodes but state has {n} agents")
    shares = np.array(
        [state.y[j] / (graph.out_degree(j) + 1) for j in range(n)]
    )
    collect = np.zeros((n, n))
    for i in range(n):
        collect[i, i] = shares[i]
        for j in graph.in_neighbors(i):
            collect[i, j] = shares[j]
    y_next = collect.sum(axis=1)
    mixed = _weighted_log_mix(collect, state.beliefs.log)
    tilted = (mixed + model.log_likelihood_columns(signals)) / y_next[:, None]
    return PushSumState(BeliefMatrix(_log_normalize_rows(tilted, signals=signals)), y_next)


@dataclass(frozen=True)
class DualAveragingState:
    """Accumulated log-likelihood mass for pairwise-gossip dual averaging.

    ``z`` starts at zero; beliefs are recovered through the proximal closed
    form: belief row a is proportional to initial_a * exp(step_size * z_a).
    """

    z: np.ndarray
    initial: BeliefMatrix
    graph: Graph
    step: int = 0
    step_size: float | Callable[[int], float] = 1.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.z, dtype=float)
        if arr.shape != self.initial.log.shape:
            raise ValueError(f"accumulator shape {arr.shape} does not match the initial beliefs")
        if self.graph.n != self.initial.n:
            raise ValueError("gossip graph and initial beliefs disagree on the agent count")
        if self.graph.directed:
            raise ValueError("gossip runs on a static undirected graph")
        arr.setflags(write=False)
        object.__setattr__(self, "z", arr)

    @classmethod
    def initial_state(
        cls, beliefs: BeliefMatrix, graph: Graph, step_size: float | Callable[[int], float] = 1.0
    ) -> "DualAveragingState":
        return cls(np.zeros(beliefs.log.shape), beliefs, graph, 0, step_size)

    def current_step_size(self) -> float:
        size = self.step_size(self.step) if callable(self.step_size) else self.step_size
        if size <= 0:
            raise ValueError(f"step size must be positive, got {size}")
        return float(size)

    def beliefs(self) -> BeliefMatrix:
        """Recover beliefs from the accumulator via the proximal closed form."""
        return BeliefMatrix(
            _log_normalize_rows(self.initial.log + self.current_step_size() * self.z)
        )


def gossip_dual_averaging_step(
    state: DualAveragingState,
    pair: tuple[int, int],
    pair_signals: tuple[int, int],
    model: LikelihoodModel,
) -> DualAveragingState:
    """Average the accumulators of one activated edge, then add own gradients.

    Both endpoints replace their accumulator with the pair average plus their
    own log-likelihood column.  A degenerate pair (a, a) models an isolated
    agent updating alone.  Activating a non-edge is rejected.
    """
    a, b = int(pair[0]), int(pair[1])
    if a != b and (a, b) not in state.graph.edges:
        raise ValueError(f"pair ({a}, {b}) is not an edge of the gossip graph")
    z = np.array(state.z)
    if a == b:
        z[a] = state.z[a] + model.log_likelihoods[a][:, int(pair_signals[0])]
    else:
        average = 0.5 * (state.z[a] + state.z[b])
        z[a] = average + model.log_likelihoods[a][:, int(pair_signals[0])]
        z[b] = average + model.log_likelihoods[b][:, int(pair_signals[1])]
    return DualAveragingState(z, state.initial, state.graph, state.step + 1, state.step_size)


def gossip_mixing_matrix(n: int, pair: tuple[int, int]) -> np.ndarray:
    """Averaging matrix of one activation: identity minus half the pair difference."""
    a, b = int(pair[0]), int(pair[1])
    mat = np.eye(n)
    if a != b:
        diff = np.zeros(n)
        diff[a] = 1.0
        diff[b] = -1.0
        mat -= 0.5 * np.outer(diff, diff)
    return mat


def dual_averaging_closed_form(
    signal_history,
    activation_history,
    model: LikelihoodModel,
    k: int,
    initial: BeliefMatrix,
    step_size: float | Callable[[int], float] = 1.0,
) -> BeliefMatrix:
    """Beliefs after k gossip steps, from the unrolled product formula.

    Each step tau contributes the activated agents' log-likelihood columns,
    propagated forward through the product of the later steps' averaging
    matrices.  The products are formed explicitly, so this is an independent
    route to the same state as iterating the gossip step.
    """
    signals = np.asarray(signal_history, dtype=int)
    pairs = np.asarray(activation_history, dtype=int)
    if k < 0:
        raise ValueError(f"step count must be nonnegative, got {k}")
    if k > signals.shape[0] or k > pairs.shape[0]:
        raise ValueError(f"histories are shorter than k = {k}")
    if k == 0:
        return BeliefMatrix(np.array(initial.log))
    n, m = initial.log.shape
    z = np.zeros((n, m))
    propagate = np.eye(n)
    for tau in range(k - 1, -1, -1):
        contribution = np.zeros((n, m))
        for agent in {int(pairs[tau, 0]), int(pairs[tau, 1])}:
            contribution[agent] = model.log_likelihoods[agent][:, int(signals[tau, agent])]
        z += _weighted_log_mix(propagate, contribution)
        propagate = propagate @ gossip_mixing_matrix(n, (pairs[tau, 0], pairs[tau, 1]))
    size = step_size(k) if callable(step_size) else step_size
    return BeliefMatrix(_log_normalize_rows(initial.log + float(size) * z))
