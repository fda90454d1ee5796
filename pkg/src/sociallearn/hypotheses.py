"""Finite hypothesis spaces, per-agent likelihood models and the KL objective.

Each agent observes signals drawn from a private distribution and scores a
shared finite set of hypotheses through a conditional likelihood table.  The
quality of a hypothesis for an agent is the KL divergence from the agent's
signal distribution to the likelihood row, and the network-wide objective is
the sum of those divergences.  All logarithms are natural.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

# Probability vectors must sum to one within this absolute tolerance.
SUM_TOL = 1e-12

# Default absolute tolerance for declaring a hypothesis optimal.
OPTIMAL_TOL = 1e-9


class SupportMismatchError(ValueError):
    """Two distributions were compared over supports of different size."""


class InfiniteDivergenceError(ArithmeticError):
    """KL divergence is infinite: p puts mass where q has none."""


def validate_distribution(p, *, tol: float = SUM_TOL, name: str = "distribution") -> np.ndarray:
    """Check that ``p`` is a probability vector and return it as a float array."""
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if (arr < 0).any():
        raise ValueError(f"{name} has negative entries")
    total = float(arr.sum())
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within {tol}")
    return arr


def kl_divergence(p, q) -> float:
    """KL divergence sum(p * ln(p/q)) in nats, with the 0*ln(0) = 0 convention.

    Raises InfiniteDivergenceError when p puts mass on a point where q is
    zero, and SupportMismatchError when the supports have different sizes.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise SupportMismatchError(f"support sizes differ: {p.shape} vs {q.shape}")
    mask = p > 0
    if (q[mask] == 0).any():
        where = int(np.flatnonzero(mask & (q == 0))[0])
        raise InfiniteDivergenceError(f"q vanishes at index {where} where p is positive")
    total = float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
    # Roundoff can push a mathematically nonnegative sum a few ulp below zero.
    return max(total, 0.0)


def _default_labels(prefix: str, size: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(size))


@dataclass(frozen=True)
class HypothesisSpace:
    """Ordered, uniquely labeled finite set of hypotheses."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) == 0:
            raise ValueError("hypothesis space is empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("hypothesis labels are not unique")

    @classmethod
    def of_size(cls, m: int) -> "HypothesisSpace":
        return cls(_default_labels("theta", m))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class SignalSpace:
    """Ordered, uniquely labeled finite signal alphabet for one agent."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) == 0:
            raise ValueError("signal space is empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("signal labels are not unique")

    @classmethod
    def of_size(cls, size: int) -> "SignalSpace":
        return cls(_default_labels("s", size))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class ModelViolation:
    """One structural defect found in a likelihood model."""

    kind: str
    detail: str
    agent: int | None = None
    hypothesis: int | None = None
    signal: int | None = None


@dataclass(frozen=True)
class ModelReport:
    """Outcome of validate_model: all defects plus the largest feasible floor."""

    violations: tuple[ModelViolation, ...]
    max_alpha: float

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class LikelihoodModel:
    """Per-agent conditional likelihoods plus the true signal distributions.

    ``likelihoods[i]`` has one row per hypothesis and one column per signal of
    agent ``i``; ``truth[i]`` is the distribution signals are actually drawn
    from.  ``alpha`` is a floor: wherever the truth puts mass, every
    likelihood entry is required to be at least ``alpha``.  When not supplied
    it is computed as the smallest such entry.
    """

    likelihoods: tuple[np.ndarray, ...]
    truth: tuple[np.ndarray, ...]
    hypotheses: HypothesisSpace
    signal_spaces: tuple[SignalSpace, ...]
    alpha: float

    @classmethod
    def from_arrays(
        cls,
        likelihoods: Sequence[Sequence[Sequence[float]]],
        truth: Sequence[Sequence[float]],
        *,
        hypotheses: HypothesisSpace | None = None,
        signal_spaces: Sequence[SignalSpace] | None = None,
        alpha: float | None = None,
    ) -> "LikelihoodModel":
        """Build a model from nested arrays, checking shapes and the floor.

        Content-level defects (rows not summing to one, floor violations) are
        deliberately tolerated here so validate_model can report them; only
        structural mismatches raise.
        """
        lik = tuple(np.array(table, dtype=float) for table in likelihoods)
        tru = tuple(np.array(f, dtype=float) for f in truth)
        if len(lik) == 0:
            raise ValueError("model needs at least one agent")
        if len(lik) != len(tru):
            raise ValueError(f"{len(lik)} likelihood tables but {len(tru)} truth vectors")
        m = lik[0].shape[0]
        for i, table in enumerate(lik):
            if table.ndim != 2:
                raise ValueError(f"agent {i}: likelihood table must be 2-d")
            if table.shape[0] != m:
                raise ValueError(f"agent {i}: expected {m} hypothesis rows, got {table.shape[0]}")
            if tru[i].ndim != 1 or tru[i].shape[0] != table.shape[1]:
                raise ValueError(
                    f"agent {i}: truth has length {tru[i].shape}, table has {table.shape[1]} signals"
                )
        if hypotheses is None:
            hypotheses = HypothesisSpace.of_size(m)
        elif hypotheses.size != m:
            raise ValueError(f"hypothesis space size {hypotheses.size} does not match tables ({m})")
        if signal_spaces is None:
            spaces = tuple(SignalSpace.of_size(table.shape[1]) for table in lik)
        else:
            spaces = tuple(signal_spaces)
            for i, space in enumerate(spaces):
                if space.size != lik[i].shape[1]:
                    raise ValueError(f"agent {i}: signal space size {space.size} != {lik[i].shape[1]}")
        feasible = _max_feasible_alpha(lik, tru)
        if alpha is None:
            alpha = feasible
        else:
            if alpha <= 0:
                raise ValueError(f"alpha must be positive, got {alpha}")
            if alpha > feasible + SUM_TOL:
                raise ValueError(
                    f"declared alpha {alpha} exceeds the smallest supported likelihood {feasible}"
                )
        for arr in (*lik, *tru):
            arr.setflags(write=False)
        return cls(lik, tru, hypotheses, spaces, float(alpha))

    @property
    def n(self) -> int:
        return len(self.likelihoods)

    @property
    def m(self) -> int:
        return self.likelihoods[0].shape[0]

    def signal_count(self, agent: int) -> int:
        return self.likelihoods[agent].shape[1]

    @cached_property
    def log_likelihoods(self) -> tuple[np.ndarray, ...]:
        """Elementwise logs of the likelihood tables, -inf where they vanish."""
        out = []
        with np.errstate(divide="ignore"):
            for table in self.likelihoods:
                logs = np.log(table)
                logs.setflags(write=False)
                out.append(logs)
        return tuple(out)

    @cached_property
    def truth_cumulative(self) -> tuple[np.ndarray, ...]:
        """Per-agent cumulative sums of the truth, for inverse-CDF sampling."""
        out = []
        for f in self.truth:
            cum = np.cumsum(f)
            cum.setflags(write=False)
            out.append(cum)
        return tuple(out)

    def log_likelihood_columns(self, signals: Sequence[int]) -> np.ndarray:
        """Stack log-likelihood columns for one signal per agent, shape (n, m)."""
        if len(signals) != self.n:
            raise ValueError(f"expected {self.n} signals, got {len(signals)}")
        return np.stack(
            [self.log_likelihoods[i][:, int(s)] for i, s in enumerate(signals)]
        )


def _max_feasible_alpha(
    likelihoods: Sequence[np.ndarray], truth: Sequence[np.ndarray]
) -> float:
    """Smallest likelihood entry over signals the truth actually emits."""
    smallest = np.inf
    for table, f in zip(likelihoods, truth):
        support = f > 0
        if support.any():
            smallest = min(smallest, float(table[:, support].min()))
    return 0.0 if not np.isfinite(smallest) else smallest


def validate_model(model: LikelihoodModel, *, tol: float = SUM_TOL) -> ModelReport:
    """Collect every structural violation in a model instead of aborting.

    Checks likelihood row sums, truth sums, negativity, the declared floor,
    and that no likelihood vanishes on signals the truth can emit.  Also
    recomputes the largest feasible floor for the report.
    """
    violations: list[ModelViolation] = []
    for i in range(model.n):
        table = model.likelihoods[i]
        f = model.truth[i]
        if (f < 0).any():
            violations.append(
                ModelViolation("negative-truth", f"agent {i}: truth has a negative entry", agent=i)
            )
        total = float(f.sum())
        if abs(total - 1.0) > tol:
            violations.append(
                ModelViolation(
                    "truth-sum", f"agent {i}: truth sums to {total!r}", agent=i
                )
            )
        for t in range(model.m):
            row = table[t]
            if (row < 0).any():
                violations.append(
                    ModelViolation(
                        "negative-likelihood",
                        f"agent {i}, hypothesis {t}: negative likelihood entry",
                        agent=i,
                        hypothesis=t,
                    )
                )
            row_total = float(row.sum())
            if abs(row_total - 1.0) > tol:
                violations.append(
                    ModelViolation(
                        "row-sum",
                        f"agent {i}, hypothesis {t}: likelihood row sums to {row_total!r}",
                        agent=i,
                        hypothesis=t,
                    )
                )
        support = np.flatnonzero(f > 0)
        for s in support:
            col = table[:, s]
            for t in range(model.m):
                if col[t] == 0:
                    violations.append(
                        ModelViolation(
                            "zero-on-support",
                            f"agent {i}, hypothesis {t}, signal {s}: likelihood is "
                            "zero on a signal the truth emits",
                            agent=i,
                            hypothesis=t,
                            signal=int(s),
                        )
                    )
                elif col[t] < model.alpha - tol:
                    violations.append(
                        ModelViolation(
                            "floor",
                            f"agent {i}, hypothesis {t}, signal {s}: likelihood "
                            f"{col[t]!r} is below the floor {model.alpha}",
                            agent=i,
                            hypothesis=t,
                            signal=int(s),
                        )
                    )
    max_alpha = _max_feasible_alpha(model.likelihoods, model.truth)
    return ModelReport(tuple(violations), max_alpha)


def agent_objective(model: LikelihoodModel, agent: int, hypothesis: int) -> float:
    """KL divergence from one agent's truth to its likelihood row."""
    return kl_divergence(model.truth[agent], model.likelihoods[agent][hypothesis])


def global_objective(model: LikelihoodModel, hypothesis: int) -> float:
    """Sum of agent objectives; the quantity the network jointly minimizes."""
    return sum(agent_objective(model, i, hypothesis) for i in range(model.n))


def objective_values(model: LikelihoodModel) -> np.ndarray:
    """Global objective evaluated at every hypothesis, shape (m,)."""
    return np.array([global_objective(model, t) for t in range(model.m)])


def select_optimal(values, tolerance: float = OPTIMAL_TOL) -> set[int]:
    """Indices within ``tolerance`` (absolute) of the minimum value."""
    if tolerance < 0:
        raise ValueError(f"tolerance must be nonnegative, got {tolerance}")
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values to compare")
    return set(int(i) for i in np.flatnonzero(arr <= arr.min() + tolerance))


def optimal_set(model: LikelihoodModel, tolerance: float = OPTIMAL_TOL) -> set[int]:
    """Hypotheses whose global objective is minimal up to ``tolerance``."""
    return select_optimal(objective_values(model), tolerance)
