"""Non-asymptotic convergence constants and belief-concentration bounds.

Three analysis regimes are covered, tagged theorem-1 (geometric mixing over
time-varying doubly stochastic weights), theorem-2 (accelerated updates on a
static lazy-Metropolis graph) and theorem-3 (push-sum over directed graphs,
with a general and a regular case).  The constants share a common template:
gamma2 is the per-agent average objective gap driving the exponential decay,
gamma1 collects the transient offsets, lambda is a mixing rate, and N(rho)
is the step count after which the probability-rho concentration statement
holds.  Non-optimal beliefs are then bounded by exp(-k*gamma2/2 + offset).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .graphs import second_eigenvalue_modulus, stationary_distribution
from .hypotheses import (
    InfiniteDivergenceError,
    LikelihoodModel,
    agent_objective,
    kl_divergence,
    objective_values,
    optimal_set,
)

RULE_TAGS = ("theorem-1", "theorem-2", "theorem-3-general", "theorem-3-regular")


@dataclass(frozen=True)
class BoundReport:
    """All constants needed to evaluate and interpret one concentration bound.

    ``gamma1`` holds one offset per agent.  ``flags`` carries interpretation
    notes, e.g. when a delta lower bound makes the transient an upper
    estimate.  ``extras`` keeps regime-specific constants such as C, delta,
    sigma or U.
    """

    rule: str
    gamma2: float
    gamma1: tuple[float, ...]
    lam: float
    n_rho: int
    rho: float
    alpha: float
    b_window: int
    eta: float | None = None
    optimal: tuple[int, ...] = ()
    extras: Mapping[str, float] = field(default_factory=dict)
    flags: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        doc = {
            "rule": self.rule,
            "gamma2": self.gamma2,
            "gamma1": list(self.gamma1),
            "lambda": self.lam,
            "n_rho": self.n_rho,
            "rho": self.rho,
            "alpha": self.alpha,
            "b_window": self.b_window,
            "eta": self.eta,
            "optimal_set": list(self.optimal),
            "flags": list(self.flags),
        }
        doc.update({key: value for key, value in self.extras.items()})
        return doc


def gamma2(model: LikelihoodModel, tolerance: float = 1e-9) -> float:
    """Average objective gap between the best rejected and the optimal hypotheses.

    Returns +inf when every hypothesis is optimal; there is nothing to
    reject, so no finite decay rate applies.
    """
    values = objective_values(model)
    best = optimal_set(model, tolerance)
    rejected = [t for t in range(model.m) if t not in best]
    if not rejected:
        return math.inf
    floor = values.min()
    return float(min(values[t] for t in rejected) - floor) / model.n


def intersection_optimal_support(
    model: LikelihoodModel, initial_rows: np.ndarray, tolerance: float = 1e-9
) -> set[int]:
    """Optimal hypotheses that every agent's initial belief supports."""
    best = optimal_set(model, tolerance)
    rows = np.asarray(initial_rows, dtype=float)
    supported = set(best)
    for i in range(rows.shape[0]):
        supported &= {t for t in best if rows[i, t] > 0}
    return supported


def gamma1_i(
    model: LikelihoodModel,
    initial_rows,
    agent: int,
    lam: float,
    *,
    alpha: float | None = None,
    tolerance: float = 1e-9,
    quantified: Sequence[int] | None = None,
) -> float:
    """Transient offset of one agent: worst initial log-ratio plus network
    disagreement mass plus the worst own-objective gap.

    ``alpha`` is the likelihood floor entering the disagreement term; any
    valid lower bound works, defaulting to the model's recorded floor.
    ``quantified`` selects which optimal hypotheses the offset is taken
    against; by default the optimal hypotheses supported by every agent's
    initial belief.  Requires support on every quantified hypothesis.
    """
    rows = np.asarray(initial_rows, dtype=float)
    best = optimal_set(model, tolerance)
    rejected = [t for t in range(model.m) if t not in best]
    if not rejected:
        return 0.0
    if quantified is None:
        anchors = sorted(intersection_optimal_support(model, rows, tolerance))
    else:
        anchors = sorted(int(t) for t in quantified)
        outside = [t for t in anchors if t not in best]
        if outside:
            raise ValueError(f"quantified hypotheses {outside} are not optimal")
    if not anchors:
        raise ValueError("no optimal hypothesis is supported by every initial belief")
    if not (0 <= lam < 1):
        raise ValueError(f"mixing rate must lie in [0, 1), got {lam}")
    if alpha is None:
        alpha = model.alpha
    if not (0 < alpha < 1):
        raise ValueError(f"likelihood floor must lie in (0, 1), got {alpha}")
    n = model.n
    disagreement = (8.0 * math.log(n) / (1.0 - lam)) * math.log(1.0 / alpha)
    worst = -math.inf
    for anchor in anchors:
        if rows[agent, anchor] <= 0:
            raise ValueError(
                f"agent {agent} puts zero initial mass on quantified hypothesis {anchor}"
            )
        f_anchor = agent_objective(model, agent, anchor)
        for t in rejected:
            ratio = math.log(rows[agent, t] / rows[agent, anchor]) if rows[agent, t] > 0 else -math.inf
            value = ratio + disagreement + agent_objective(model, agent, t) - f_anchor
            worst = max(worst, value)
    return float(worst)


def lambda_theorem1(
    eta: float, n: int, b_window: int, lazy_metropolis: bool = False
) -> float:
    """Mixing rate (1 - eta/(4 n^2))^(1/B) for B-connected weight sequences.

    ``lazy_metropolis`` is an annotation, not a formula switch: for static
    lazy-Metropolis weights the rate is known to behave as 1 - order(1/n^2)
    with an unspecified constant, so the returned value is unchanged and the
    report layer records the sharper reading as a flag.
    """
    if not (0 < eta <= 1):
        raise ValueError(f"weight floor must lie in (0, 1], got {eta}")
    if n < 1 or b_window < 1:
        raise ValueError(f"need n >= 1 and B >= 1, got n={n}, B={b_window}")
    return (1.0 - eta / (4.0 * n * n)) ** (1.0 / b_window)


def constants_theorem2(grid_size: float, n: int | None = None) -> tuple[float, float]:
    """Momentum weight and mixing rate for the accelerated regime.

    ``grid_size`` is the scale parameter U (at least the agent count);
    returns (sigma, lambda) with sigma = 1 - 2/(9U + 1) and
    lambda = 1 - 1/(18U).
    """
    if grid_size <= 0:
        raise ValueError(f"scale parameter must be positive, got {grid_size}")
    if n is not None and grid_size < n:
        raise ValueError(f"scale parameter {grid_size} must be at least the agent count {n}")
    sigma = 1.0 - 2.0 / (9.0 * grid_size + 1.0)
    lam = 1.0 - 1.0 / (18.0 * grid_size)
    return sigma, lam


@dataclass(frozen=True)
class PushSumConstants:
    """Spectral constants for the directed push-sum regime.

    ``delta`` is exact in the regular case and a lower bound in the general
    case; ``log_delta`` stays finite even when delta underflows.
    """

    c: float
    lam: float
    delta: float
    log_delta: float
    delta_is_lower_bound: bool


def constants_theorem3(n: int, b_window: int, *, regular: bool = False) -> PushSumConstants:
    """Constants (C, lambda, delta) for push-sum weight imbalance.

    General B-connected sequences give C = 4, lambda = (1 - 1/n^(nB))^(1/B)
    and delta bounded below by 1/n^(nB); time-invariant regular graphs with
    B = 1 give C = sqrt(2), lambda = (1 - 1/(4 n^3))^(1/B) and delta = 1.
    The n^(nB) power is handled in log space to survive large exponents.
    """
    if n < 1 or b_window < 1:
        raise ValueError(f"need n >= 1 and B >= 1, got n={n}, B={b_window}")
    if regular:
        if b_window != 1:
            raise ValueError("the regular case requires B = 1")
        lam = (1.0 - 1.0 / (4.0 * n**3)) ** (1.0 / b_window)
        return PushSumConstants(math.sqrt(2.0), lam, 1.0, 0.0, False)
    log_delta = -n * b_window * math.log(n) if n > 1 else 0.0
    delta = math.exp(log_delta)
    # Tiny delta makes (1 - delta)^(1/B) round up to exactly 1, which would
    # zero out 1 - lambda downstream; clamp one ulp below so the rate stays
    # inside the open interval.  log_delta remains exact for such cases.
    lam = (1.0 - delta) ** (1.0 / b_window) if delta > 0 else 1.0
    lam = min(lam, math.nextafter(1.0, 0.0))
    return PushSumConstants(4.0, lam, delta, log_delta, True)


def transient_time(
    rule: str, rho: float, alpha: float, gamma2_value: float, *, n: int | None = None,
    delta: float = 1.0,
) -> int:
    """Steps before the probability-rho concentration statement applies.

    theorem-1:        ceil(8 (ln a)^2 ln(1/rho) / g2^2 + 1)
    theorem-2:        ceil(72 (ln a)^2 n ln(1/rho) / g2^2)
    theorem-3-*:      ceil(8 (ln a)^2 ln(1/rho) / (delta^2 g2^2) + 1)
    """
    if rule not in RULE_TAGS:
        raise ValueError(f"unknown rule tag {rule!r}")
    if not (0 < rho < 1):
        raise ValueError(f"failure probability must lie in (0, 1), got {rho}")
    if not (0 < alpha <= 1):
        raise ValueError(f"likelihood floor must lie in (0, 1], got {alpha}")
    if gamma2_value <= 0:
        raise ValueError(f"decay rate must be positive, got {gamma2_value}")
    if math.isinf(gamma2_value):
        return 1
    log_alpha_sq = math.log(alpha) ** 2
    log_inv_rho = math.log(1.0 / rho)
    if rule == "theorem-1":
        raw = 8.0 * log_alpha_sq * log_inv_rho / gamma2_value**2 + 1.0
    elif rule == "theorem-2":
        if n is None:
            raise ValueError("theorem-2 transient needs the agent count")
        raw = 72.0 * log_alpha_sq * n * log_inv_rho / gamma2_value**2
    else:
        if not (0 < delta <= 1):
            raise ValueError(f"imbalance bound must lie in (0, 1], got {delta}")
        raw = 8.0 * log_alpha_sq * log_inv_rho / (delta**2 * gamma2_value**2) + 1.0
    return max(1, math.ceil(raw))


def belief_bound(
    rule: str, k: int, gamma2_value: float, gamma1_value: float, *, delta: float = 1.0
) -> float:
    """High-probability ceiling on a non-optimal belief at step k, capped at 1."""
    if rule not in RULE_TAGS:
        raise ValueError(f"unknown rule tag {rule!r}")
    if k < 0:
        raise ValueError(f"step index must be nonnegative, got {k}")
    offset = gamma1_value / delta if rule.startswith("theorem-3") else gamma1_value
    exponent = -0.5 * k * gamma2_value + offset
    return 1.0 if exponent >= 0 else math.exp(exponent)


def tv_concentration_bound(
    model: LikelihoodModel,
    weights,
    k: int,
    *,
    confidence: float,
    eta_step: float,
) -> float:
    """Probability-(1-confidence) ceiling on the distance to certainty.

    Evaluates, for the gossip dual-averaging regime over a static matrix,
    the bound on the total-variation distance between any agent's belief and
    the point mass on the best hypothesis.  ``eta_step`` is the averaging
    temperature of the bound, not the weight floor.  The network average of
    the likelihood gaps is taken under the stationary distribution of the
    matrix, and the matrix's second eigenvalue modulus stands in for its
    mixing rate.  Requires a unique optimal hypothesis.
    """
    if k < 0:
        raise ValueError(f"step index must be nonnegative, got {k}")
    if not (0 < confidence < 1):
        raise ValueError(f"confidence parameter must lie in (0, 1), got {confidence}")
    if eta_step <= 0:
        raise ValueError(f"averaging temperature must be positive, got {eta_step}")
    best = sorted(optimal_set(model))
    if len(best) != 1:
        raise ValueError(f"bound needs a unique optimal hypothesis, found {best}")
    star = best[0]
    pi = stationary_distribution(weights)
    lam = second_eigenvalue_modulus(weights)
    if lam >= 1.0:
        raise ValueError("matrix does not mix: second eigenvalue modulus is 1")
    m = model.m
    slowest = math.inf
    for t in range(m):
        if t == star:
            continue
        total = 0.0
        for j in range(model.n):
            try:
                total += pi[j] * kl_divergence(
                    model.likelihoods[j][star], model.likelihoods[j][t]
                )
            except InfiniteDivergenceError:
                total = math.inf
                break
        slowest = min(slowest, total)
    if m == 1:
        slowest = 0.0
    log_alpha = math.log(model.alpha)
    # k == 0 must not multiply an infinite divergence gap into a NaN.
    drift = 0.0 if k == 0 else -k * slowest
    noise = math.sqrt(2.0 * log_alpha**2 * k * math.log(m / confidence))
    mixing = 8.0 * log_alpha * math.log(model.n) / (1.0 - lam)
    prior_mass = math.log(m) / eta_step
    rhs = drift + noise + mixing + prior_mass
    return min(1.0, math.exp(eta_step * rhs))


def theorem1_report(
    model: LikelihoodModel,
    initial_rows,
    *,
    eta: float,
    b_window: int,
    rho: float,
    lazy_metropolis: bool = False,
    quantified: Sequence[int] | None = None,
) -> BoundReport:
    """Assemble the full constant set for the time-varying mixing regime."""
    g2 = gamma2(model)
    lam = lambda_theorem1(eta, model.n, b_window)
    g1 = tuple(
        gamma1_i(model, initial_rows, i, lam, quantified=quantified)
        for i in range(model.n)
    )
    n_rho = transient_time("theorem-1", rho, model.alpha, g2)
    flags = []
    if math.isinf(g2):
        flags.append("all-hypotheses-optimal")
    if lazy_metropolis:
        # Annotation only: with static lazy-Metropolis weights the mixing
        # rate is 1 - order(1/n^2) with an unspecified constant.
        flags.append("lazy-metropolis-lambda-order-n-squared")
    return BoundReport(
        "theorem-1", g2, g1, lam, n_rho, rho, model.alpha, b_window, eta=eta,
        optimal=tuple(sorted(optimal_set(model))), flags=tuple(flags),
    )


def theorem2_report(
    model: LikelihoodModel, *, grid_size: float, rho: float
) -> BoundReport:
    """Assemble the constant set for the accelerated static regime.

    The transient offset here does not depend on initial beliefs; the
    analysis assumes uniform initialization.
    """
    g2 = gamma2(model)
    sigma, lam = constants_theorem2(grid_size, model.n)
    disagreement = (8.0 * math.log(model.n) / (1.0 - lam)) * math.log(1.0 / model.alpha)
    g1 = tuple(disagreement for _ in range(model.n))
    n_rho = transient_time("theorem-2", rho, model.alpha, g2, n=model.n)
    flags = ["uniform-initialization-assumed"]
    if math.isinf(g2):
        flags.append("all-hypotheses-optimal")
    return BoundReport(
        "theorem-2", g2, g1, lam, n_rho, rho, model.alpha, 1,
        optimal=tuple(sorted(optimal_set(model))),
        extras={"sigma": sigma, "grid_size": grid_size}, flags=tuple(flags),
    )


def theorem3_report(
    model: LikelihoodModel,
    initial_rows,
    *,
    b_window: int,
    rho: float,
    regular: bool = False,
    quantified: Sequence[int] | None = None,
) -> BoundReport:
    """Assemble the constant set for the directed push-sum regime."""
    g2 = gamma2(model)
    consts = constants_theorem3(model.n, b_window, regular=regular)
    g1 = tuple(
        gamma1_i(model, initial_rows, i, consts.lam, quantified=quantified)
        for i in range(model.n)
    )
    n_rho = transient_time(
        "theorem-3-regular" if regular else "theorem-3-general",
        rho, model.alpha, g2, delta=consts.delta,
    )
    flags = []
    if consts.delta_is_lower_bound:
        flags.append("delta-lower-bound-transient-is-upper-estimate")
    if math.isinf(g2):
        flags.append("all-hypotheses-optimal")
    return BoundReport(
        "theorem-3-regular" if regular else "theorem-3-general",
        g2, g1, consts.lam, n_rho, rho, model.alpha, b_window,
        optimal=tuple(sorted(optimal_set(model))),
        extras={"c": consts.c, "delta": consts.delta, "log_delta": consts.log_delta},
        flags=tuple(flags),
    )
