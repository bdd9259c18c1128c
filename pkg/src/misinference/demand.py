"""Quadratic scoring, instrumental value of signals, and optimal card purchases."""

from __future__ import annotations

import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .core import MisinferenceError, State, logistic, logit
from .perception import BayesianLimit, KBeta, misperceived_posteriors

BeliefMap = Callable[[float], float]

DEFAULT_COSTS: dict[int, float] = {0: 0.0, 1: 0.50, 2: 1.50, 3: 3.00}
DEFAULT_SCALE = 100.0
DEMAND_PS = (0.512, 0.525, 0.550, 0.622, 0.731)


class IrregularSchedule(MisinferenceError):
    def __init__(self, message, crossings):
        super().__init__(message)
        self.crossings = crossings


def _bayes(b: float) -> float:
    return b


def belief_map_for(kb: KBeta | BayesianLimit | None) -> BeliefMap:
    if kb is None or isinstance(kb, BayesianLimit):
        return _bayes
    return lambda b: float(misperceived_posteriors(b, kb))


@dataclass(frozen=True)
class DemandProblem:
    p: float
    costs: Mapping[int, float] = field(default_factory=lambda: dict(DEFAULT_COSTS))
    scale: float = DEFAULT_SCALE

    def __post_init__(self):
        if not 0.5 < self.p < 0.75:
            raise ValueError(f"demand signals need 0.5 < p < 0.75, got {self.p}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        _check_costs(self.costs)


def _check_costs(costs: Mapping[int, float]) -> list[float]:
    ns = sorted(costs)
    if ns != list(range(len(ns))) or costs[0] != 0:
        raise ValueError("costs must be keyed 0..N with cost(0) = 0")
    c = [costs[n] for n in ns]
    marg = np.diff(c)
    if np.any(marg <= 0) or np.any(np.diff(marg) <= 0):
        raise ValueError("costs must be strictly increasing and convex")
    return c


def quadratic_payoff(a: float, state: State) -> float:
    truth = 1.0 if State(state) is State.GREEN else 0.0
    return 1.0 - (truth - a) ** 2


def expected_utility(b: float) -> float:
    """Expected quadratic score of reporting belief ``b`` when ``b`` is correct."""
    return 1.0 - b * (1.0 - b)


def instrumental_value(post: float) -> float:
    """Value of a signal that moves a 1/2 prior to ``post``."""
    return 0.25 - post * (1.0 - post)


def bonus_probability(a: float, state: State) -> float:
    """Chance of the high bonus under the binarized quadratic rule."""
    truth = 1.0 if State(state) is State.GREEN else 0.0
    return 1.0 - (a - truth) ** 2


def expected_gain(n: int, p: float, belief_map: BeliefMap | None = None) -> float:
    """Expected utility gain from buying ``n`` symmetric cards of share ``p``.

    Outcomes are the Diamond counts 0..n. Each is weighted by its marginal
    probability under a 1/2 prior and scored by the expected utility of the
    belief the agent forms from its Bayesian posterior.
    """
    if n == 0:
        return 0.0
    belief_map = belief_map or _bayes
    q = 1.0 - p
    s = logit(p)
    total = 0.0
    for d in range(n + 1):
        c = math.comb(n, d)
        marginal = 0.5 * c * (p ** d * q ** (n - d) + q ** d * p ** (n - d))
        total += marginal * expected_utility(belief_map(logistic((2 * d - n) * s)))
    return total - 0.75


def net_values(prob: DemandProblem, belief_map: BeliefMap | None = None,
               bonus_per_card: float = 0.0) -> list[float]:
    """Dollar net value ``scale * gain(n) - cost(n) + n * bonus`` for each n."""
    return [prob.scale * expected_gain(n, prob.p, belief_map) - cost + n * bonus_per_card
            for n, cost in sorted(prob.costs.items())]


def optimal_purchase(prob: DemandProblem, belief_map: BeliefMap | None = None,
                     bonus_per_card: float = 0.0) -> int:
    """Net-value-maximising card count; ties go to fewer cards."""
    vals = net_values(prob, belief_map, bonus_per_card)
    best = 0
    for n, v in enumerate(vals):
        if v > vals[best]:
            best = n
    return best


def purchase_boundaries(costs: Mapping[int, float] | None = None, scale: float = DEFAULT_SCALE,
                        belief_map: BeliefMap | None = None, grid: int = 2000) -> tuple[float, ...]:
    """Share ``p`` at which buying ``n + 1`` cards starts to beat buying ``n``.

    Each pairwise difference is scanned on ``(0.5, 1)`` and its first upward
    crossing refined with Brent's method. A difference that is already
    nonnegative just above 1/2 gives a boundary of exactly 0.5.
    """
    costs = dict(DEFAULT_COSTS if costs is None else costs)
    ns = sorted(costs)
    if ns != list(range(len(ns))):
        raise ValueError("costs must be keyed 0..N")
    ps = np.linspace(0.5, 0.999, grid + 1)[1:]
    out = []
    for n in ns[:-1]:
        marginal_cost = costs[n + 1] - costs[n]

        def diff(p, n=n, mc=marginal_cost):
            return scale * (expected_gain(n + 1, p, belief_map) - expected_gain(n, p, belief_map)) - mc

        vals = np.array([diff(p) for p in ps])
        if vals[0] >= 0:
            ups = [0.5] if np.all(vals >= 0) else None
            if ups is None:
                raise IrregularSchedule(f"{n}->{n + 1} net value dips below zero after p=0.5",
                                        _crossings(ps, vals))
            out.append(0.5)
            continue
        crossings = _crossings(ps, vals)
        up = [c for c in crossings if c[1] == "up"]
        if len(up) != 1:
            raise IrregularSchedule(f"{n}->{n + 1} has {len(up)} upward crossings", crossings)
        i = up[0][2]
        out.append(brentq(diff, ps[i], ps[i + 1], xtol=1e-12))
    if any(b > a for a, b in zip(out[1:], out[:-1])):
        raise IrregularSchedule("boundaries are not nondecreasing", out)
    return tuple(out)


def _crossings(ps, vals):
    res = []
    for i in range(len(vals) - 1):
        if vals[i] < 0 <= vals[i + 1]:
            res.append((float(ps[i]), "up", i))
        elif vals[i] >= 0 > vals[i + 1]:
            res.append((float(ps[i]), "down", i))
    return res
