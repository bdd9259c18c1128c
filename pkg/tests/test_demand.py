import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from misinference.core import State
from misinference.demand import (
    DEFAULT_COSTS,
    DEMAND_PS,
    DemandProblem,
    IrregularSchedule,
    belief_map_for,
    bonus_probability,
    expected_gain,
    expected_utility,
    instrumental_value,
    net_values,
    optimal_purchase,
    purchase_boundaries,
    quadratic_payoff,
)
from misinference.perception import REFERENCE_KBETA, KBeta, misperceived_posterior, switching_point

MISPERCEIVER = belief_map_for(REFERENCE_KBETA)


def gain_by_sequences(n, p, bmap=lambda b: b):
    """Oracle: enumerate every ordered card sequence and score the agent's own belief."""
    total = 0.0
    for seq in itertools.product((0, 1), repeat=n):
        lg = math.prod(p if c else 1 - p for c in seq)
        lv = math.prod(1 - p if c else p for c in seq)
        b = bmap(lg / (lg + lv)) if lg != lv else 0.5
        total += 0.5 * (lg + lv) * (1 - b * (1 - b))
    return total - 0.75


def oracle_net(p, bmap=lambda b: b):
    return [100 * gain_by_sequences(n, p, bmap) - c for n, c in DEFAULT_COSTS.items()]


class TestPayoffs:
    @pytest.mark.parametrize("a, state, expected", [
        (0.7, State.GREEN, 0.91), (0.7, State.VIOLET, 0.51), (0.5, State.GREEN, 0.75), (0.5, State.VIOLET, 0.75)])
    def test_quadratic(self, a, state, expected):
        assert quadratic_payoff(a, state) == pytest.approx(expected)

    @pytest.mark.parametrize("b, eu, iv", [(0.5, 0.75, 0.0), (1.0, 1.0, 0.25), (0.731, 0.8034, 0.0534)])
    def test_expected_utility_and_value(self, b, eu, iv):
        assert expected_utility(b) == pytest.approx(eu, abs=1e-4)
        assert instrumental_value(b) == pytest.approx(iv, abs=1e-4)

    @given(st.floats(0, 1))
    def test_expected_utility_is_expected_payoff(self, b):
        direct = b * quadratic_payoff(b, State.GREEN) + (1 - b) * quadratic_payoff(b, State.VIOLET)
        assert expected_utility(b) == pytest.approx(direct)

    @pytest.mark.parametrize("a, state, expected", [(1.0, State.GREEN, 1.0), (0.5, State.VIOLET, 0.75),
                                                    (0.7, State.VIOLET, 0.51)])
    def test_bonus_probability(self, a, state, expected):
        assert bonus_probability(a, state) == pytest.approx(expected)

    def test_incentive_compatible(self):
        reports = np.arange(1, 100) / 100
        for b in reports:
            ev = [b * bonus_probability(a, State.GREEN) + (1 - b) * bonus_probability(a, State.VIOLET)
                  for a in reports]
            best = np.flatnonzero(np.isclose(ev, max(ev), rtol=0, atol=1e-15))
            assert list(reports[best]) == [b]


class TestGain:
    @pytest.mark.parametrize("n, p, expected", [(0, 0.6, 0.0), (1, 0.57, 0.0049), (3, 0.731, 0.1154)])
    def test_values(self, n, p, expected):
        assert expected_gain(n, p) == pytest.approx(expected, abs=1e-4)

    @given(st.integers(0, 3), st.floats(0.501, 0.95))
    def test_matches_sequence_oracle(self, n, p):
        assert expected_gain(n, p) == pytest.approx(gain_by_sequences(n, p), abs=1e-12)

    @settings(max_examples=30)
    @given(st.integers(1, 3), st.floats(0.501, 0.95))
    def test_misperceived_matches_sequence_oracle(self, n, p):
        bmap = lambda b: misperceived_posterior(b, REFERENCE_KBETA)  # noqa: E731
        assert expected_gain(n, p, MISPERCEIVER) == pytest.approx(gain_by_sequences(n, p, bmap), abs=1e-12)

    def test_nondecreasing_and_concave_in_n(self):
        for p in np.linspace(0.501, 0.749, 100):
            g = np.array([expected_gain(n, p) for n in range(4)])
            assert np.all(np.diff(g) >= -1e-15)
            assert np.all(np.diff(g, 2) <= 1e-15)


class TestOptimalPurchase:
    def test_net_values_match_oracle(self):
        for p in DEMAND_PS:
            np.testing.assert_allclose(net_values(DemandProblem(p)), oracle_net(p), atol=1e-10)

    def test_oracle_net_values(self):
        # frozen from the sequence oracle
        np.testing.assert_allclose(net_values(DemandProblem(0.622)), [0, 0.9884, 1.30953, 1.00514], atol=1e-4)
        np.testing.assert_allclose(net_values(DemandProblem(0.731)), [0, 4.8361, 7.29497, 8.54581], atol=1e-4)

    def test_bayesian_choices(self):
        assert [optimal_purchase(DemandProblem(p)) for p in DEMAND_PS] == [0, 0, 0, 2, 3]

    def test_ties_go_to_fewer_cards(self):
        # an agent who learns nothing, paid exactly the first card's cost: nets 0, 0, -0.5, -1.5
        vals = net_values(DemandProblem(0.6), lambda b: 0.5, bonus_per_card=0.5)
        assert vals[:2] == [0.0, 0.0]
        assert optimal_purchase(DemandProblem(0.6), lambda b: 0.5, bonus_per_card=0.5) == 0

    def test_bonus_shifts_purchases_up(self):
        assert optimal_purchase(DemandProblem(0.55), bonus_per_card=1.0) >= 1

    @pytest.mark.parametrize("kb", [None, KBeta(0.882, 0.76), KBeta(1.1, 0.5), KBeta(0.8, 0.95)])
    def test_monotone_in_p(self, kb):
        bmap = belief_map_for(kb)
        choices = [optimal_purchase(DemandProblem(p), bmap) for p in np.linspace(0.501, 0.749, 200)]
        assert np.all(np.diff(choices) >= 0)

    def test_overinference_means_over_demand(self):
        ps = switching_point(REFERENCE_KBETA)
        for p in np.linspace(0.505, 0.745, 60):
            if abs(p - ps) < 1e-3:
                continue
            bayes, perceived = net_values(DemandProblem(p))[1], net_values(DemandProblem(p), MISPERCEIVER)[1]
            assert (perceived > bayes) == (p < ps)

    @pytest.mark.parametrize("bad", [{0: 0, 1: 1, 2: 1.5}, {0: 0, 1: 0.5, 2: 0.5}, {1: 0.5, 2: 1.5}])
    def test_cost_schedule_validation(self, bad):
        with pytest.raises(ValueError):
            DemandProblem(0.6, bad)

    @pytest.mark.parametrize("p", [0.5, 0.75, 0.8])
    def test_share_range(self, p):
        with pytest.raises(ValueError):
            DemandProblem(p)


class TestBoundaries:
    def test_bayesian(self):
        p01, p12, p23 = purchase_boundaries()
        assert p01 == pytest.approx(0.5 + math.sqrt(0.005), abs=1e-9)
        # frozen from bisection on the sequence oracle
        assert p12 == pytest.approx(0.6044647254, abs=1e-8)
        assert p23 == pytest.approx(0.6413288523, abs=1e-8)

    def test_consistent_with_choices(self):
        b = purchase_boundaries()
        for n, (lo, hi) in enumerate(zip((0.5,) + b, b + (0.75,))):
            mid = 0.5 * (lo + hi)
            assert optimal_purchase(DemandProblem(mid)) == n

    def test_free_information(self):
        assert purchase_boundaries({0: 0, 1: 0, 2: 0, 3: 0}) == (0.5, 0.5, 0.5)

    def test_misperceiver_skips_two_cards(self):
        # pairwise 2->3 indifference falls below 1->2, so demand jumps from 1 to 3
        with pytest.raises(IrregularSchedule) as info:
            purchase_boundaries(belief_map=MISPERCEIVER)
        p01, p12, p23 = info.value.crossings
        assert p01 < 0.5 + math.sqrt(0.005) and p23 < p12
        choices = {optimal_purchase(DemandProblem(p), MISPERCEIVER) for p in np.linspace(0.501, 0.749, 200)}
        assert choices == {0, 1, 3}

    def test_no_crossing_is_irregular(self):
        with pytest.raises(IrregularSchedule, match="0 upward crossings"):
            purchase_boundaries({0: 0, 1: 0, 2: 10, 3: 10})
