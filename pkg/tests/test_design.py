import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from misinference import bayes, design
from misinference.core import Block, DeckSpec, DegenerateDeck, Observation, Rng, State, Suit
from misinference.demand import DEMAND_PS

N = 10_000


def draws(gen, n=N, seed=0):
    g = np.random.default_rng(seed)
    return [gen(g) for _ in range(n)]


def one_card_strength(deck):
    return bayes.strength(deck, Suit.DIAMOND)


class TestStrengthToCounts:
    @pytest.mark.parametrize("S, n, d1", [(0.02, 1665, 841), (0.0, 1664, 832)])
    def test_examples(self, S, n, d1):
        assert design.strength_to_counts(S, n) == DeckSpec(n, d1, n - d1)

    def test_strongest_grid_point(self):
        # the count minimising |logit(D1/N) - 3| is 1586 (S = 2.9995); 1587 (S = 3.013) is further away
        deck = design.strength_to_counts(3.0, 1665)
        assert deck.diamonds_green == 1586
        assert abs(one_card_strength(deck) - 3) < abs(math.log(1587 / 78) - 3)
        assert DeckSpec.from_share(0.953) == DeckSpec(1665, 1587, 78)

    def test_degenerate(self):
        with pytest.raises(DegenerateDeck):
            design.strength_to_counts(0.5, 1)

    @settings(max_examples=50)
    @given(st.sampled_from([1665, 337, 1664]), st.data())
    def test_idempotent(self, n, data):
        d1 = data.draw(st.integers(math.ceil(n / 2), n - 1))
        deck = DeckSpec(n, d1, n - d1)
        assert design.strength_to_counts(one_card_strength(deck), n) == deck

    def test_share_range_large_decks(self):
        for S in design.ONE_SIGNAL_STRENGTHS + design.THREE_SIGNAL_STRENGTHS:
            p = design.strength_to_counts(S, 1665).p1
            assert 0.505 <= round(p, 3) <= 0.953

    def test_share_range_small_decks(self):
        # 337 cards cannot get closer to S = 0.02 than 170/337 = 0.50445
        shares = {S: design.strength_to_counts(S, 337).p1 for S in design.ONE_SIGNAL_STRENGTHS}
        assert shares.pop(0.02) == pytest.approx(170 / 337)
        assert all(0.505 <= round(p, 3) <= 0.953 for p in shares.values())


class TestOneSymmetric:
    specs = draws(design.gen_one_symmetric)

    def test_strengths_on_grid(self):
        assert {t.nominal[0] for t in self.specs} == set(design.ONE_SIGNAL_STRENGTHS)
        for t in self.specs[:500]:
            assert t.deck == design.strength_to_counts(t.nominal[0], t.deck.n_total) or \
                DeckSpec(t.deck.n_total, t.deck.diamonds_violet, t.deck.diamonds_green) == \
                design.strength_to_counts(t.nominal[0], t.deck.n_total)

    def test_deck_size_split(self):
        share = np.mean([t.deck.n_total == 1665 for t in self.specs])
        assert share == pytest.approx(0.5, abs=0.02)

    def test_card_follows_true_deck(self):
        pairs = [(t.deck.p1 if t.true_state is State.GREEN else t.deck.p2, t.observation.n_diamonds)
                 for t in self.specs]
        p = np.array([a for a, _ in pairs])
        d = np.array([b for _, b in pairs])
        heavy = p > 0.5
        assert d[heavy].mean() == pytest.approx(p[heavy].mean(), abs=0.02)
        assert np.mean([t.true_state is State.GREEN for t in self.specs]) == pytest.approx(0.5, abs=0.02)

    def test_symmetric_decks(self):
        assert all(t.deck.symmetric and t.observation.n_cards == 1 for t in self.specs)


class TestOneAsymmetric:
    specs = draws(design.gen_one_asymmetric)

    def test_one_share_near_half(self):
        for t in self.specs:
            p1, p2 = t.nominal
            assert (p1 in design.ASYM_NEAR_HALF) != (p2 in design.ASYM_NEAR_HALF)
            other = p2 if p1 in design.ASYM_NEAR_HALF else p1
            assert other in design.ASYM_OTHER

    def test_configuration_frequencies(self):
        counts = Counter((t.nominal, t.deck.n_total) for t in self.specs)
        assert len(counts) == 2 * 4 * 2 * 2
        # 2 near shares x 4 others x 2 assignments = 16 share configurations, each 1/16
        by_shares = Counter(t.nominal for t in self.specs)
        assert len(by_shares) == 16
        for c in by_shares.values():
            assert c / N == pytest.approx(1 / 16, abs=0.02)


class TestThreeSymmetric:
    specs = draws(design.gen_three_symmetric)

    def test_grid(self):
        assert len(design.THREE_SIGNAL_STRENGTHS) == 14
        assert {t.nominal[0] for t in self.specs} == set(design.THREE_SIGNAL_STRENGTHS)

    def test_pattern_quota(self):
        counts = Counter((t.observation.n_diamonds, t.observation.n_spades) for t in self.specs)
        assert set(counts) == {(3, 0), (2, 1), (1, 2), (0, 3)}
        for c in counts.values():
            assert c / N == pytest.approx(0.25, abs=0.02)

    def test_fixed_deck_size(self):
        assert all(t.deck.n_total == 1665 for t in self.specs)

    @pytest.mark.parametrize("base", design.THREE_SIGNAL_BASES)
    def test_overlap_pairs(self, base):
        deck_a = design.strength_to_counts(base, 1665)
        deck_b = design.strength_to_counts(round(3 * base, 2), 1665)
        pa = bayes.posterior(0.5, deck_a, Observation(3, 0))
        pb = bayes.posterior(0.5, deck_b, Observation(2, 1))
        assert abs(pa - pb) < 0.01

    def test_true_state_coherent_with_likelihoods(self):
        # P(Green | pattern) matches the Bayesian posterior
        post = np.array([bayes.posterior(0.5, t.deck, t.observation) for t in self.specs])
        green = np.array([t.true_state is State.GREEN for t in self.specs])
        assert green.mean() == pytest.approx(post.mean(), abs=0.02)


class TestDemandAndUncertain:
    def test_demand_shares(self):
        specs = draws(design.gen_demand, 500)
        assert {round(t.nominal[0], 3) for t in specs} <= set(DEMAND_PS)
        assert all(t.observation is None and max(t.deck.p1, t.deck.p2) < 0.75 for t in specs)
        assert all(t.costs[1] == 0.5 for t in specs)

    def test_uncertain_sets(self):
        specs = draws(design.gen_uncertain)
        assert {t.nominal for t in specs} == set(design.UNCERTAIN_SETS)
        assert np.mean([t.true_level == "L" for t in specs]) == pytest.approx(0.5, abs=0.02)
        assert all(t.deck.n_total == 1665 and t.deck_alt.n_total == 1665 for t in specs)

    @pytest.mark.parametrize("lo, hi", [(0.495, 0.817), (0.505, 0.807)])
    def test_uncertain_mixture(self, lo, hi):
        post = bayes.mixture_posterior(0.5, DeckSpec.from_share(lo), DeckSpec.from_share(hi), Suit.DIAMOND)
        assert post == pytest.approx(0.656, abs=5e-4)

    def test_uninformative(self):
        t = design.gen_uninformative(np.random.default_rng(0))
        assert t.deck == DeckSpec(1664, 832, 832) and t.block is Block.UNINFORMATIVE


class TestSession:
    def test_layout(self):
        s = design.gen_session("s0001", 3)
        rounds = [r for r, _ in s.trials]
        assert rounds == list(range(1, 13)) + list(range(14, 26))
        assert s.placeholder_rounds == (13,)
        blocks = {r: t.block for r, t in s.trials}
        assert all(blocks[r] in (Block.ONE_SYMMETRIC, Block.ONE_ASYMMETRIC, Block.UNINFORMATIVE)
                   for r in range(1, 13))
        assert all(blocks[r] is Block.THREE_SYMMETRIC for r in range(14, 19))
        assert sorted(round(t.nominal[0], 3) for r, t in s.trials if 19 <= r <= 23) == sorted(DEMAND_PS)
        assert all(blocks[r] is Block.UNCERTAIN for r in (24, 25))

    def test_panel_counts(self):
        sessions = design.gen_sessions(500, 0)
        kinds = Counter(t.block for s in sessions for r, t in s.trials if r <= 12)
        informative = kinds[Block.ONE_SYMMETRIC] + kinds[Block.UNINFORMATIVE]
        assert informative == pytest.approx(4000, abs=150)
        assert kinds[Block.ONE_ASYMMETRIC] == pytest.approx(2000, abs=150)
        assert kinds[Block.UNINFORMATIVE] == pytest.approx(72, abs=30)

    def test_exact_quota(self):
        s = design.gen_session("s0001", 3, exact_quota=True, uninformative_rate=0)
        kinds = Counter(t.block for r, t in s.trials if r <= 12)
        assert kinds == {Block.ONE_SYMMETRIC: 8, Block.ONE_ASYMMETRIC: 4}

    def test_deterministic(self):
        assert design.gen_session("s0042", 9) == design.gen_session("s0042", 9)

    def test_distinct_seeds_distinct_sessions(self):
        sessions = {design.gen_session("s0001", seed).records().__repr__() for seed in range(1000)}
        assert len(sessions) == 1000

    def test_records_have_no_responses(self):
        recs = design.gen_session("s0001", 1).records()
        assert len(recs) == 24
        assert all(r.report_pct is None and r.purchased is None for r in recs)

    def test_generators_accept_rng_paths(self):
        a = design.gen_one_symmetric(Rng(1).child("x"))
        b = design.gen_one_symmetric(Rng(1).child("x"))
        assert a == b
