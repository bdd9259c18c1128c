"""Exact Bayesian posteriors for the two-deck card problem.

Draws are with replacement, so per-card log-likelihood ratios add.
"""

from __future__ import annotations

import math

from .core import (
    DeckSpec,
    Observation,
    Suit,
    ZeroProbabilityObservation,
    logistic,
    logit,
)


def _suit_probs(deck: DeckSpec, suit: Suit) -> tuple[float, float]:
    if suit is Suit.DIAMOND:
        return deck.p1, deck.p2
    return 1.0 - deck.p1, 1.0 - deck.p2


def llr(deck: DeckSpec, suit: Suit) -> float:
    """Log-likelihood ratio ``ln P(suit|Green) / P(suit|Violet)`` of one card.

    Infinite when the suit is impossible under exactly one deck.
    """
    pg, pv = _suit_probs(deck, Suit(suit))
    if pg == 0.0 and pv == 0.0:
        raise ZeroProbabilityObservation(f"{Suit(suit).value} cannot be drawn from {deck}")
    if pg == 0.0:
        return -math.inf
    if pv == 0.0:
        return math.inf
    return math.log(pg) - math.log(pv)


def strength(deck: DeckSpec, suit: Suit) -> float:
    return abs(llr(deck, suit))


def total_llr(deck: DeckSpec, obs: Observation) -> float:
    out = 0.0
    if obs.n_diamonds:
        out += obs.n_diamonds * llr(deck, Suit.DIAMOND)
    if obs.n_spades:
        out += obs.n_spades * llr(deck, Suit.SPADE)
    return out


def posterior(prior: float, deck: DeckSpec, obs: Observation) -> float:
    """Posterior probability of Green after observing ``obs``."""
    return logistic(logit(prior) + total_llr(deck, obs))


def mixture_posterior(prior: float, deck_l: DeckSpec, deck_h: DeckSpec, suit: Suit) -> float:
    """Posterior of Green when the card comes from ``deck_l`` or ``deck_h`` with equal odds."""
    gl, vl = _suit_probs(deck_l, Suit(suit))
    gh, vh = _suit_probs(deck_h, Suit(suit))
    like_g = 0.5 * gl + 0.5 * gh
    like_v = 0.5 * vl + 0.5 * vh
    if like_g == 0.0 and like_v == 0.0:
        raise ZeroProbabilityObservation(f"{Suit(suit).value} impossible under both levels")
    num = prior * like_g
    return num / (num + (1.0 - prior) * like_v)
