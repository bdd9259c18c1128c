"""Seeded generation of the five treatment blocks and per-subject sessions.

Session layout (round numbers):

    1-12   one signal: symmetric with prob 2/3, asymmetric otherwise
    13     attention check (placeholder only)
    14-18  three symmetric signals
    19-23  demand for information, each demand share exactly once
    24-25  one signal of uncertain strength
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import bayes
from .core import (
    Block,
    DeckSpec,
    DegenerateDeck,
    Observation,
    Rng,
    State,
    Suit,
    TrialRecord,
)
from .demand import DEFAULT_COSTS, DEMAND_PS

ONE_SIGNAL_STRENGTHS = (0.02, 0.05, 0.10, 0.15, 0.20, 0.30, 0.40, 0.50,
                        0.75, 1.00, 1.25, 1.50, 1.75, 2.00, 2.50, 3.00)
# Five base strengths whose triples are also on the grid, so a (3, 0) draw at
# a base strength matches a (2, 1) draw at its triple; four fillers extend
# the grid down to the weakest one-signal strength.
THREE_SIGNAL_BASES = (0.30, 0.40, 0.50, 0.75, 1.00)
THREE_SIGNAL_FILLERS = (0.02, 0.05, 0.10, 0.20)
THREE_SIGNAL_STRENGTHS = tuple(sorted(
    THREE_SIGNAL_FILLERS + THREE_SIGNAL_BASES + tuple(round(3 * s, 2) for s in THREE_SIGNAL_BASES)))
ASYM_NEAR_HALF = (0.505, 0.495)
ASYM_OTHER = (0.18, 0.35, 0.65, 0.82)
UNCERTAIN_SETS = ((0.495, 0.817), (0.505, 0.807), (0.495, 0.193), (0.505, 0.183))
DECK_SIZES = (1665, 337)
LARGE_DECK = 1665
UNINFORMATIVE_DECK = DeckSpec(1664, 832, 832)
UNINFORMATIVE_RATE = 72 / 500
ATTENTION_CHECK_ROUND = 13


@dataclass(frozen=True)
class TrialSpec:
    """A generated trial before any response.

    ``nominal`` records the design value that produced the deck: the target
    strength (symmetric blocks), the nominal ``(p1, p2)`` shares
    (asymmetric), the share ``p`` (demand) or ``(p_low, p_high)`` (uncertain).
    """

    block: Block
    deck: DeckSpec
    true_state: State
    observation: Observation | None = None
    deck_alt: DeckSpec | None = None
    true_level: str | None = None
    nominal: tuple[float, ...] = ()
    costs: dict | None = None

    def to_record(self, subject_id: str, round_: int) -> TrialRecord:
        return TrialRecord(subject_id=subject_id, round=round_, block=self.block, deck=self.deck,
                           observation=self.observation, deck_alt=self.deck_alt)


@dataclass(frozen=True)
class SessionDesign:
    subject_id: str
    trials: tuple[tuple[int, TrialSpec], ...]
    placeholder_rounds: tuple[int, ...] = field(default=(ATTENTION_CHECK_ROUND,))

    def records(self) -> list[TrialRecord]:
        return [t.to_record(self.subject_id, r) for r, t in self.trials]


def strength_to_counts(target_S: float, n_total: int) -> DeckSpec:
    """Symmetric deck whose one-card strength is closest to ``target_S``.

    The Green deck is the Diamond-heavy one (``D1 >= n_total / 2``).
    """
    if n_total < 2:
        raise DegenerateDeck(f"cannot build a deck of {n_total} cards")
    if target_S < 0:
        raise ValueError("target strength must be nonnegative")
    d = np.arange(math.ceil(n_total / 2), n_total)
    s = np.log(d) - np.log(n_total - d)
    best = int(d[np.argmin(np.abs(s - target_S))])
    return DeckSpec(n_total, best, n_total - best)


def _draw_card(g: np.random.Generator, deck: DeckSpec, state: State) -> Suit:
    p_diamond = deck.p1 if state is State.GREEN else deck.p2
    return Suit.DIAMOND if g.random() < p_diamond else Suit.SPADE


def _state(g: np.random.Generator) -> State:
    return State.GREEN if g.random() < 0.5 else State.VIOLET


def _orient(deck: DeckSpec, green_heavy: bool) -> DeckSpec:
    if green_heavy:
        return deck
    return DeckSpec(deck.n_total, deck.diamonds_violet, deck.diamonds_green)


def _as_generator(rng) -> np.random.Generator:
    return rng.generator() if isinstance(rng, Rng) else rng


def gen_one_symmetric(rng) -> TrialSpec:
    g = _as_generator(rng)
    target = ONE_SIGNAL_STRENGTHS[g.integers(len(ONE_SIGNAL_STRENGTHS))]
    n = DECK_SIZES[g.integers(2)]
    deck = _orient(strength_to_counts(target, n), bool(g.integers(2)))
    state = _state(g)
    obs = Observation.single(_draw_card(g, deck, state))
    return TrialSpec(Block.ONE_SYMMETRIC, deck, state, obs, nominal=(target,))


def gen_one_asymmetric(rng) -> TrialSpec:
    g = _as_generator(rng)
    near = ASYM_NEAR_HALF[g.integers(2)]
    other = ASYM_OTHER[g.integers(4)]
    near_is_green = bool(g.integers(2))
    n = DECK_SIZES[g.integers(2)]
    p1, p2 = (near, other) if near_is_green else (other, near)
    deck = DeckSpec(n, int(round(p1 * n)), int(round(p2 * n)))
    state = _state(g)
    obs = Observation.single(_draw_card(g, deck, state))
    return TrialSpec(Block.ONE_ASYMMETRIC, deck, state, obs, nominal=(p1, p2))


THREE_PATTERNS = (Observation(3, 0), Observation(2, 1), Observation(1, 2), Observation(0, 3))


def gen_three_symmetric(rng) -> TrialSpec:
    """Three-card trial with the count pattern fixed by quota (uniform over the four).

    The true deck is then drawn from the Bayesian posterior given the
    pattern, so the record stays coherent with the deck's likelihoods.
    """
    g = _as_generator(rng)
    target = THREE_SIGNAL_STRENGTHS[g.integers(len(THREE_SIGNAL_STRENGTHS))]
    deck = _orient(strength_to_counts(target, LARGE_DECK), bool(g.integers(2)))
    obs = THREE_PATTERNS[g.integers(4)]
    post = bayes.posterior(0.5, deck, obs)
    state = State.GREEN if g.random() < post else State.VIOLET
    return TrialSpec(Block.THREE_SYMMETRIC, deck, state, obs, nominal=(target,))


def gen_demand(rng, p: float | None = None) -> TrialSpec:
    g = _as_generator(rng)
    if p is None:
        p = DEMAND_PS[g.integers(len(DEMAND_PS))]
    deck = _orient(DeckSpec.from_share(p, LARGE_DECK), bool(g.integers(2)))
    return TrialSpec(Block.DEMAND, deck, _state(g), None, nominal=(p,), costs=dict(DEFAULT_COSTS))


def gen_uncertain(rng) -> TrialSpec:
    g = _as_generator(rng)
    p_low, p_high = UNCERTAIN_SETS[g.integers(len(UNCERTAIN_SETS))]
    deck_l = DeckSpec.from_share(p_low, LARGE_DECK)
    deck_h = DeckSpec.from_share(p_high, LARGE_DECK)
    state = _state(g)
    level = "L" if g.random() < 0.5 else "H"
    obs = Observation.single(_draw_card(g, deck_l if level == "L" else deck_h, state))
    return TrialSpec(Block.UNCERTAIN, deck_l, state, obs, deck_alt=deck_h, true_level=level,
                     nominal=(p_low, p_high))


def gen_uninformative(rng) -> TrialSpec:
    g = _as_generator(rng)
    state = _state(g)
    obs = Observation.single(_draw_card(g, UNINFORMATIVE_DECK, state))
    return TrialSpec(Block.UNINFORMATIVE, UNINFORMATIVE_DECK, state, obs, nominal=(0.0,))


def gen_session(subject_id: str, seed: int, exact_quota: bool = False,
                uninformative_rate: float = UNINFORMATIVE_RATE) -> SessionDesign:
    """Assemble one subject's 24 trials.

    With ``exact_quota`` the one-signal rounds hold exactly 8 symmetric and
    4 asymmetric trials in shuffled order instead of independent 2/3 draws.
    """
    root = Rng(seed).child("design", subject_id)
    g = root.child("layout").generator()
    if exact_quota:
        kinds = np.array([True] * 8 + [False] * 4)
        g.shuffle(kinds)
    else:
        kinds = g.random(12) < 2 / 3
    trials: list[tuple[int, TrialSpec]] = []
    for i, symmetric in enumerate(kinds):
        r = i + 1
        sub = root.child("round", r)
        trials.append((r, gen_one_symmetric(sub) if symmetric else gen_one_asymmetric(sub)))
    if g.random() < uninformative_rate:
        sym_rounds = [r for r, t in trials if t.block is Block.ONE_SYMMETRIC]
        if sym_rounds:
            r = sym_rounds[g.integers(len(sym_rounds))]
            trials[r - 1] = (r, gen_uninformative(root.child("uninformative", r)))
    for r in range(14, 19):
        trials.append((r, gen_three_symmetric(root.child("round", r))))
    order = g.permutation(len(DEMAND_PS))
    for j, r in enumerate(range(19, 24)):
        trials.append((r, gen_demand(root.child("round", r), DEMAND_PS[order[j]])))
    for r in (24, 25):
        trials.append((r, gen_uncertain(root.child("round", r))))
    return SessionDesign(subject_id, tuple(trials))


def subject_ids(n: int) -> list[str]:
    width = max(4, len(str(n)))
    return [f"s{i:0{width}d}" for i in range(1, n + 1)]


def gen_sessions(n_subjects: int, seed: int, **kwargs) -> list[SessionDesign]:
    return [gen_session(sid, seed, **kwargs) for sid in subject_ids(n_subjects)]
