"""Domain types and log-odds arithmetic shared across the package."""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, field

import numpy as np


class MisinferenceError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateProbability(MisinferenceError, ValueError):
    """A probability of exactly 0 or 1 was passed where log odds are needed."""


class MalformedReport(MisinferenceError, ValueError):
    pass


class DegenerateDeck(MisinferenceError, ValueError):
    pass


class ZeroProbabilityObservation(MisinferenceError, ValueError):
    """The drawn suit cannot occur under either deck."""


class UninformativeSignal(MisinferenceError, ValueError):
    """A zero-strength signal reached a function that needs a positive one."""


class UninformativeWarning(UserWarning):
    """Emitted when a zero-strength signal is handled by continuity."""


def logit(p):
    """Natural log odds ``ln(p / (1 - p))``.

    Accepts scalars or arrays. Raises :class:`DegenerateProbability` if any
    input is 0 or 1; clamp explicitly (see :func:`clamp_report`) first.
    """
    arr = np.asarray(p, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)):
        raise DegenerateProbability(f"degenerate probability: {p!r}")
    out = np.log(arr) - np.log1p(-arr)
    return float(out) if out.ndim == 0 else out


def logistic(s):
    """Inverse of :func:`logit`; numerically stable for large ``|s|``."""
    arr = np.asarray(s, dtype=float)
    out = np.where(arr >= 0, 1.0 / (1.0 + np.exp(-np.abs(arr))),
                   np.exp(-np.abs(arr)) / (1.0 + np.exp(-np.abs(arr))))
    return float(out) if out.ndim == 0 else out


def clamp_report(integer_percent: int) -> float:
    """Map a 0-100 integer report to a probability usable in log-odds analysis.

    The endpoints are pulled in by half a grid step (0 -> 0.005, 100 -> 0.995).
    """
    if isinstance(integer_percent, bool) or not isinstance(integer_percent, (int, np.integer)):
        raise MalformedReport(f"malformed report: {integer_percent!r}")
    if not 0 <= integer_percent <= 100:
        raise MalformedReport(f"malformed report: {integer_percent!r}")
    if integer_percent == 0:
        return 0.005
    if integer_percent == 100:
        return 0.995
    return integer_percent / 100.0


class Suit(str, enum.Enum):
    DIAMOND = "Diamond"
    SPADE = "Spade"


class State(str, enum.Enum):
    GREEN = "Green"
    VIOLET = "Violet"


class Block(str, enum.Enum):
    ONE_SYMMETRIC = "OneSymmetric"
    ONE_ASYMMETRIC = "OneAsymmetric"
    THREE_SYMMETRIC = "ThreeSymmetric"
    DEMAND = "Demand"
    UNCERTAIN = "Uncertain"
    UNINFORMATIVE = "Uninformative"


@dataclass(frozen=True)
class DeckSpec:
    """Two decks of ``n_total`` cards each.

    The Green deck holds ``diamonds_green`` Diamonds and the Violet deck
    ``diamonds_violet``; the rest are Spades.
    """

    n_total: int
    diamonds_green: int
    diamonds_violet: int

    def __post_init__(self):
        if self.n_total < 1:
            raise DegenerateDeck(f"deck must hold at least one card, got {self.n_total}")
        for d in (self.diamonds_green, self.diamonds_violet):
            if not 0 <= d <= self.n_total:
                raise DegenerateDeck(f"diamond count {d} outside [0, {self.n_total}]")

    @property
    def p1(self) -> float:
        return self.diamonds_green / self.n_total

    @property
    def p2(self) -> float:
        return self.diamonds_violet / self.n_total

    @property
    def symmetric(self) -> bool:
        return self.diamonds_green + self.diamonds_violet == self.n_total

    @property
    def uninformative(self) -> bool:
        return self.diamonds_green == self.diamonds_violet

    @classmethod
    def from_share(cls, p: float, n_total: int = 1665) -> DeckSpec:
        """Symmetric deck whose Green Diamond share is the count nearest ``p``."""
        d = int(round(p * n_total))
        return cls(n_total, d, n_total - d)


@dataclass(frozen=True)
class Observation:
    n_diamonds: int
    n_spades: int

    def __post_init__(self):
        if self.n_diamonds < 0 or self.n_spades < 0:
            raise ValueError("card counts must be nonnegative")

    @property
    def n_cards(self) -> int:
        return self.n_diamonds + self.n_spades

    @classmethod
    def single(cls, suit: Suit) -> Observation:
        return cls(1, 0) if suit is Suit.DIAMOND else cls(0, 1)


@dataclass(frozen=True)
class TrialRecord:
    """One subject-round.

    ``deck_alt`` is only set for the Uncertain block, where ``deck`` is the
    low-strength candidate and ``deck_alt`` the high one (mixed 1/2-1/2).
    ``report_pct`` is the reported percent chance of Green; the Violet
    report is its complement.
    """

    subject_id: str
    round: int
    block: Block
    deck: DeckSpec
    observation: Observation | None = None
    report_pct: int | None = None
    purchased: int | None = None
    deck_alt: DeckSpec | None = None

    def __post_init__(self):
        if not 1 <= self.round <= 25:
            raise ValueError(f"round {self.round} outside 1-25")
        if self.report_pct is not None and not 0 <= self.report_pct <= 100:
            raise MalformedReport(f"malformed report: {self.report_pct!r}")
        if self.purchased is not None:
            if self.block is not Block.DEMAND:
                raise ValueError("cards_purchased is only recorded for Demand trials")
            if not 0 <= self.purchased <= 3:
                raise ValueError(f"cards_purchased {self.purchased} outside 0-3")
        if (self.deck_alt is not None) != (self.block is Block.UNCERTAIN):
            raise ValueError("deck_alt must be set exactly for Uncertain trials")
        if self.block is Block.DEMAND and self.observation is not None:
            raise ValueError("Demand trials carry no pre-drawn observation")
        n = self.observation.n_cards if self.observation is not None else None
        if self.block in (Block.ONE_SYMMETRIC, Block.ONE_ASYMMETRIC, Block.UNCERTAIN,
                          Block.UNINFORMATIVE) and n is not None and n != 1:
            raise ValueError(f"{self.block.value} trials draw exactly one card")
        if self.block is Block.THREE_SYMMETRIC and n is not None and n != 3:
            raise ValueError("ThreeSymmetric trials draw exactly three cards")

    @property
    def reported_green(self) -> float | None:
        return None if self.report_pct is None else self.report_pct / 100.0

    @property
    def reported_violet(self) -> float | None:
        return None if self.report_pct is None else (100 - self.report_pct) / 100.0


def _path_key(key) -> int:
    if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
        if key < 0:
            raise ValueError("substream keys must be nonnegative")
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


@dataclass(frozen=True)
class Rng:
    """A seed plus a hierarchical substream path, e.g. (session, subject, round).

    Each distinct path maps to an independent PCG64 stream through
    :class:`numpy.random.SeedSequence`, so draws do not depend on the order
    in which streams are created or on the platform.
    """

    seed: int
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def child(self, *keys) -> Rng:
        return Rng(self.seed, self.path + tuple(_path_key(k) for k in keys))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(self.seed, spawn_key=self.path)))
