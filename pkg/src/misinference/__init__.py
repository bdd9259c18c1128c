"""Simulation and estimation of belief updating under misperceived signal strength."""

from .core import (
    Block,
    DeckSpec,
    Observation,
    Rng,
    State,
    Suit,
    TrialRecord,
    clamp_report,
    logistic,
    logit,
)
from .perception import KBeta, PerceptionParams

__version__ = "0.1.0"

__all__ = [
    "Block", "DeckSpec", "KBeta", "Observation", "PerceptionParams", "Rng", "State", "Suit",
    "TrialRecord", "clamp_report", "logistic", "logit",
]
