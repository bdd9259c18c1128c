"""Synthetic subject panels.

Cognitive precision enters through one channel: the perception noise
``eta``. Sophistication scales it down (halving at sophistication 1) and
experience shrinks it exponentially with the round number.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import bayes
from .core import Block, MisinferenceError, Rng, Suit, TrialRecord, logistic, logit
from .demand import DEFAULT_COSTS, DEFAULT_SCALE, DemandProblem, belief_map_for, optimal_purchase
from .perception import (
    REFERENCE_KBETA,
    PerceptionParams,
    derive_kbeta,
    mean_perceived_strength,
    sample_perception,
)

UNINFORMATIVE_EXACT_RATE = 0.96
UNINFORMATIVE_OFFSETS = (-3, -2, -1, 1, 2, 3)


class PanelMismatch(MisinferenceError):
    pass


class AgentKind(str, enum.Enum):
    BAYESIAN = "bayesian"
    CONSERVATIVE = "conservative"
    MISPERCEIVER = "misperceiver"


def default_params(eta: float = 0.5) -> PerceptionParams:
    """Channel reproducing ``k = 0.882, beta = 0.760`` at noise ``eta``."""
    return PerceptionParams.from_kbeta(REFERENCE_KBETA.k, REFERENCE_KBETA.beta, eta)


@dataclass(frozen=True)
class AgentProfile:
    kind: AgentKind = AgentKind.MISPERCEIVER
    params: PerceptionParams | None = None
    conservative_weight: float = 0.8
    sophistication: float = 0.0
    learning_rate: float = 0.0
    report_noise_sd: float = 0.0
    curiosity_bonus: float = 0.0
    mean_perception: bool = False

    def __post_init__(self):
        if self.kind is AgentKind.MISPERCEIVER and self.params is None:
            raise ValueError("a misperceiver needs PerceptionParams")
        if self.kind is AgentKind.CONSERVATIVE and not self.conservative_weight > 0:
            raise ValueError("conservative weight must be positive")
        if not 0.0 <= self.sophistication <= 1.0:
            raise ValueError("sophistication must lie in [0, 1]")
        if min(self.learning_rate, self.report_noise_sd, self.curiosity_bonus) < 0:
            raise ValueError("learning rate, report noise and curiosity must be nonnegative")


@dataclass
class PanelConfig:
    """Panel-wide settings; ``(lo, hi)`` pairs are uniform heterogeneity ranges.

    ``eta_scale`` multiplies the base channel noise per subject;
    ``report_noise_sd`` is the log-odds noise added to each report.
    """

    n_subjects: int = 500
    kind: AgentKind = AgentKind.MISPERCEIVER
    params: PerceptionParams = field(default_factory=default_params)
    conservative_weight: float = 0.8
    sophistication: tuple[float, float] = (0.0, 0.0)
    learning_rate: tuple[float, float] = (0.0, 0.0)
    report_noise_sd: tuple[float, float] = (0.15, 0.15)
    eta_scale: tuple[float, float] = (1.0, 1.0)
    curiosity_bonus: float = 0.0
    mean_perception: bool = False
    scale: float = DEFAULT_SCALE
    seed: int = 0

    def __post_init__(self):
        self.kind = AgentKind(self.kind)
        if isinstance(self.params, dict):
            self.params = PerceptionParams(**self.params)
        self.sophistication = tuple(self.sophistication)
        self.learning_rate = tuple(self.learning_rate)
        self.report_noise_sd = tuple(self.report_noise_sd)
        self.eta_scale = tuple(self.eta_scale)
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be at least 1")
        for name in ("sophistication", "learning_rate", "report_noise_sd", "eta_scale"):
            lo, hi = getattr(self, name)
            if hi < lo or lo < 0:
                raise ValueError(f"{name} range must satisfy 0 <= lo <= hi")
        if self.sophistication[1] > 1:
            raise ValueError("sophistication must stay within [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["sophistication"] = list(self.sophistication)
        d["learning_rate"] = list(self.learning_rate)
        d["report_noise_sd"] = list(self.report_noise_sd)
        d["eta_scale"] = list(self.eta_scale)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> PanelConfig:
        return cls(**d)


def effective_params(agent: AgentProfile, round_: int) -> PerceptionParams:
    if round_ < 1:
        raise ValueError("rounds start at 1")
    p = agent.params
    eta = p.eta * (1.0 - 0.5 * agent.sophistication) * math.exp(-agent.learning_rate * (round_ - 1))
    return p.with_eta(max(eta, 0.0))


def _perceived(S: float, agent: AgentProfile, params: PerceptionParams, g: np.random.Generator) -> float:
    if agent.mean_perception:
        return mean_perceived_strength(S, derive_kbeta(params))
    return float(sample_perception(S, params, g))


def _signed_perception(signed_llr: float, agent, params, g) -> float:
    if signed_llr == 0:
        return 0.0
    return math.copysign(_perceived(abs(signed_llr), agent, params, g), signed_llr)


def _latent_logodds(agent: AgentProfile, rec: TrialRecord, g: np.random.Generator) -> float:
    deck, obs = rec.deck, rec.observation
    suit = Suit.DIAMOND if obs.n_diamonds else Suit.SPADE
    if rec.block is Block.UNCERTAIN:
        bayes_post = bayes.mixture_posterior(0.5, deck, rec.deck_alt, suit)
        if agent.kind is AgentKind.BAYESIAN:
            return logit(bayes_post)
        if agent.kind is AgentKind.CONSERVATIVE:
            return agent.conservative_weight * logit(bayes_post)
        params = effective_params(agent, rec.round)
        # perceive each candidate strength separately, then average posteriors
        lo = _signed_perception(bayes.llr(deck, suit), agent, params, g)
        hi = _signed_perception(bayes.llr(rec.deck_alt, suit), agent, params, g)
        return logit(0.5 * logistic(lo) + 0.5 * logistic(hi))
    total = bayes.total_llr(deck, obs)
    if agent.kind is AgentKind.BAYESIAN:
        return total
    if agent.kind is AgentKind.CONSERVATIVE:
        return agent.conservative_weight * total
    params = effective_params(agent, rec.round)
    out = 0.0
    # one perception draw per distinct strength, applied to its net card count
    if deck.symmetric:
        net = obs.n_diamonds - obs.n_spades
        if net:
            out = net * _signed_perception(bayes.llr(deck, Suit.DIAMOND), agent, params, g)
    else:
        for count, s in ((obs.n_diamonds, Suit.DIAMOND), (obs.n_spades, Suit.SPADE)):
            if count:
                out += count * _signed_perception(bayes.llr(deck, s), agent, params, g)
    return out


def respond_inference(agent: AgentProfile, rec: TrialRecord, rng) -> int:
    """Integer percent report of P(Green) for a trial with drawn cards."""
    if rec.observation is None:
        raise ValueError("inference needs an observed draw")
    g = rng.generator() if isinstance(rng, Rng) else rng
    if rec.deck.uninformative and rec.block is not Block.UNCERTAIN:
        if g.random() < UNINFORMATIVE_EXACT_RATE:
            return 50
        return 50 + UNINFORMATIVE_OFFSETS[g.integers(len(UNINFORMATIVE_OFFSETS))]
    latent = _latent_logodds(agent, rec, g)
    if agent.report_noise_sd > 0:
        latent += agent.report_noise_sd * g.standard_normal()
    pct = int(math.floor(100.0 * float(logistic(latent)) + 0.5))
    return min(max(pct, 0), 100)


def agent_belief_map(agent: AgentProfile, round_: int):
    if agent.kind is AgentKind.BAYESIAN:
        return belief_map_for(None)
    if agent.kind is AgentKind.CONSERVATIVE:
        w = agent.conservative_weight
        return lambda b: float(logistic(w * logit(b))) if b != 0.5 else 0.5
    return belief_map_for(derive_kbeta(effective_params(agent, round_)))


def respond_demand(agent: AgentProfile, rec: TrialRecord, rng=None, scale: float = DEFAULT_SCALE) -> int:
    """Cards bought on a Demand trial; deterministic given the agent and round."""
    if rec.block is not Block.DEMAND:
        raise ValueError("respond_demand needs a Demand trial")
    p = max(rec.deck.p1, rec.deck.p2)
    prob = DemandProblem(p, dict(DEFAULT_COSTS), scale)
    return optimal_purchase(prob, agent_belief_map(agent, rec.round), agent.curiosity_bonus)


def make_profile(config: PanelConfig, subject_id: str) -> AgentProfile:
    g = Rng(config.seed).child("profile", subject_id).generator()
    draws = g.random(4)

    def pick(rng_pair, u):
        lo, hi = rng_pair
        return float(lo + (hi - lo) * u)

    return AgentProfile(
        kind=config.kind,
        params=config.params.with_eta(config.params.eta * pick(config.eta_scale, draws[3])),
        conservative_weight=config.conservative_weight,
        sophistication=pick(config.sophistication, draws[0]),
        learning_rate=pick(config.learning_rate, draws[1]),
        report_noise_sd=pick(config.report_noise_sd, draws[2]),
        curiosity_bonus=config.curiosity_bonus,
        mean_perception=config.mean_perception,
    )


def group_by_subject(records: Iterable[TrialRecord]) -> dict[str, list[TrialRecord]]:
    out: dict[str, list[TrialRecord]] = {}
    for r in records:
        out.setdefault(r.subject_id, []).append(r)
    return out


def run_panel(config: PanelConfig, designs: Sequence[TrialRecord],
              profiles: dict[str, AgentProfile] | None = None) -> list[TrialRecord]:
    """Fill every design record with a simulated response.

    Subjects appear in first-appearance order of ``designs``. Each trial
    draws from its own ``(seed, subject, round)`` substream.
    """
    by_subject = group_by_subject(designs)
    if len(by_subject) != config.n_subjects:
        raise PanelMismatch(f"panel has {config.n_subjects} subjects, designs have {len(by_subject)}")
    root = Rng(config.seed).child("respond")
    out: list[TrialRecord] = []
    for sid, recs in by_subject.items():
        agent = profiles[sid] if profiles is not None else make_profile(config, sid)
        for rec in recs:
            if rec.block is Block.DEMAND:
                out.append(replace(rec, purchased=respond_demand(agent, rec, scale=config.scale)))
            else:
                g = root.child(sid, rec.round).generator()
                out.append(replace(rec, report_pct=respond_inference(agent, rec, g)))
    return out


def panel_profiles(config: PanelConfig, subject_ids: Iterable[str]) -> dict[str, AgentProfile]:
    return {sid: make_profile(config, sid) for sid in subject_ids}
