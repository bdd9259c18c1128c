"""Psychophysical misperception of signal strength.

An agent encodes the strength ``S`` of a signal as ``r ~ N(log S, eta^2)``
and holds a log-normal prior ``log S ~ N(mu0, sigma^2)`` over strengths.
The posterior-mean perception averages to ``e(S) = k * S**beta`` with

    beta = sigma^2 / (sigma^2 + eta^2)
    k    = exp(beta^2 eta^2 / 2) * sbar^(1 - beta),   sbar = exp(mu0 + sigma^2 / 2)

so a symmetric signal with Bayesian posterior ``p`` receives weight
``k * (logit p)^-(1-beta)`` relative to Bayes.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import UninformativeSignal, UninformativeWarning, logistic, logit


@dataclass(frozen=True)
class KBeta:
    k: float
    beta: float

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class BayesianLimit:
    """Noiseless channel: perceived strength equals true strength."""

    k: float = 1.0
    beta: float = 1.0


REFERENCE_KBETA = KBeta(0.882, 0.760)


@dataclass(frozen=True)
class PerceptionParams:
    mu0: float
    sigma: float
    eta: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @property
    def beta(self) -> float:
        s2 = self.sigma ** 2
        return s2 / (s2 + self.eta ** 2)

    @property
    def sbar(self) -> float:
        return math.exp(self.mu0 + self.sigma ** 2 / 2)

    @property
    def k(self) -> float:
        b = self.beta
        return math.exp(b * b * self.eta ** 2 / 2 + (1 - b) * (self.mu0 + self.sigma ** 2 / 2))

    @property
    def posterior_var(self) -> float:
        s2, e2 = self.sigma ** 2, self.eta ** 2
        return s2 * e2 / (s2 + e2)

    @classmethod
    def from_kbeta(cls, k: float, beta: float, eta: float) -> PerceptionParams:
        """Channel with noise ``eta`` whose mean perception is ``k * S**beta``."""
        if not (eta > 0 and 0 < beta < 1 and k > 0):
            raise ValueError("need eta > 0, 0 < beta < 1, k > 0")
        sigma = eta * math.sqrt(beta / (1 - beta))
        mu0 = (math.log(k) - beta * beta * eta * eta / 2) / (1 - beta) - sigma ** 2 / 2
        return cls(mu0, sigma, eta)

    def with_eta(self, eta: float) -> PerceptionParams:
        return PerceptionParams(self.mu0, self.sigma, eta)


def derive_kbeta(params: PerceptionParams) -> KBeta | BayesianLimit:
    if params.eta == 0:
        return BayesianLimit()
    return KBeta(params.k, params.beta)


def mean_perceived_strength(S: float, kb: KBeta | BayesianLimit) -> float:
    if S <= 0:
        raise UninformativeSignal("perceived strength of a null signal is undefined")
    return kb.k * S ** kb.beta


def weight(p: float, kb: KBeta | BayesianLimit) -> float:
    """Inference weight relative to Bayes for a symmetric signal with posterior ``p``.

    ``p < 1/2`` is folded onto its complement.
    """
    if p == 0.5:
        raise UninformativeSignal("weight is undefined for an uninformative signal")
    return kb.k * abs(logit(p)) ** (-(1.0 - kb.beta))


def misperceived_posterior(p: float, kb: KBeta | BayesianLimit) -> float:
    """Posterior formed by a misperceiving agent whose Bayesian posterior is ``p``.

    An uninformative ``p = 1/2`` returns 1/2 and emits :class:`UninformativeWarning`.
    """
    if p == 0.5:
        warnings.warn("uninformative signal; returning 1/2", UninformativeWarning, stacklevel=2)
        return 0.5
    s = logit(p)
    return logistic(math.copysign(kb.k * abs(s) ** kb.beta, s))


def misperceived_posteriors(p, kb: KBeta | BayesianLimit) -> np.ndarray:
    """Vectorised :func:`misperceived_posterior`; 1/2 maps to 1/2 silently."""
    p = np.asarray(p, dtype=float)
    s = np.log(p) - np.log1p(-p)
    return logistic(np.sign(s) * kb.k * np.abs(s) ** kb.beta)


def switching_point(kb: KBeta) -> float:
    """Bayesian posterior at which the weight crosses 1."""
    if kb.beta >= 1.0:
        raise ValueError("the Bayesian limit has no switching point")
    return logistic(kb.k ** (1.0 / (1.0 - kb.beta)))


def sample_perception(S, params: PerceptionParams, rng: np.random.Generator, size=None):
    """Draw perceived strengths ``E[S | r]`` for true strength ``S``.

    ``rng`` must be owned by the caller; nothing here is shared.
    """
    S_arr = np.asarray(S, dtype=float)
    if np.any(S_arr <= 0):
        raise UninformativeSignal("cannot perceive a zero-strength signal")
    if params.eta == 0:
        out = np.broadcast_to(S_arr, size if size is not None else S_arr.shape).copy()
        return float(out) if out.ndim == 0 else out
    b = params.beta
    r = np.log(S_arr) + params.eta * rng.standard_normal(size if size is not None else S_arr.shape)
    out = np.exp(b * r + (1 - b) * params.mu0 + params.posterior_var / 2)
    return float(out) if np.ndim(out) == 0 else out


def uncertain_separate(p_low: float, p_high: float, kb: KBeta | BayesianLimit) -> float:
    """Misperceive each candidate strength, then average the two posteriors."""
    return 0.5 * float(misperceived_posteriors(p_low, kb)) + 0.5 * float(misperceived_posteriors(p_high, kb))


def uncertain_combined(p_low: float, p_high: float, kb: KBeta | BayesianLimit) -> float:
    """Form the Bayesian mixture posterior, then misperceive it."""
    return float(misperceived_posteriors(0.5 * (p_low + p_high), kb))
