"""Recovering inference weights and the power-law misperception model from trials.

Every estimator works on a trial table built by :func:`records_to_frame`,
one row per informative inference trial, with subjects as clusters.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from collections.abc import Callable, Iterable, Mapping
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from . import bayes
from .core import (
    Block,
    MisinferenceError,
    Suit,
    TrialRecord,
    UninformativeSignal,
    clamp_report,
    logistic,
    logit,
)
from .design import ONE_SIGNAL_STRENGTHS

logger = logging.getLogger(__name__)

BETA_MAX = 0.999
BETA_MIN = 1e-6
BETA_STARTS = (0.3, 0.5, 0.7, 0.9)
WEAK = (0.5, 0.6)
STRONG = (0.7, 1.0)


class FitFailed(MisinferenceError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class NoVariation(MisinferenceError):
    pass


# --------------------------------------------------------------------------
# trial table

def bayes_logodds(rec: TrialRecord) -> float:
    """Bayesian posterior log odds of Green for an inference trial (prior 1/2)."""
    if rec.block is Block.UNCERTAIN:
        suit = Suit.DIAMOND if rec.observation.n_diamonds else Suit.SPADE
        return logit(bayes.mixture_posterior(0.5, rec.deck, rec.deck_alt, suit))
    return bayes.total_llr(rec.deck, rec.observation)


def empirical_weight(rec: TrialRecord) -> float:
    """Reported log-odds movement divided by the Bayesian one."""
    if rec.report_pct is None or rec.observation is None:
        raise ValueError("weight needs an inference trial with a report")
    b = bayes_logodds(rec)
    if b == 0:
        raise UninformativeSignal("zero-strength trial")
    return logit(clamp_report(rec.report_pct)) / b


def _pattern(rec: TrialRecord) -> str:
    if rec.block is not Block.THREE_SYMMETRIC:
        return "1"
    hi = max(rec.observation.n_diamonds, rec.observation.n_spades)
    return "3-0" if hi == 3 else "2-1"


def nearest_grid(values, grid=ONE_SIGNAL_STRENGTHS) -> np.ndarray:
    """Snap strengths to the closest grid point on a log scale."""
    v = np.log(np.asarray(values, dtype=float))[:, None]
    g = np.log(np.asarray(grid, dtype=float))[None, :]
    return np.asarray(grid)[np.argmin(np.abs(v - g), axis=1)]


def records_to_frame(records: Iterable[TrialRecord]) -> pd.DataFrame:
    """Tabulate informative, reported inference trials.

    Columns: ``subject_id, cluster, round, block, n_total, pattern,
    card_strength, bayes_logodds, bayes_post, report_logodds, weight,
    strength_bin``. Zero-strength trials are dropped (logged at INFO).
    """
    rows = []
    dropped = 0
    for r in records:
        if r.report_pct is None or r.observation is None:
            continue
        b = bayes_logodds(r)
        if b == 0 or not math.isfinite(b):
            dropped += 1
            continue
        y = logit(clamp_report(r.report_pct))
        n_cards = r.observation.n_cards
        net = abs(r.observation.n_diamonds - r.observation.n_spades)
        card = abs(b) / net if r.block is Block.THREE_SYMMETRIC else abs(b)
        rows.append((r.subject_id, r.round, r.block.value, r.deck.n_total, _pattern(r),
                     card, b, y, n_cards))
    if dropped:
        logger.info("excluded %d zero-strength trials", dropped)
    df = pd.DataFrame(rows, columns=["subject_id", "round", "block", "n_total", "pattern",
                                     "card_strength", "bayes_logodds", "report_logodds", "n_cards"])
    df["bayes_post"] = logistic(np.abs(df["bayes_logodds"].to_numpy()))
    df["weight"] = df["report_logodds"] / df["bayes_logodds"]
    df["strength"] = np.abs(df["bayes_logodds"])
    df["strength_bin"] = nearest_grid(df["strength"]) if len(df) else []
    df["cluster"] = pd.factorize(df["subject_id"])[0]
    return df


def _select(frame: pd.DataFrame, blocks) -> pd.DataFrame:
    if blocks is None:
        return frame
    names = {Block(b).value for b in blocks}
    return frame[frame["block"].isin(names)]


# --------------------------------------------------------------------------
# cluster bootstrap

@dataclass
class BootstrapResult:
    estimate: np.ndarray
    se: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    n_replicates: int
    n_dropped: int


def cluster_bootstrap(frame: pd.DataFrame, statistic: Callable[[pd.DataFrame], object],
                      B: int = 1000, seed: int = 0, cluster: str = "cluster") -> BootstrapResult:
    """Resample whole clusters with replacement ``B`` times.

    Duplicated clusters are relabelled so statistics that use the cluster
    column see them as distinct. Replicates whose statistic raises are
    dropped and counted.
    """
    if B < 200:
        raise ValueError("cluster bootstrap needs B >= 200")
    codes, uniq = pd.factorize(frame[cluster])
    G = len(uniq)
    if G < 2:
        raise ValueError("cluster bootstrap needs at least 2 clusters")
    order = np.argsort(codes, kind="stable")
    bounds = np.searchsorted(codes[order], np.arange(G + 1))
    members = [order[bounds[i]:bounds[i + 1]] for i in range(G)]
    g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xB007,)))
    estimate = np.atleast_1d(np.asarray(statistic(frame), dtype=float))
    reps = []
    dropped = 0
    for _ in range(B):
        pick = g.integers(G, size=G)
        idx = np.concatenate([members[i] for i in pick])
        labels = np.repeat(np.arange(G), [len(members[i]) for i in pick])
        sample = frame.iloc[idx].copy()
        sample[cluster] = labels
        try:
            val = np.atleast_1d(np.asarray(statistic(sample), dtype=float))
        except (MisinferenceError, ValueError, ZeroDivisionError, FloatingPointError,
                np.linalg.LinAlgError):
            dropped += 1
            continue
        reps.append(val)
    if not reps:
        raise FitFailed("every bootstrap replicate failed")
    reps = np.vstack(reps)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        se = np.nanstd(reps, axis=0, ddof=1)
        lo, hi = np.nanpercentile(reps, [2.5, 97.5], axis=0)
    return BootstrapResult(estimate, se, lo, hi, len(reps), dropped)


# --------------------------------------------------------------------------
# binned weights

def bin_weights(frame: pd.DataFrame, grid=ONE_SIGNAL_STRENGTHS, B: int = 1000, seed: int = 0,
                blocks=(Block.ONE_SYMMETRIC,), by: str = "strength_bin") -> pd.DataFrame:
    """Mean weight per strength bin with subject-clustered bootstrap 95% CIs.

    Bins with no trials are omitted with a warning.
    """
    df = _select(frame, blocks)
    present = [x for x in grid if np.any(np.isclose(df[by], x))]
    missing = [x for x in grid if x not in present]
    if missing:
        warnings.warn(f"empty bins omitted: {missing}", stacklevel=2)
    if not present:
        return pd.DataFrame(columns=["bin", "mean", "ci_lo", "ci_hi", "n"])
    present = np.asarray(present, dtype=float)
    bin_idx = np.searchsorted(present, df[by].to_numpy())
    bin_idx = np.clip(bin_idx, 0, len(present) - 1)
    ok = np.isclose(present[bin_idx], df[by].to_numpy())
    df = df[ok]
    bin_idx = bin_idx[ok]
    codes = df["cluster"].to_numpy()
    _, codes = np.unique(codes, return_inverse=True)
    G = codes.max() + 1
    sums = np.zeros((G, len(present)))
    counts = np.zeros((G, len(present)))
    np.add.at(sums, (codes, bin_idx), df["weight"].to_numpy())
    np.add.at(counts, (codes, bin_idx), 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = sums.sum(0) / counts.sum(0)
        if G >= 2 and B > 0:
            g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xB1,)))
            mult = g.multinomial(G, np.full(G, 1.0 / G), size=B).astype(float)
            reps = (mult @ sums) / (mult @ counts)
            lo, hi = np.nanpercentile(reps, [2.5, 97.5], axis=0)
        else:
            lo = hi = mean
    return pd.DataFrame({"bin": present, "mean": mean, "ci_lo": lo, "ci_hi": hi,
                         "n": counts.sum(0).astype(int)})


# --------------------------------------------------------------------------
# nonlinear least squares power fit

@dataclass
class FitResult:
    beta: float
    p_star: float
    k: float
    se_beta: float
    se_p_star: float
    rss: float
    n_trials: int
    n_clusters: int
    model: str = "Power"
    se_k: float = float("nan")
    boundary: bool = False
    se_method: str = "cluster-sandwich"
    trace: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> FitResult:
        return cls(**d)


def p_star_from(k: float, beta: float) -> float:
    if beta >= 1:
        return float("nan")
    return float(logistic(math.exp(math.log(k) / (1.0 - beta))))


def k_from(p_star: float, beta: float) -> float:
    return float(logit(p_star) ** (1.0 - beta))


def _power_model(theta, S):
    k, beta = theta
    base = S ** (beta - 1.0)
    pred = k * base
    J = np.column_stack([base, pred * np.log(S)])
    return pred, J


def _best_k(beta, S, w):
    x = S ** (beta - 1.0)
    return max(float(x @ w / (x @ x)), 1e-12)


def _gauss_newton(S, w, beta0, tol=1e-10, max_iter=200):
    """Levenberg-damped Gauss-Newton on ``(k, beta)`` with beta boxed to (0, 0.999]."""
    theta = np.array([_best_k(beta0, S, w), beta0])
    pred, J = _power_model(theta, S)
    r = w - pred
    rss = float(r @ r)
    lam = 1e-3
    trace = []
    for it in range(max_iter):
        grad = J.T @ r
        at_upper = theta[1] >= BETA_MAX and grad[1] > 0
        at_lower = theta[1] <= BETA_MIN and grad[1] < 0
        proj = grad.copy()
        if at_upper or at_lower:
            proj[1] = 0.0
        noise_floor = 1e-12 * float(np.abs(J).T @ np.abs(r) @ np.ones(2))
        gnorm = float(np.linalg.norm(proj))
        if gnorm < tol or gnorm < noise_floor:
            return theta, rss, True, it, trace
        A = J.T @ J
        improved = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.diag(np.diag(A)), grad)
            if at_upper or at_lower:
                step[1] = 0.0
            cand = theta + step
            cand[0] = max(cand[0], 1e-12)
            cand[1] = min(max(cand[1], BETA_MIN), BETA_MAX)
            cpred, cJ = _power_model(cand, S)
            cr = w - cpred
            crss = float(cr @ cr)
            if crss <= rss:
                small = np.all(np.abs(cand - theta) <= 1e-15 * (1 + np.abs(theta)))
                theta, pred, J, r, rss = cand, cpred, cJ, cr, crss
                lam = max(lam / 10, 1e-12)
                improved = True
                if small:
                    return theta, rss, True, it, trace
                break
            lam *= 10
        trace.append((it, float(theta[0]), float(theta[1]), rss, gnorm))
        if not improved:
            # no descent direction left at machine precision
            return theta, rss, True, it, trace
    return theta, rss, False, max_iter, trace


def _sandwich(J, r, clusters):
    codes = pd.factorize(clusters)[0]
    G = codes.max() + 1
    bread = np.linalg.pinv(J.T @ J)
    scores = np.zeros((G, J.shape[1]))
    np.add.at(scores, codes, J * r[:, None])
    meat = scores.T @ scores
    adj = G / (G - 1) if G > 1 else float("nan")
    return adj * bread @ meat @ bread


def fit_power_arrays(S, w, clusters=None, starts=BETA_STARTS) -> FitResult:
    """Fit ``w = k * S**-(1 - beta)`` by nonlinear least squares."""
    S = np.asarray(S, dtype=float)
    w = np.asarray(w, dtype=float)
    if clusters is None:
        clusters = np.arange(len(S))
    clusters = np.asarray(clusters)
    if len(np.unique(S)) < 2:
        raise FitFailed("need at least two distinct strengths")
    if np.any(S <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("strengths must be positive and weights finite")
    best = None
    trace = []
    for b0 in starts:
        theta, rss, ok, iters, tr = _gauss_newton(S, w, b0)
        trace.append({"beta0": b0, "k": float(theta[0]), "beta": float(theta[1]), "rss": rss,
                      "converged": ok, "iterations": iters})
        if ok and (best is None or rss < best[1]):
            best = (theta, rss)
    if best is None:
        raise FitFailed("no start converged", trace)
    (k, beta), rss = best
    boundary = beta >= BETA_MAX - 1e-12 or beta <= BETA_MIN + 1e-12
    pred, J = _power_model(best[0], S)
    G = len(np.unique(clusters))
    se_k = se_beta = se_p = float("nan")
    p_star = p_star_from(k, beta)
    if G >= 2:
        V = _sandwich(J, w - pred, clusters)
        se_k, se_beta = float(np.sqrt(max(V[0, 0], 0))), float(np.sqrt(max(V[1, 1], 0)))
        if not boundary:
            T = math.exp(math.log(k) / (1 - beta))
            grad = p_star * (1 - p_star) * np.array([T / (k * (1 - beta)),
                                                     T * math.log(k) / (1 - beta) ** 2])
            se_p = float(np.sqrt(max(grad @ V @ grad, 0)))
    if boundary:
        logger.warning("boundary solution: beta=%.6f", beta)
    return FitResult(beta=float(beta), p_star=p_star, k=float(k), se_beta=se_beta, se_p_star=se_p,
                     rss=rss, n_trials=len(S), n_clusters=G, se_k=se_k, boundary=bool(boundary),
                     trace=trace)


def fit_power(frame: pd.DataFrame, blocks=(Block.ONE_SYMMETRIC,), binned: bool = False,
              bootstrap: int = 0, seed: int = 0) -> FitResult:
    """Trial-level NLS power fit; ``binned`` fits per-strength-bin mean weights instead."""
    df = _select(frame, blocks)
    if binned:
        grp = df.groupby("strength_bin")["weight"].mean()
        res = fit_power_arrays(grp.index.to_numpy(), grp.to_numpy())
        res.n_trials, res.n_clusters = len(df), df["cluster"].nunique()
        res.se_beta = res.se_p_star = res.se_k = float("nan")
        res.se_method = "none"
    else:
        res = fit_power_arrays(df["strength"].to_numpy(), df["weight"].to_numpy(),
                               df["cluster"].to_numpy())
    if bootstrap:
        def stat(sample):
            f = fit_power(sample, blocks=None, binned=binned)
            return [f.beta, f.p_star, f.k]

        boot = cluster_bootstrap(df, stat, B=bootstrap, seed=seed)
        res.se_beta, res.se_p_star, res.se_k = (float(x) for x in boot.se)
        res.se_method = f"cluster-bootstrap(B={boot.n_replicates}, dropped={boot.n_dropped})"
    return res


def fit_linear(frame: pd.DataFrame, blocks=(Block.ONE_SYMMETRIC,)) -> tuple[float, float]:
    """Constant-weight model: returns ``(c, rss)``."""
    w = _select(frame, blocks)["weight"].to_numpy()
    c = float(w.mean())
    return c, float(((w - c) ** 2).sum())


def compare_models(frame: pd.DataFrame, blocks=(Block.ONE_SYMMETRIC,)) -> dict:
    """Power versus constant weighting by residual sum of squares.

    A power fit pinned at the beta bound is only approximating a constant,
    so the constant model is preferred in that case.
    """
    power = fit_power(frame, blocks)
    c, rss_lin = fit_linear(frame, blocks)
    preferred = "Linear" if (power.boundary or rss_lin <= power.rss) else "Power"
    return {"rss_power": power.rss, "rss_linear": rss_lin, "preferred": preferred,
            "power": power, "linear_weight": c}


def fit_by_deck_size(frame: pd.DataFrame, blocks=(Block.ONE_SYMMETRIC,)) -> dict[int, FitResult]:
    df = _select(frame, blocks)
    return {int(n): fit_power(sub, blocks=None) for n, sub in df.groupby("n_total")}


# --------------------------------------------------------------------------
# Grether-style regression

def grether_regression(frame: pd.DataFrame, blocks=(Block.ONE_SYMMETRIC,)) -> dict:
    """OLS of reported log odds on Bayesian log odds, no intercept, clustered SE."""
    df = _select(frame, blocks)
    x = df["bayes_logodds"].to_numpy()
    y = df["report_logodds"].to_numpy()
    sxx = float(x @ x)
    if sxx == 0 or len(x) == 0:
        raise NoVariation("no variation in the log-likelihood ratio")
    slope = float(x @ y) / sxx
    e = y - slope * x
    V = _sandwich(x[:, None], e, df["cluster"].to_numpy())
    return {"slope": slope, "se": float(np.sqrt(V[0, 0])), "n_trials": len(x),
            "n_clusters": int(df["cluster"].nunique())}


# --------------------------------------------------------------------------
# heterogeneity contrasts

def in_bin(frame: pd.DataFrame, interval) -> pd.Series:
    lo, hi = interval
    return (frame["bayes_post"] > lo) & (frame["bayes_post"] < hi)


def _fe_slope(df: pd.DataFrame, cov: str, cells, controls):
    """Weight-on-covariate slope with cell fixed effects and linear controls."""
    def demean(col):
        return df[col] - df.groupby(cells)[col].transform("mean")

    y = demean("weight").to_numpy()
    x = demean(cov).to_numpy()
    if controls:
        Z = np.column_stack([demean(c).to_numpy() for c in controls])
        coef_y, *_ = np.linalg.lstsq(Z, y, rcond=None)
        coef_x, *_ = np.linalg.lstsq(Z, x, rcond=None)
        y = y - Z @ coef_y
        x = x - Z @ coef_x
    sxx = float(x @ x)
    if sxx <= 1e-12:
        raise NoVariation(f"{cov} does not vary within cells")
    slope = float(x @ y) / sxx
    return slope, x, y - slope * x


@dataclass
class Contrast:
    bin: str
    estimate: float
    se: float
    ci_lo: float
    ci_hi: float
    n_trials: int


def weight_contrast(frame: pd.DataFrame, covariate: str | Mapping[str, float],
                    bins: Mapping[str, tuple[float, float]] | None = None,
                    controls: Iterable[str] = (), cells=("strength_bin", "n_total"),
                    B: int = 500, seed: int = 0, blocks=(Block.ONE_SYMMETRIC,)) -> dict[str, Contrast]:
    """Change in mean weight per unit of a covariate, within weak and strong bins.

    ``covariate`` is a frame column or a subject -> value mapping. For a
    0/1 split the estimate is the high-minus-low weight difference.
    Strength and deck size enter as cell fixed effects (within-cell
    demeaning); ``controls`` are extra numeric columns partialled out.
    """
    df = _select(frame, blocks).copy()
    if isinstance(covariate, str):
        cov = covariate
    else:
        cov = "_covariate"
        df[cov] = df["subject_id"].map(covariate)
        df = df[df[cov].notna()]
    bins = dict(bins or {"weak": WEAK, "strong": STRONG})
    controls = list(controls)
    cells = list(cells)
    out = {}
    for name, interval in bins.items():
        sub = df[in_bin(df, interval)]
        if sub.empty:
            warnings.warn(f"empty cell for bin {name!r}; omitted", stacklevel=2)
            continue
        try:
            slope, x, e = _fe_slope(sub, cov, cells, controls)
        except NoVariation:
            warnings.warn(f"no covariate variation in bin {name!r}; omitted", stacklevel=2)
            continue
        codes = pd.factorize(sub["cluster"])[0]
        G = codes.max() + 1
        sc = np.zeros(G)
        np.add.at(sc, codes, x * e)
        se = math.sqrt(G / (G - 1) * float(sc @ sc)) / float(x @ x) if G > 1 else float("nan")
        lo = hi = float("nan")
        if B:
            boot = cluster_bootstrap(sub, lambda s: _fe_slope(s, cov, cells, controls)[0],
                                     B=B, seed=seed)
            lo, hi = float(boot.ci_lo[0]), float(boot.ci_hi[0])
        out[name] = Contrast(name, slope, se, lo, hi, len(sub))
    return out


def subject_weight_variance(frame: pd.DataFrame, blocks=(Block.ONE_SYMMETRIC,)) -> pd.Series:
    """Per-subject variance of raw empirical weights."""
    return _select(frame, blocks).groupby("subject_id")["weight"].var(ddof=1)


def subject_log_weight_variance(frame: pd.DataFrame, blocks=None) -> pd.Series:
    """Per-subject variance of log weights around the panel's per-cell median.

    Cells are (block, card pattern, strength bin). Log weights remove the
    mechanical link between a weight's level and its spread, so the
    statistic tracks perception noise rather than how strongly a subject
    happened to react. Nonpositive weights are skipped.
    """
    df = _select(frame, blocks)
    df = df[df["weight"] > 0]
    lw = np.log(df["weight"])
    resid = lw - lw.groupby([df["block"], df["pattern"], df["strength_bin"]]).transform("median")
    return resid.groupby(df["subject_id"]).var(ddof=1)


def quartiles(values: pd.Series) -> pd.Series:
    """Quartile index 1-4 (1 = smallest value), ties broken by order."""
    v = values.dropna()
    ranks = v.rank(method="first")
    return pd.Series(np.ceil(4 * ranks / len(v)).astype(int), index=v.index)


def variance_quartiles(frame: pd.DataFrame, blocks=None) -> pd.Series:
    """Quartile (1 = least variable) of each subject's log-weight variance."""
    return quartiles(subject_log_weight_variance(frame, blocks))
