"""Figure data tables: one long CSV per figure with columns (x, mean, ci_lo, ci_hi, series).

Only the numbers are produced here; plotting is left to external tools.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from pathlib import Path

import numpy as np
import pandas as pd

from .core import Block, TrialRecord, logistic
from .demand import DEMAND_PS, DemandProblem, belief_map_for, optimal_purchase
from .estimation import (
    STRONG,
    WEAK,
    FitFailed,
    fit_power,
    in_bin,
    quartiles,
    records_to_frame,
    subject_log_weight_variance,
)
from .perception import REFERENCE_KBETA, KBeta

COLUMNS = ["x", "mean", "ci_lo", "ci_hi", "series"]
FIGURE_FILES = ("fig2_weights.csv", "fig3_heterogeneity.csv", "fig4_multiple.csv", "fig5_demand.csv")


def clustered_means(values, groups, clusters, B: int = 1000, seed: int = 0) -> pd.DataFrame:
    """Group means with percentile CIs from a subject-level bootstrap.

    Resampling whole clusters with replacement is the same as reweighting
    each cluster by a multinomial count, which is what this does.
    """
    values = np.asarray(values, dtype=float)
    gcodes, glabels = pd.factorize(pd.Series(groups), sort=True)
    ccodes, cl = pd.factorize(pd.Series(clusters))
    G, K = len(cl), len(glabels)
    sums = np.zeros((G, K))
    counts = np.zeros((G, K))
    np.add.at(sums, (ccodes, gcodes), values)
    np.add.at(counts, (ccodes, gcodes), 1.0)
    mean = sums.sum(0) / counts.sum(0)
    lo = hi = mean
    if G >= 2 and B > 0:
        g = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xF16,)))
        mult = g.multinomial(G, np.full(G, 1.0 / G), size=B).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            reps = (mult @ sums) / (mult @ counts)
        lo, hi = np.nanpercentile(reps, [2.5, 97.5], axis=0)
    return pd.DataFrame({"x": np.asarray(glabels, dtype=float), "mean": mean, "ci_lo": lo, "ci_hi": hi})


def _tag(df: pd.DataFrame, series: str) -> pd.DataFrame:
    return df.assign(series=series)[COLUMNS]


def _empty() -> pd.DataFrame:
    return pd.DataFrame(columns=COLUMNS)


def weights_figure(frame: pd.DataFrame, B: int = 1000, seed: int = 0) -> pd.DataFrame:
    """Mean one-signal weight by Bayesian posterior, plus the fitted and reference curves."""
    df = frame[frame["block"] == Block.ONE_SYMMETRIC.value]
    if df.empty:
        return _empty()
    x = logistic(df["strength_bin"].to_numpy())
    parts = [_tag(clustered_means(df["weight"], x, df["subject_id"], B, seed), "subjects")]
    bins = np.sort(df["strength_bin"].unique())
    xs = logistic(bins)
    curves = {"bayes": np.ones_like(bins),
              "model": REFERENCE_KBETA.k * bins ** (REFERENCE_KBETA.beta - 1)}
    try:
        fit = fit_power(frame)
        curves["fit"] = fit.k * bins ** (fit.beta - 1)
    except (FitFailed, ValueError):  # too few bins: skip the fitted curve only
        pass
    for name, y in curves.items():
        parts.append(pd.DataFrame({"x": xs, "mean": y, "ci_lo": y, "ci_hi": y, "series": name}))
    return pd.concat(parts, ignore_index=True)


def heterogeneity_figure(frame: pd.DataFrame, sophistication: Mapping[str, float] | None = None,
                         B: int = 1000, seed: int = 0, rounds=range(1, 13)) -> pd.DataFrame:
    """Weak/strong one-signal weights by sophistication, round and variance quartile.

    Sophistication is split at the median (x = 0 low, 1 high); rounds use
    the round number; variance quartiles run 1 (least variable) to 4.
    """
    df = frame[frame["block"] == Block.ONE_SYMMETRIC.value]
    splits: dict[str, pd.Series] = {}
    if sophistication:
        s = df["subject_id"].map(sophistication)
        med = float(np.median(list(sophistication.values())))
        splits["sophistication"] = (s > med).astype(float).where(s.notna())
    splits["round"] = df["round"].where(df["round"].isin(list(rounds)))
    q = quartiles(subject_log_weight_variance(frame))
    splits["variance"] = df["subject_id"].map(q)
    parts = []
    for name, key in splits.items():
        for label, interval in (("weak", WEAK), ("strong", STRONG)):
            m = in_bin(df, interval) & key.notna()
            if m.any():
                sub = df[m]
                parts.append(_tag(clustered_means(sub["weight"], key[m], sub["subject_id"], B, seed),
                                  f"{name}:{label}"))
    return pd.concat(parts, ignore_index=True) if parts else _empty()


def multiple_figure(frame: pd.DataFrame, B: int = 1000, seed: int = 0) -> pd.DataFrame:
    """Weight against Bayesian posterior for one signal, mixed (2-1) and aligned (3-0) triples."""
    parts = []
    one = frame[frame["block"] == Block.ONE_SYMMETRIC.value]
    three = frame[frame["block"] == Block.THREE_SYMMETRIC.value]
    for name, df in (("one", one), ("2-1", three[three["pattern"] == "2-1"]),
                     ("3-0", three[three["pattern"] == "3-0"])):
        if not df.empty:
            x = logistic(df["strength_bin"].to_numpy())
            parts.append(_tag(clustered_means(df["weight"], x, df["subject_id"], B, seed), name))
    return pd.concat(parts, ignore_index=True) if parts else _empty()


def demand_figure(records: Iterable[TrialRecord], B: int = 1000, seed: int = 0,
                  kb: KBeta = REFERENCE_KBETA) -> pd.DataFrame:
    """Mean cards purchased by signal share, with Bayesian and misperceiver optima."""
    rows = [(r.subject_id, round(max(r.deck.p1, r.deck.p2), 3), r.purchased)
            for r in records if r.block is Block.DEMAND and r.purchased is not None]
    parts = []
    if rows:
        df = pd.DataFrame(rows, columns=["subject_id", "p", "n"])
        parts.append(_tag(clustered_means(df["n"], df["p"], df["subject_id"], B, seed), "subjects"))
    ps = np.asarray(DEMAND_PS)
    for name, bmap in (("optimal", None), ("model", belief_map_for(kb))):
        y = np.array([optimal_purchase(DemandProblem(p), bmap) for p in ps], dtype=float)
        parts.append(pd.DataFrame({"x": ps, "mean": y, "ci_lo": y, "ci_hi": y, "series": name}))
    return pd.concat(parts, ignore_index=True)


def all_figures(records: list[TrialRecord], sophistication: Mapping[str, float] | None = None,
                B: int = 1000, seed: int = 0) -> dict[str, pd.DataFrame]:
    frame = records_to_frame(records)
    return {
        "fig2_weights.csv": weights_figure(frame, B, seed),
        "fig3_heterogeneity.csv": heterogeneity_figure(frame, sophistication, B, seed),
        "fig4_multiple.csv": multiple_figure(frame, B, seed),
        "fig5_demand.csv": demand_figure(records, B, seed),
    }


def write_figures(tables: Mapping[str, pd.DataFrame], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    paths = []
    for name, df in tables.items():
        path = out_dir / name
        df.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
        paths.append(path)
    return paths
