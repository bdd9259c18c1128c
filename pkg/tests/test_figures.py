import numpy as np
import pandas as pd
import pytest

from misinference import figures
from misinference.demand import DEMAND_PS
from misinference.estimation import cluster_bootstrap


@pytest.fixture(scope="module")
def tables(small_panel):
    soph = {f"s{i:04d}": float(i % 5) for i in range(1, 41)}
    return figures.all_figures(small_panel, soph, B=200, seed=0)


def test_file_names_and_columns(tables):
    assert tuple(tables) == figures.FIGURE_FILES
    for df in tables.values():
        assert list(df.columns) == figures.COLUMNS
        assert ((df["ci_lo"] <= df["mean"] + 1e-12) & (df["mean"] <= df["ci_hi"] + 1e-12)).all()


def test_series(tables):
    assert set(tables["fig2_weights.csv"]["series"]) == {"subjects", "bayes", "model", "fit"}
    assert set(tables["fig4_multiple.csv"]["series"]) == {"one", "2-1", "3-0"}
    assert set(tables["fig5_demand.csv"]["series"]) == {"subjects", "optimal", "model"}
    het = set(tables["fig3_heterogeneity.csv"]["series"])
    assert {f"{n}:{b}" for n in ("sophistication", "round", "variance") for b in ("weak", "strong")} == het


def test_weights_axis_is_posterior(tables):
    df = tables["fig2_weights.csv"]
    assert df["x"].between(0.5, 1).all()
    assert np.allclose(df.loc[df["series"] == "bayes", "mean"], 1.0)


def test_demand_optima(tables):
    df = tables["fig5_demand.csv"]
    opt = df[df["series"] == "optimal"]
    assert list(opt["x"]) == list(DEMAND_PS) and list(opt["mean"]) == [0, 0, 0, 2, 3]


def test_heterogeneity_groups(tables):
    df = tables["fig3_heterogeneity.csv"]
    assert set(df.loc[df["series"] == "sophistication:weak", "x"]) == {0.0, 1.0}
    assert set(df.loc[df["series"] == "variance:strong", "x"]) == {1.0, 2.0, 3.0, 4.0}
    assert set(df.loc[df["series"] == "round:weak", "x"]) <= set(range(1, 13))


def test_without_sophistication(small_panel):
    het = figures.all_figures(small_panel, None, B=0)["fig3_heterogeneity.csv"]
    assert not het["series"].str.startswith("sophistication").any()


def test_deterministic_bytes(small_panel, tmp_path):
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        figures.write_figures(figures.all_figures(small_panel, None, B=200, seed=5), tmp_path / d)
    for name in figures.FIGURE_FILES:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_clustered_means_matches_resampling():
    g = np.random.default_rng(1)
    clusters = np.repeat(np.arange(50), 6)
    values = g.normal(size=300) + g.normal(size=50)[clusters]
    out = figures.clustered_means(values, np.zeros(300), clusters, B=4000, seed=0)
    ref = cluster_bootstrap(pd.DataFrame({"cluster": clusters, "v": values}), lambda d: d["v"].mean(),
                            B=4000, seed=0)
    assert out["mean"].iloc[0] == pytest.approx(values.mean())
    assert out["ci_lo"].iloc[0] == pytest.approx(ref.ci_lo[0], abs=0.03)
    assert out["ci_hi"].iloc[0] == pytest.approx(ref.ci_hi[0], abs=0.03)
