import json
import math

import numpy as np
import pytest

from gffextremes import constants
from gffextremes.harness import checks
from gffextremes.harness.experiment import (
    ConfigError,
    ExperimentConfig,
    TopKInsufficient,
    formula_center,
    geometry_experiment,
    geometry_threshold,
    make_field,
    run_experiment,
)


def cfg(**kw):
    base = {"kind": "gff", "N": "16", "replicates": "20", "seed": "3"}
    base.update({k: str(v) for k, v in kw.items()})
    return ExperimentConfig.from_mapping(base)


def test_parse_and_roundtrip():
    text = """
    # comment
    kind=mbrw
    N=16,32
    replicates=5   # trailing comment
    statistics=max,gap,near_max
    near_lambda=1,2.5
    levels=0:n-1
    """
    c = ExperimentConfig.parse(text)
    assert c.N == [16, 32] and c.near_lambda == [1.0, 2.5] and c.level_range(32) == (0, 4)
    assert ExperimentConfig.parse(c.to_text()) == c


@pytest.mark.parametrize(
    "bad",
    [
        {"replicates": "0"},
        {"statistics": "max,nonsense"},
        {"statistics": "near_max"},
        {"statistics": "geometry", "geometry_r": "2"},
        {"kind": "ising"},
        {"kind": "mbrw", "N": "12"},
        {"statistics": "pair_max", "pair_r": "5"},
        {"centering": "median"},
        {"foo": "1"},
        {"kind": "mbrw", "statistics": "zeta"},
        {"tail_max": "polyexp"},
    ],
)
def test_validation_errors(bad):
    with pytest.raises(ConfigError):
        cfg(**bad)


def test_parse_rejects_garbage_line():
    with pytest.raises(ConfigError):
        ExperimentConfig.parse("kind gff")


def test_one_row_per_N():
    r = run_experiment(cfg(N="8,16", replicates=1))
    assert [row["N"] for row in r.rows] == [8, 16]
    assert r.summary["schema"] == "1"
    assert r.csv_text().splitlines()[0].startswith("N,replicate,max,argmax_x,argmax_y,gap")


def test_rows_match_direct_sampling():
    c = cfg(replicates=3)
    r = run_experiment(c)
    for row in r.rows:
        a = make_field(c, row["N"], row["replicate"]).values
        assert row["max"] == a.max()


def test_csv_deterministic_across_workers(monkeypatch, tmp_path):
    kw = dict(N="16,32", replicates=12, statistics="max,gap,near_max,top_m,pair_max", near_lambda="0.5,1",
              top_m="1,3", pair_r="2", second_pass="resample")
    a = run_experiment(cfg(**kw, csv=tmp_path / "a.csv")).csv_text()
    monkeypatch.setenv("GFFX_WORKERS", "2")
    b = run_experiment(cfg(**kw, csv=tmp_path / "b.csv")).csv_text()
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_two_pass_topk_equals_full_field():
    kw = dict(N="32", replicates=15, statistics="max,gap,near_max,geometry", geometry_r="3", geometry_c="0.5")
    fast = run_experiment(cfg(**kw, near_lambda="0.25,0.5", top_k=1024))  # top-k covers the whole field
    slow = run_experiment(cfg(**kw, near_lambda="0.25,0.5", top_k=2, second_pass="resample"))
    assert fast.csv_text() == slow.csv_text()
    with pytest.raises(TopKInsufficient):
        run_experiment(cfg(**kw, near_lambda="3", top_k=4))


def test_formula_centering_counts():
    r = run_experiment(cfg(N="16", replicates=5, statistics="max,near_max", near_lambda="1", centering="formula"))
    c = constants.m_N(16)
    for row in r.rows:
        a = make_field(r.config, 16, row["replicate"]).values
        assert row["A_lam1"] == int(np.sum(a >= c - 1))


def test_summary_contents(tmp_path):
    out = tmp_path / "s.json"
    r = run_experiment(cfg(N="16,32,64", replicates=30, gap_delta="0.1,0.5", tail_gap="gaussian",
                           tail_gap_lambda="0.25,0.5", json=out))
    s = json.loads(out.read_text())
    assert s["schema"] == "1" and set(s["by_N"]) == {"16", "32", "64"}
    g = s["by_N"]["32"]
    assert g["replicates"] == 30 and g["max"]["se"] > 0
    assert g["gap_cdf"]["0.1"]["p"] <= g["gap_cdf"]["0.5"]["p"]
    assert "gap/gaussian" in g["tails"]
    assert "slope" in s["max_vs_logN"]


def test_geometry_trivial_cases():
    c = cfg(N="64", replicates=6, statistics="max", geometry_r="4,9", geometry_c="inf,0.5", top_k=8,
            second_pass="resample")
    rep = geometry_experiment(c)
    # r=9: r^2 > N, empty annulus
    assert np.all(rep.p[0, 1] == 0)
    # c=inf: threshold -inf, every vertex qualifies
    assert rep.p[0, 0, 0] == 1.0 and rep.threshold[0, 0, 0] == -math.inf
    assert rep.to_dict()["p"][0][0][0] == 1.0
    with pytest.raises(ConfigError):
        geometry_experiment(cfg(kind="mbrw", geometry_r="2", geometry_c="1"))


def test_geometry_threshold():
    assert geometry_threshold(5.0, 16, 1.0) == pytest.approx(5.0 - math.log(math.log(16)))
    assert geometry_threshold(5.0, 2, math.inf) == math.inf  # log log 2 < 0
    assert geometry_threshold(5.0, 1, 1.0) == math.inf


def test_formula_center_kinds():
    assert formula_center("gff", 64) == constants.m_N(64)
    assert formula_center("mbrw", 64) == constants.m_tilde(64)
    assert formula_center("brw", 64) == constants.t_n(6)


def test_brw_statistics_columns():
    r = run_experiment(cfg(kind="brw", N="16,32", replicates=4, statistics="max,brw", brw_x="0,1", brw_split_r="1,2",
                           levels="0:n-1", centering="formula"))
    assert {"xi_0", "xi_1", "split_r1", "split_r2"} <= set(r.columns)
    assert r.summary["by_N"]["16"]["brw"]["t_n"] == constants.t_n(4)


def test_recipes_load():
    for name in checks.RECIPES:
        c = checks.load_recipe(name)
        assert c.check == name and c.replicates >= 1
    with pytest.raises(KeyError):
        checks.load_recipe("thm9")


def test_trend_nonincreasing():
    ok, _ = checks.trend_nonincreasing([0.5, 0.4, 0.3], [0.01] * 3)
    assert ok
    ok, rises = checks.trend_nonincreasing([0.5, 0.51, 0.3], [0.01] * 3)
    assert ok and len(rises) == 1
    assert not checks.trend_nonincreasing([0.5, 0.6, 0.3], [0.01] * 3)[0]
    assert not checks.trend_nonincreasing([0.3, 0.31, 0.3, 0.31], [0.01] * 4)[0]


def test_near_max_envelope():
    env = checks.near_max_envelope([1, 2, 3], np.exp([0.0, 1.0, 2.1]))
    assert env["increasing"] and env["slope"] == pytest.approx(1.05) and env["halfwidth"] < 0.05


def test_xi_mean_exact_matches_simulation():
    from gffextremes.samplers import sample_brw

    n = 5
    counts = []
    for r in range(300):
        a = sample_brw(32, r, (0, n - 1)).values
        t = constants.t_n(n)
        counts.append(np.sum((a >= t - 3) & (a <= t - 2)))
    counts = np.array(counts)
    assert abs(counts.mean() - checks.xi_mean_exact(n, 2)) <= 4 * counts.std() / math.sqrt(counts.size)


def test_small_recipe_run_checks_reported():
    res, results = checks.run_recipe("mn-slope", {"replicates": 20, "N": "16,32,64"})
    assert len(results) == 1 and results[0].line().split()[0] in ("PASS", "FAIL")
