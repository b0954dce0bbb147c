import itertools
import math

import numpy as np
import pytest

from gffextremes.compare import (
    CovModel,
    FieldSpec,
    NotPSDError,
    PremiseError,
    check_sf_premise,
    check_slepian_premise,
    claim_inequality_check,
    field_cov_compare,
    field_covariance,
    mc_order_compare,
    pivoted_cholesky,
)
from gffextremes.constants import GFF_SCALE

I2 = np.eye(2)
R2 = np.array([[1.0, 0.5], [0.5, 1.0]])


def test_pivoted_cholesky_reconstructs():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 3))
    C = A @ A.T  # rank 3
    L = pivoted_cholesky(C)
    assert L.shape == (6, 3)
    assert np.allclose(L @ L.T, C, atol=1e-10)
    with pytest.raises(NotPSDError):
        pivoted_cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_covmodel_validation():
    with pytest.raises(ValueError):
        CovModel(np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(NotPSDError):
        CovModel(np.array([[-1.0]]))
    assert CovModel(R2).increments()[0, 1] == pytest.approx(1.0)


def test_sf_examples():
    r = check_sf_premise(R2, R2)
    assert r.passed and r.margin == 0
    assert check_sf_premise(I2, R2).passed
    bad = check_sf_premise(R2, I2)
    assert not bad.passed and bad.margin == pytest.approx(-1.0) and bad.worst_pair == (0, 1)
    with pytest.raises(ValueError):
        check_sf_premise(I2, np.eye(3))


def test_sf_swap_negates_margins():
    rng = np.random.default_rng(1)
    for _ in range(20):
        A, B = rng.standard_normal((2, 4, 4))
        X, Y = A @ A.T, B @ B.T
        f, b = check_sf_premise(X, Y), check_sf_premise(Y, X)
        assert np.allclose(f.margins, -b.margins)
        if not f.passed:
            assert np.any(b.margins > 0)


def test_slepian_examples():
    assert check_slepian_premise(R2, R2).passed
    X = np.array([[1.0, 0.2], [0.2, 1.0]])
    assert check_slepian_premise(X, R2).passed
    Y = np.array([[1.1, 0.5], [0.5, 1.0]])
    r = check_slepian_premise(I2, Y)
    assert not r.passed and not r.variance_match and r.max_variance_diff == pytest.approx(0.1)


def test_claim_trivial_cases():
    lhs, rhs, ok = claim_inequality_check([0.3, -1.2], 1.0, 0, 1, 1)
    assert lhs == 0 and rhs == 1 and ok
    x = np.array([0.7, 0.1])
    lhs, rhs, ok = claim_inequality_check(x, 2.0, 0, 1, 2)
    assert lhs == pytest.approx(math.exp(2 * x.sum())) and lhs == pytest.approx(rhs) and ok
    with pytest.raises(ValueError):
        claim_inequality_check(x, 1.0, 1, 1, 1)
    with pytest.raises(ValueError):
        claim_inequality_check(x, 1.0, 0, 1, 3)


def test_claim_small_exhaustive():
    rng = np.random.default_rng(2)
    for n in range(2, 7):
        for _ in range(4):
            x = rng.standard_normal(n)
            for beta in (0.5, 1.0, 2.0):
                for m in range(1, n + 1):
                    for i, j in itertools.permutations(range(n), 2):
                        assert claim_inequality_check(x, beta, i, j, m)[2]


def test_mc_order_equal_and_full_sum():
    C = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]])
    rows = mc_order_compare(C, C, [1, 2, 3], 20_000, seed=1)
    for r in rows:
        assert r.diff == pytest.approx(0.0, abs=1e-12) and r.passed
    assert abs(rows[2].mean_x) <= 4 * rows[2].se_x


def test_mc_order_iid_vs_correlated():
    Y = np.full((4, 4), 0.5) + 0.5 * np.eye(4)
    rows = mc_order_compare(np.eye(4), Y, [1, 2], 200_000, seed=3)
    assert rows[0].mean_x == pytest.approx(1.0294, abs=4 * rows[0].se_x)
    for r in rows:
        assert r.passed and r.diff > 3 * r.se_diff


def test_mc_order_premise_failure():
    with pytest.raises(PremiseError):
        mc_order_compare(R2, I2, [1], 100)
    with pytest.raises(ValueError):
        mc_order_compare(I2, I2, [3], 100)


def test_mc_order_deterministic():
    Y = np.eye(3) * 0.5 + 0.5
    a = mc_order_compare(np.eye(3), Y, [1], 60_000, seed=9)
    b = mc_order_compare(np.eye(3), Y, [1], 60_000, seed=9)
    assert a == b
    c = mc_order_compare(np.eye(3), Y, [1], 60_000, seed=10)
    assert c[0].mean_x != a[0].mean_x


def _pairs(N, k, seed, lo=0):
    rng = np.random.default_rng(seed)
    return [tuple(map(tuple, rng.integers(lo, N - lo, (2, 2)))) for _ in range(k)]


def test_field_compare_identical_mbrw():
    spec = FieldSpec("mbrw", 32)
    r = field_cov_compare(spec, spec, _pairs(32, 40, 0))
    assert r.passed and r.min_margin == 0.0
    r2 = field_cov_compare(spec, spec, _pairs(32, 40, 0), mode="slepian")
    assert r2.passed


def test_brw_vs_mbrw_constant():
    pairs = _pairs(32, 300, 1)
    r = field_cov_compare(FieldSpec("brw", 32), FieldSpec("mbrw", 32), pairs)
    # fitted C for Cov_BRW >= Cov_MBRW - C on the sampled pairs
    C = float(np.max(-r.cov_diff))
    assert np.all(r.cov_diff >= -C)
    # Cov_BRW <= Cov_MBRW + C' with C' uniform in N
    ups = []
    for N in (16, 32, 64, 128):
        rr = field_cov_compare(FieldSpec("brw", N), FieldSpec("mbrw", N), _pairs(N, 300, N))
        ups.append(float(rr.cov_diff.max()))
    assert max(ups) < 3.0 and abs(ups[-1] - ups[1]) < 0.5


def test_gff_vs_scaled_mbrw_margins():
    N = 16
    pairs = _pairs(N, 30, 2, lo=1)
    r = field_cov_compare(FieldSpec("gff", N), FieldSpec("mbrw", N, scale=GFF_SCALE), pairs)
    d = r.to_dict()
    assert len(d["margins"]) == 30 and all(math.isfinite(m) for m in d["margins"])


def test_field_covariance_kinds():
    V = [(1, 1), (2, 3), (5, 5)]
    g = field_covariance(FieldSpec("gff", 8), V)
    assert np.allclose(g, g.T) and g[0, 0] > 0
    g_big = field_covariance(FieldSpec("gff", 80), [(40, 40), (41, 40)])
    assert g_big[0, 1] < g_big[0, 0]
    b = field_covariance(FieldSpec("brw", 8), [(0, 0), (1, 0), (7, 7)])
    assert b.tolist() == [[4, 3, 1], [3, 4, 1], [1, 1, 4]]
    with pytest.raises(ValueError):
        field_covariance(FieldSpec("gff", 300), V)
    with pytest.raises(ValueError):
        field_cov_compare(FieldSpec("brw", 8), FieldSpec("brw", 8), [((0, 0), (1, 1))], mode="x")
