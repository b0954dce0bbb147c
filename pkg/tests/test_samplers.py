import itertools

import numpy as np
import pytest
from scipy import stats

from gffextremes.green import build_green
from gffextremes.lattice import box_contains, split_level
from gffextremes.samplers import (
    Field,
    FieldKind,
    brw_cov_exact,
    brw_level,
    circular_box_sum,
    mbrw_cov_displacement,
    mbrw_cov_exact,
    mbrw_deviation_profile,
    mbrw_level,
    sample,
    sample_brw,
    sample_gff_dense,
    sample_gff_spectral,
    sample_mbrw,
    torus_overlap_1d,
)
from gffextremes.streams import RngStream


def empirical(draw, reps):
    return np.stack([draw(r) for r in range(reps)])


def test_field_validation():
    with pytest.raises(ValueError):
        Field(FieldKind.GFF, 4, np.zeros((3, 3)))
    assert Field("mbrw", 4, np.zeros((4, 4))).kind is FieldKind.MBRW


@pytest.mark.parametrize("sampler", [sample_gff_dense, sample_gff_spectral])
def test_gff_n3_standard_normal(sampler):
    x = np.array([sampler(3, RngStream(1, r)).values[1, 1] for r in range(4000)])
    assert stats.kstest(x, "norm").pvalue > 1e-3


@pytest.mark.parametrize("sampler", [sample_gff_dense, sample_gff_spectral])
def test_gff_boundary_zero_and_deterministic(sampler):
    f = sampler(12, RngStream(3, 7))
    a = f.values
    assert np.all(a[0] == 0) and np.all(a[-1] == 0) and np.all(a[:, 0] == 0) and np.all(a[:, -1] == 0)
    assert np.array_equal(a, sampler(12, RngStream(3, 7)).values)
    assert not np.array_equal(a, sampler(12, RngStream(3, 8)).values)


def test_gff_n4_variance():
    reps = 200_000
    x = np.array([sample_gff_dense(4, RngStream(4, r)).values[1, 2] for r in range(reps)])
    se = x.var() * np.sqrt(2 / reps)
    assert abs(x.var() - 7 / 6) <= 3 * se


@pytest.mark.parametrize("sampler", [sample_gff_dense, sample_gff_spectral])
def test_gff_covariance_small(sampler):
    N, reps = 6, 40_000
    G = build_green(N).G
    X = empirical(lambda r: sampler(N, RngStream(5, r)).values[1:-1, 1:-1].ravel(), reps)
    C = X.T @ X / reps
    se = np.sqrt((G * G + np.outer(np.diag(G), np.diag(G))) / reps)
    z = np.abs(C - G) / se
    assert z.max() < 4.5


def test_spectral_covariance_exceedance_rate_is_nominal():
    # with many entries some exceed 3 SE by chance; the rate must match the Gaussian tail
    N, reps = 10, 50_000
    G = build_green(N).G
    X = empirical(lambda r: sample_gff_spectral(N, RngStream(6, r)).values[1:-1, 1:-1].ravel(), reps)
    C = X.T @ X / reps
    se = np.sqrt((G * G + np.outer(np.diag(G), np.diag(G))) / reps)
    iu = np.triu_indices(G.shape[0])
    z = (np.abs(C - G) / se)[iu]
    expected = z.size * 2 * stats.norm.sf(3)
    assert np.sum(z > 3) <= expected + 4 * np.sqrt(expected) + 5
    assert np.mean(z > 1) == pytest.approx(2 * stats.norm.sf(1), abs=0.05)


def test_mbrw_single_level_iid():
    N = 8
    f = sample_mbrw(N, RngStream(1), level_range=(0, 0))
    x = np.concatenate([sample_mbrw(N, RngStream(1, r), (0, 0)).values.ravel() for r in range(200)])
    assert stats.kstest(x, "norm").pvalue > 1e-3
    assert f.level_range == (0, 0)


def test_circular_box_sum_bruteforce():
    rng = np.random.default_rng(0)
    for N in (1, 2, 5, 8):
        a = rng.standard_normal((N, N))
        for side in range(1, N + 1):
            ref = sum(np.roll(np.roll(a, i, 0), j, 1) for i in range(side) for j in range(side))
            assert np.allclose(circular_box_sum(a, side), ref, atol=1e-12)
    with pytest.raises(ValueError):
        circular_box_sum(np.zeros((4, 4)), 5)


def test_mbrw_level_matches_box_definition():
    # each vertex sums the corner variables of every torus box of side 2^k containing it
    N, k = 8, 2
    g = np.random.default_rng(3)
    b = np.random.default_rng(3).standard_normal((N, N)) * 2.0**-k
    lev = mbrw_level(N, k, g)
    for v in itertools.product(range(N), repeat=2):
        ref = sum(b[c] for c in itertools.product(range(N), repeat=2) if box_contains(c, k, v, N))
        assert lev[v] == pytest.approx(ref, abs=1e-12)


def test_torus_overlap_bruteforce():
    for N in (4, 8):
        for L in (1, 2, 4, N):
            for d in range(N):
                ref = sum(1 for s in range(N) if (0 - s) % N < L and (d - s) % N < L)
                assert torus_overlap_1d(d, L, N) == ref


def test_mbrw_cov_exact_examples():
    assert mbrw_cov_exact((3, 5), (3, 5), 16) == 5
    assert mbrw_cov_exact((0, 0), (0, 0), 16, (2, 4)) == 3
    anti = mbrw_cov_exact((0, 0), (8, 0), 16)
    assert 0 <= anti <= 2
    prof = mbrw_deviation_profile(16)
    assert abs(anti - (4 - np.log2(8))) <= prof["C_emp"]


def test_mbrw_cov_stationary_and_symmetric():
    N = 16
    for d in [(1, 0), (3, 5), (8, 8), (15, 1)]:
        base = mbrw_cov_exact((0, 0), d, N)
        assert mbrw_cov_exact((4, 9), ((4 + d[0]) % N, (9 + d[1]) % N), N) == base
        assert mbrw_cov_exact(d, (0, 0), N) == base


def test_mbrw_empirical_covariance_stationarity():
    N, reps = 8, 20_000
    X = empirical(lambda r: sample_mbrw(N, RngStream(6, r)).values, reps)
    rng = np.random.default_rng(1)
    for _ in range(10):
        d = rng.integers(0, N, 2)
        u = rng.integers(0, N, 2)
        v = (u + d) % N
        xu, xv = X[:, u[0], u[1]], X[:, v[0], v[1]]
        prod = xu * xv
        exact = mbrw_cov_displacement(d[0], d[1], N)
        assert abs(prod.mean() - exact) <= 4 * prod.std() / np.sqrt(reps)


def test_mbrw_deviation_profile_bounded_increments():
    c = [mbrw_deviation_profile(N)["C_emp"] for N in (32, 64, 128, 256, 512)]
    inc = np.diff(c)
    # increments shrink geometrically: sup deviation converges to a finite constant
    assert np.all(inc > 0) and np.all(inc[1:] < 0.75 * inc[:-1])


def test_brw_n0_and_cov_formula():
    f = sample_brw(1, RngStream(2))
    assert f.values.shape == (1, 1)
    N, n = 16, 4
    for u, v in [((0, 0), (1, 0)), ((0, 0), (15, 15)), ((5, 6), (7, 7))]:
        assert brw_cov_exact(u, v, N) == n + 1 - split_level(u, v)
    assert brw_cov_exact((3, 3), (3, 3), N) == n + 1
    assert brw_cov_exact((0, 0), (15, 15), N, (1, 4)) == 1
    assert brw_cov_exact((0, 0), (15, 15), N, (1, 3)) == 0


def test_brw_siblings_empirical():
    N, reps = 8, 20_000
    X = empirical(lambda r: sample_brw(N, RngStream(7, r)).values, reps)
    p = X[:, 0, 0] * X[:, 1, 0]
    assert abs(p.mean() - 3) <= 3 * p.std() / np.sqrt(reps)
    v = X[:, 2, 3] ** 2
    assert abs(v.mean() - 4) <= 3 * v.std() / np.sqrt(reps)


def test_brw_block_constant():
    f = sample_brw(16, RngStream(1), (2, 4))
    a = f.values
    assert np.all(a[:4, :4] == a[0, 0])


@pytest.mark.parametrize("kind", ["mbrw", "brw"])
def test_level_additivity(kind):
    N = 16
    s = RngStream(11, 2)
    full = sample(kind, N, s).values
    lo = sample(kind, N, s, (0, 1)).values
    hi = sample(kind, N, s, (2, 4)).values
    assert np.allclose(full, lo + hi, rtol=0, atol=1e-12)
    # each level is drawn from its own substream, so a single-level field is reproduced exactly
    one = sample(kind, N, s, (3, 3)).values
    assert np.array_equal(one, sample(kind, N, RngStream(11, 2), (3, 3)).values)


def test_level_range_validation():
    with pytest.raises(ValueError):
        sample_mbrw(16, RngStream(0), (3, 2))
    with pytest.raises(ValueError):
        sample_brw(16, RngStream(0), (0, 5))
    with pytest.raises(ValueError):
        sample_mbrw(12, RngStream(0))


def test_dispatch():
    assert sample("gff", 8, 1).kind is FieldKind.GFF
    assert sample(FieldKind.BRW, 8, 1).level_range == (0, 3)


def test_brw_equals_sum_of_levels():
    N, s = 16, RngStream(8, 1)
    for lo, hi in [(0, 4), (2, 3), (4, 4)]:
        ref = sum(brw_level(N, k, s.generator(k, "brw")) for k in range(lo, hi + 1))
        assert np.allclose(sample_brw(N, s, (lo, hi)).values, ref, rtol=0, atol=1e-12)
