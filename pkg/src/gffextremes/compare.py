"""Gaussian comparison tools: premise checks and Monte Carlo order checks.

The comparison inequalities themselves (Sudakov-Fernique, Slepian, and the
top-``m``-sum variant) are taken as given; this module checks their premises
on concrete covariances and observes their conclusions by simulation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .extremes import sum_top_m
from .streams import as_stream

PIVOT_TOL = 1e-10


class NotPSDError(ValueError):
    pass


class PremiseError(ValueError):
    pass


def pivoted_cholesky(C: np.ndarray, tol: float = PIVOT_TOL) -> np.ndarray:
    """Factor ``C = L L^T`` with diagonal pivoting; returns ``L`` of shape ``(n, rank)``.

    Raises :class:`NotPSDError` if a pivot falls below ``-tol * scale`` or the
    Schur complement left at termination is not negligible.
    """
    A = np.array(C, dtype=np.float64)
    n = A.shape[0]
    scale = max(1.0, float(np.abs(np.diag(A)).max(initial=0.0)))
    perm = np.arange(n)
    L = np.zeros((n, n))
    rank = 0
    for k in range(n):
        d = np.diag(A)[k:]
        p = k + int(np.argmax(d))
        if A[p, p] < -tol * scale:
            raise NotPSDError(f"negative pivot {A[p, p]:.3e}")
        if A[p, p] <= tol * scale:
            rest = A[k:, k:]
            if np.abs(rest).max(initial=0.0) > math.sqrt(tol) * scale:
                raise NotPSDError("non-negligible Schur complement at zero pivot")
            break
        # swap k <-> p
        A[[k, p]] = A[[p, k]]
        A[:, [k, p]] = A[:, [p, k]]
        L[[k, p]] = L[[p, k]]
        perm[[k, p]] = perm[[p, k]]
        piv = math.sqrt(A[k, k])
        L[k, k] = piv
        L[k + 1:, k] = A[k + 1:, k] / piv
        A[k + 1:, k + 1:] -= np.outer(L[k + 1:, k], L[k + 1:, k])
        rank += 1
    out = np.zeros((n, rank))
    out[perm] = L[:, :rank]
    return out


@dataclass
class CovModel:
    cov: np.ndarray
    label: str = ""
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        C = np.asarray(self.cov, dtype=np.float64)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValueError("covariance must be square")
        if not np.allclose(C, C.T, rtol=0, atol=1e-12 * max(1.0, np.abs(C).max(initial=0.0))):
            raise ValueError("covariance must be symmetric")
        if np.any(np.diag(C) < 0):
            raise NotPSDError("negative variance on diagonal")
        self.cov = C
        self.factor = pivoted_cholesky(C)

    @property
    def size(self) -> int:
        return self.cov.shape[0]

    def increments(self) -> np.ndarray:
        """``E(X_a - X_b)^2`` for all ``a, b``."""
        d = np.diag(self.cov)
        return d[:, None] + d[None, :] - 2.0 * self.cov


def _as_model(c) -> CovModel:
    return c if isinstance(c, CovModel) else CovModel(np.asarray(c))


def _same_size(X: CovModel, Y: CovModel) -> None:
    if X.size != Y.size:
        raise ValueError(f"size mismatch: {X.size} vs {Y.size}")


@dataclass
class PremiseReport:
    passed: bool
    margin: float
    worst_pair: tuple[int, int] | None
    margins: np.ndarray = field(repr=False)
    variance_match: bool = True
    max_variance_diff: float = 0.0

    def to_dict(self) -> dict:
        return {
            "passed": bool(self.passed),
            "margin": self.margin,
            "worst_pair": None if self.worst_pair is None else list(self.worst_pair),
            "variance_match": bool(self.variance_match),
            "max_variance_diff": self.max_variance_diff,
        }


def _increment_margins(X: CovModel, Y: CovModel) -> tuple[float, tuple[int, int] | None, np.ndarray]:
    D = X.increments() - Y.increments()
    n = X.size
    if n < 2:
        return 0.0, None, D
    iu = np.triu_indices(n, 1)
    k = int(np.argmin(D[iu]))
    return float(D[iu][k]), (int(iu[0][k]), int(iu[1][k])), D


def check_sf_premise(covX, covY, tol: float = 1e-12) -> PremiseReport:
    """``E(X_a - X_b)^2 >= E(Y_a - Y_b)^2`` for all pairs; margin is the worst difference."""
    X, Y = _as_model(covX), _as_model(covY)
    _same_size(X, Y)
    margin, pair, D = _increment_margins(X, Y)
    return PremiseReport(margin >= -tol, margin, pair, D)


def check_slepian_premise(covX, covY, tol: float = 1e-12) -> PremiseReport:
    """Equal variances (to ``tol``) plus the increment inequality."""
    X, Y = _as_model(covX), _as_model(covY)
    _same_size(X, Y)
    vdiff = float(np.abs(np.diag(X.cov) - np.diag(Y.cov)).max(initial=0.0))
    margin, pair, D = _increment_margins(X, Y)
    var_ok = vdiff <= tol
    return PremiseReport(var_ok and margin >= -tol, margin, pair, D, var_ok, vdiff)


@lru_cache(maxsize=256)
def _combos(n: int, k: int) -> np.ndarray:
    c = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64).reshape(math.comb(n, k), k)
    c.setflags(write=False)
    return c


def _family_sum(w: np.ndarray, k: int, exclude=()) -> float:
    """Sum of ``prod_{t in B} w_t`` over every size-``k`` subset ``B`` avoiding ``exclude``."""
    if k < 0:
        return 0.0
    idx = np.array([t for t in range(w.size) if t not in exclude], dtype=np.int64)
    if k > idx.size:
        return 0.0
    return float(np.prod(w[idx][_combos(idx.size, k)], axis=1).sum())


def claim_inequality_check(x, beta: float, i: int, j: int, m: int):
    """Exhaustively evaluate both sides of the top-``m`` comparison claim.

    ``lhs = sum_{|A|=m} e^{beta x_A} * sum_{|B|=m-2, B not ni i,j} e^{beta x_B}``
    and ``rhs = sum_{|B|=m-1, i notin B} e^{beta x_B} * sum_{|B'|=m-1, j notin B'} e^{beta x_B'}``.
    Indices are zero-based. Families of negative size are empty (sum 0); the
    size-0 family is ``{empty set}`` (sum 1).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if i == j:
        raise ValueError("indices i and j must differ")
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError("index out of range")
    if not 1 <= m <= n:
        raise ValueError(f"m={m} outside [1, {n}]")
    w = np.exp(beta * x)
    lhs = _family_sum(w, m) * _family_sum(w, m - 2, (i, j))
    rhs = _family_sum(w, m - 1, (i,)) * _family_sum(w, m - 1, (j,))
    return lhs, rhs, bool(lhs <= rhs * (1 + 1e-12))


@dataclass
class OrderRow:
    m: int
    mean_x: float
    se_x: float
    mean_y: float
    se_y: float
    diff: float
    se_diff: float
    passed: bool


MC_BLOCK = 50_000  # replicates per substream; fixed so results do not depend on memory settings


def mc_order_compare(covX, covY, m_list, reps: int, seed: int = 0) -> list[OrderRow]:
    """Estimate ``E S_m(X)`` and ``E S_m(Y)`` with common random numbers.

    Requires ``E X_i^2 = E Y_i^2`` and ``E X_i X_j <= E Y_i Y_j``. Each row
    passes when ``E S_m(X) >= E S_m(Y) - 3 SE`` for the paired difference.
    """
    X, Y = _as_model(covX), _as_model(covY)
    _same_size(X, Y)
    rep = check_slepian_premise(X, Y)
    if not rep.passed:
        raise PremiseError(
            f"premise fails: variance diff {rep.max_variance_diff:.3e}, increment margin {rep.margin:.3e}"
        )
    n = X.size
    m_list = [int(m) for m in m_list]
    for m in m_list:
        if not 1 <= m <= n:
            raise ValueError(f"m={m} outside [1, {n}]")
    stream = as_stream(seed)
    acc = {m: np.zeros(6) for m in m_list}  # sums of sx, sx^2, sy, sy^2, d, d^2
    done, c = 0, 0
    while done < reps:
        b = min(MC_BLOCK, reps - done)
        Z = stream.child(c).generator(0, "mc-order").standard_normal((b, n))
        xs = Z @ _pad_factor(X.factor, n).T
        ys = Z @ _pad_factor(Y.factor, n).T
        sx_all, sy_all = -np.sort(-xs, axis=1), -np.sort(-ys, axis=1)
        cx, cy = sx_all.cumsum(axis=1), sy_all.cumsum(axis=1)
        for m in m_list:
            sx, sy = cx[:, m - 1], cy[:, m - 1]
            d = sx - sy
            acc[m] += [sx.sum(), (sx * sx).sum(), sy.sum(), (sy * sy).sum(), d.sum(), (d * d).sum()]
        done += b
        c += 1
    rows = []
    for m in m_list:
        s = acc[m] / reps
        se = lambda mean2, mean: math.sqrt(max(mean2 - mean * mean, 0.0) / max(reps - 1, 1))
        row = OrderRow(
            m,
            s[0], se(s[1], s[0]),
            s[2], se(s[3], s[2]),
            s[4], se(s[5], s[4]),
            False,
        )
        row.passed = row.diff >= -3.0 * row.se_diff
        rows.append(row)
    return rows


def _pad_factor(F: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, n))
    out[:, : F.shape[1]] = F
    return out


def slow_sum_top_m(x, m: int) -> float:
    """Max over all size-``m`` subsets by enumeration (oracle for :func:`sum_top_m`)."""
    x = list(x)
    return max(sum(c) for c in itertools.combinations(x, m))


# --- field covariances -----------------------------------------------------


@dataclass(frozen=True)
class FieldSpec:
    kind: str
    N: int
    level_range: tuple[int, int] | None = None
    scale: float = 1.0


def field_covariance(spec: FieldSpec, vertices) -> np.ndarray:
    """Exact covariance of ``spec`` over ``vertices`` (times ``scale^2``)."""
    from .green import DENSE_MAX_N, build_green, green_column
    from .samplers import brw_cov_exact, mbrw_cov_displacement

    V = np.asarray(vertices, dtype=np.int64).reshape(-1, 2)
    kind = spec.kind.lower()
    if kind == "gff":
        if spec.N <= DENSE_MAX_N:
            G = build_green(spec.N)
            C = np.array([[G(tuple(a), tuple(b)) for b in V] for a in V])
        elif spec.N <= 256:
            C = np.empty((len(V), len(V)))
            for a, u in enumerate(V):
                col = green_column(spec.N, tuple(u))
                C[a] = col[V[:, 0], V[:, 1]]
            C = 0.5 * (C + C.T)
        else:
            raise ValueError(f"GFF covariance not evaluable at N={spec.N}")
    elif kind == "mbrw":
        C = mbrw_cov_displacement(V[None, :, 0] - V[:, None, 0], V[None, :, 1] - V[:, None, 1], spec.N, spec.level_range)
    elif kind == "brw":
        C = brw_cov_exact((V[:, None, 0], V[:, None, 1]), (V[None, :, 0], V[None, :, 1]), spec.N, spec.level_range)
    else:
        raise ValueError(f"unknown field kind {spec.kind!r}")
    return np.asarray(C, dtype=np.float64) * spec.scale**2


@dataclass
class FieldCompareReport:
    mode: str
    passed: bool
    min_margin: float
    worst_pair: tuple | None
    pairs: list = field(repr=False)
    margins: np.ndarray = field(repr=False)
    cov_diff: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "passed": bool(self.passed),
            "min_margin": self.min_margin,
            "worst_pair": self.worst_pair,
            "pairs": [[list(map(int, a)), list(map(int, b))] for a, b in self.pairs],
            "margins": self.margins.tolist(),
            "cov_diff": self.cov_diff.tolist(),
        }


def field_cov_compare(specA: FieldSpec, specB: FieldSpec, pair_sample, mode: str = "sf", embed=None) -> FieldCompareReport:
    """Apply a premise check to two exact field covariances over sampled pairs.

    ``margins[p] = E(A_u - A_v)^2 - E(B_u' - B_v')^2`` where ``u' = embed(u)``;
    ``cov_diff[p] = Cov_A(u, v) - Cov_B(u', v')``. In ``slepian`` mode the
    variances at every sampled vertex must also agree to 1e-12.
    """
    if mode not in ("sf", "slepian"):
        raise ValueError("mode must be 'sf' or 'slepian'")
    embed = embed or (lambda v: v)
    pairs = [(tuple(a), tuple(b)) for a, b in pair_sample]
    verts = sorted({v for p in pairs for v in p})
    pos = {v: i for i, v in enumerate(verts)}
    CA = field_covariance(specA, verts)
    CB = field_covariance(specB, [embed(v) for v in verts])
    ia = np.array([pos[a] for a, _ in pairs])
    ib = np.array([pos[b] for _, b in pairs])
    incA = CA[ia, ia] + CA[ib, ib] - 2 * CA[ia, ib]
    incB = CB[ia, ia] + CB[ib, ib] - 2 * CB[ia, ib]
    margins = incA - incB
    cov_diff = CA[ia, ib] - CB[ia, ib]
    ok = bool(np.all(margins >= -1e-12))
    if mode == "slepian":
        ok = ok and bool(np.abs(np.diag(CA) - np.diag(CB)).max(initial=0.0) <= 1e-12)
    k = int(np.argmin(margins)) if len(pairs) else 0
    return FieldCompareReport(
        mode, ok, float(margins[k]) if len(pairs) else 0.0, pairs[k] if pairs else None, pairs, margins, cov_diff
    )
