"""Extreme-value statistics of lattice fields.

Ties are broken lexicographically by vertex ``(x, y)``, which coincides with
the flat row-major index ``x * N + y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import t_n
from .lattice import Vertex, log2_exact, torus_displacement
from .samplers import Field, FieldKind


def _values(field_or_array) -> np.ndarray:
    if isinstance(field_or_array, Field):
        return field_or_array.values
    a = np.asarray(field_or_array, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square 2D array")
    return a


@dataclass
class ExtremeSummary:
    max: float
    argmax: Vertex
    gap: float
    top_k: list[tuple[float, Vertex]]
    near_max_counts: dict[float, int] = field(default_factory=dict)
    center: float = 0.0

    def to_dict(self) -> dict:
        return {
            "max": self.max,
            "argmax": list(self.argmax),
            "gap": self.gap,
            "center": self.center,
            "top_k": [[v, list(p)] for v, p in self.top_k],
            "near_max_counts": {str(k): c for k, c in self.near_max_counts.items()},
        }


def top_k_flat(values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top ``k`` (value, flat index) pairs, value descending then index ascending."""
    flat = values.ravel()
    k = min(k, flat.size)
    if k < flat.size:
        cand = np.argpartition(-flat, k - 1)[:k]
        # ties straddling the partition boundary: pull in every entry equal to the k-th value
        kth = flat[cand].min()
        cand = np.union1d(cand[flat[cand] > kth], np.flatnonzero(flat == kth))
    else:
        cand = np.arange(flat.size)
    order = np.lexsort((cand, -flat[cand]))[:k]
    idx = cand[order]
    return flat[idx], idx


def near_max_counts(values: np.ndarray, center: float, lambdas) -> dict[float, int]:
    """``|{v: value_v >= center - lambda}|`` for each ``lambda``."""
    s = np.sort(values.ravel())
    return {float(lam): int(s.size - np.searchsorted(s, center - lam, side="left")) for lam in lambdas}


def summarize(field, top_k: int = 20, center: float = 0.0, lambdas=()) -> ExtremeSummary:
    if top_k < 2:
        raise ValueError("top_k must be at least 2")
    a = _values(field)
    N = a.shape[0]
    vals, idx = top_k_flat(a, top_k)
    top = [(float(v), Vertex(int(i // N), int(i % N))) for v, i in zip(vals, idx)]
    gap = float(vals[0] - vals[1]) if len(vals) > 1 else 0.0
    return ExtremeSummary(
        max=top[0][0],
        argmax=top[0][1],
        gap=gap,
        top_k=top,
        near_max_counts=near_max_counts(a, center, lambdas) if len(lambdas) else {},
        center=float(center),
    )


@dataclass
class PairMaxResult:
    value: float
    pair: tuple[Vertex, Vertex] | None
    r: float
    metric: str


def _pair_distance(ax, ay, bx, by, N: int, metric: str):
    if metric == "plain":
        return np.hypot(ax - bx, ay - by)
    if metric == "torus":
        dx, dy = torus_displacement(ax - bx, ay - by, N)
        return np.hypot(dx, dy)
    raise ValueError(f"unknown metric {metric!r}")


def pair_max_restricted(field, r: float, metric: str = "plain") -> PairMaxResult:
    """Max of ``x_u + x_v`` over pairs with ``r <= dist(u, v) <= N / r``.

    Values are scanned in descending order; for the ``i``-th value only
    partners ``j < i`` with ``x_i + x_j > best`` are examined, and the scan
    stops once ``x_i + x_1 <= best``. Exact, and near-linear on Gaussian
    fields because the constraint is rarely binding far down the list.
    """
    a = _values(field)
    N = a.shape[0]
    if r < 1 or r * r > N * (1 + 1e-12):
        raise ValueError(f"empty constraint set: need 1 <= r and r^2 <= N (r={r}, N={N})")
    hi = N / r
    flat = a.ravel()
    order = np.lexsort((np.arange(flat.size), -flat))
    xs = flat[order]
    neg = -xs
    px, py = order // N, order % N
    best, pair = -math.inf, None
    for i in range(1, xs.size):
        if xs[i] + xs[0] <= best:
            break
        # partners j < i with xs[j] > best - xs[i]; xs is descending
        lim = i if best == -math.inf else min(i, int(np.searchsorted(neg, xs[i] - best, side="left")))
        if lim == 0:
            continue
        d = _pair_distance(px[:lim], py[:lim], px[i], py[i], N, metric)
        ok = np.flatnonzero((d >= r) & (d <= hi))
        if ok.size:
            j = ok[0]  # first admissible partner has the largest value
            s = xs[i] + xs[j]
            if s > best:
                best = float(s)
                pair = (Vertex(int(px[j]), int(py[j])), Vertex(int(px[i]), int(py[i])))
    return PairMaxResult(best, pair, r, metric)


def sum_top_m(values, m: int) -> float:
    """Sum of the ``m`` largest entries, i.e. the max over size-``m`` subsets."""
    x = np.asarray(values, dtype=np.float64).ravel()
    if not 1 <= m <= x.size:
        raise ValueError(f"m={m} outside [1, {x.size}]")
    return float(np.partition(x, x.size - m)[x.size - m:].sum())


def neighbor_avg_field(field: Field) -> tuple[np.ndarray, float]:
    """Quarter-sum of the four neighbour values at interior vertices, 0 on the boundary.

    Returns the averaged field and its maximum over even vertices (``x + y`` even).
    """
    if not isinstance(field, Field) or field.kind is not FieldKind.GFF:
        raise ValueError("neighbor_avg_field expects a GFF field")
    a = field.values
    N = a.shape[0]
    z = np.zeros_like(a)
    z[1:-1, 1:-1] = 0.25 * (a[2:, 1:-1] + a[:-2, 1:-1] + a[1:-1, 2:] + a[1:-1, :-2])
    x, y = np.indices((N, N))
    return z, float(z[(x + y) % 2 == 0].max())


def _require_brw(field) -> Field:
    if not isinstance(field, Field) or field.kind is not FieldKind.BRW:
        raise ValueError("expected a BRW field")
    return field


def brw_level_counts(field: Field, x_values, n: int | None = None) -> dict[int, int]:
    """``Xi_n(x) = #{v: value_v in [t_n - x - 1, t_n - x]}`` for each integer ``x``.

    ``n`` defaults to ``log2 N``.
    """
    f = _require_brw(field)
    n = f.n if n is None else n
    t = t_n(n)
    xs = [int(x) for x in x_values]
    v = f.values.ravel()
    s = np.sort(v[v >= t - max(xs) - 1]) if xs else v
    out = {}
    for x in x_values:
        lo, hi = t - x - 1, t - x
        out[int(x)] = int(np.searchsorted(s, hi, side="right") - np.searchsorted(s, lo, side="left"))
    return out


def block_max_pyramid(values: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per level ``k``: the max over each dyadic block and the flat index attaining it."""
    N = values.shape[0]
    n = log2_exact(N)
    idx = np.arange(N * N).reshape(N, N)
    levels = [(values, idx)]
    cur_v, cur_i = values, idx
    for _ in range(n):
        m = cur_v.shape[0] // 2
        v4 = cur_v.reshape(m, 2, m, 2).transpose(0, 2, 1, 3).reshape(m, m, 4)
        i4 = cur_i.reshape(m, 2, m, 2).transpose(0, 2, 1, 3).reshape(m, m, 4)
        # lexicographic tie-break: smallest flat index among maximal children
        key = np.where(v4 == v4.max(axis=2, keepdims=True), i4, np.iinfo(np.int64).max)
        c = key.argmin(axis=2)
        cur_v = np.take_along_axis(v4, c[..., None], 2)[..., 0]
        cur_i = np.take_along_axis(i4, c[..., None], 2)[..., 0]
        levels.append((cur_v, cur_i))
    return levels


def brw_pair_max_split(field: Field, s_range, pyramid=None) -> PairMaxResult:
    """Max of ``x_u + x_v`` over pairs whose split level lies in ``[s_lo, s_hi]``.

    A pair splits at level ``s`` when it shares its level-``s`` block but not
    its level-``(s-1)`` block, so the best such pair inside a level-``s``
    block sums the top two of its four child-block maxima. ``pyramid`` may pass
    a precomputed :func:`block_max_pyramid` to share it across ranges.
    """
    f = _require_brw(field)
    N = f.N
    n = f.n
    s_lo, s_hi = (int(t) for t in s_range)
    if not 1 <= s_lo <= s_hi <= n:
        raise ValueError(f"empty split range [{s_lo}, {s_hi}] for n={n}")
    pyr = block_max_pyramid(f.values) if pyramid is None else pyramid
    best, pair = -math.inf, None
    for s in range(s_lo, s_hi + 1):
        cv, ci = pyr[s - 1]
        m = cv.shape[0] // 2
        v4 = cv.reshape(m, 2, m, 2).transpose(0, 2, 1, 3).reshape(m * m, 4)
        i4 = ci.reshape(m, 2, m, 2).transpose(0, 2, 1, 3).reshape(m * m, 4)
        o = np.argsort(-v4, axis=1, kind="stable")
        top2 = np.take_along_axis(v4, o[:, :2], 1)
        sums = top2.sum(axis=1)
        b = int(np.argmax(sums))
        if sums[b] > best:
            best = float(sums[b])
            p, q = sorted(int(i4[b, o[b, t]]) for t in (0, 1))
            pair = (Vertex(p // N, p % N), Vertex(q // N, q % N))
    return PairMaxResult(best, pair, float(s_lo), f"split[{s_lo},{s_hi}]")


def _annulus_kernel(r: float, N: int) -> np.ndarray:
    R = int(math.floor(N / r))
    d = np.arange(-R, R + 1)
    d2 = d[:, None] ** 2 + d[None, :] ** 2
    return ((d2 >= r * r) & (d2 <= (N / r) ** 2)).astype(np.float64)


def annulus_pair_exists(coords, r: float, N: int, direct_max: int = 2048) -> bool:
    """Whether two of the given vertices lie at Euclidean distance in ``[r, N / r]``.

    Pairwise for small sets; otherwise the indicator grid is correlated with
    the annulus mask by FFT and read back at the vertices (counts are
    integers, so rounding at 0.5 is exact).
    """
    pts = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
    if r < 1 or r * r > N * (1 + 1e-12) or pts.shape[0] < 2:
        return False
    lo2, hi2 = r * r, (N / r) ** 2
    if pts.shape[0] <= direct_max:
        for i in range(1, pts.shape[0]):
            d2 = ((pts[:i] - pts[i]) ** 2).sum(axis=1)
            if np.any((d2 >= lo2) & (d2 <= hi2)):
                return True
        return False
    from scipy.signal import fftconvolve

    mask = np.zeros((N, N))
    mask[pts[:, 0], pts[:, 1]] = 1.0
    hits = fftconvolve(mask, _annulus_kernel(r, N), mode="same")
    return bool(np.any(hits[pts[:, 0], pts[:, 1]] > 0.5))
