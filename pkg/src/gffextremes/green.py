"""Green function, effective resistance and GFF covariance on V_N.

The walk is simple random walk on Z^2 killed on the boundary layer. With
``P`` the killed transition kernel on interior vertices, ``G = (I - P)^{-1}``
and the GFF covariance is ``G`` itself.

Dense operators are capped at ``DENSE_MAX_N``; beyond that, single columns of
``G`` are available exactly through the sine basis (:func:`green_column`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.fft import dstn

from .lattice import GridSpec, Vertex, log2_exact
from .streams import RngStream, as_stream

DENSE_MAX_N = 64


class SizeError(ValueError):
    """Requested size exceeds what a dense solve supports."""


def _interior_index(N: int, v) -> int:
    M = N - 2
    x, y = v
    if not (1 <= x <= M and 1 <= y <= M):
        raise ValueError(f"vertex {tuple(v)} is not interior for N={N}")
    return (x - 1) * M + (y - 1)


def killed_walk_matrix(N: int) -> sp.csr_matrix:
    """Sparse ``I - P`` on interior vertices, ordered row-major by ``(x, y)``."""
    M = N - 2
    T = sp.diags([np.ones(M - 1), np.ones(M - 1)], [-1, 1], shape=(M, M))
    I = sp.identity(M)
    A = sp.kron(T, I) + sp.kron(I, T)
    return (sp.identity(M * M) - 0.25 * A).tocsr()


@dataclass(frozen=True)
class GreenOperator:
    N: int
    G: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.N - 2

    def index(self, v) -> int:
        return _interior_index(self.N, v)

    def vertex(self, i: int) -> Vertex:
        return Vertex(i // self.M + 1, i % self.M + 1)

    def __call__(self, x, y) -> float:
        """``G(x, y)``; zero when either vertex lies on the boundary."""
        g = GridSpec(self.N)
        if not (g.is_interior(x) and g.is_interior(y)):
            return 0.0
        return float(self.G[self.index(x), self.index(y)])

    def full_covariance(self) -> np.ndarray:
        """Covariance indexed by all ``N*N`` vertices (flat ``x*N + y``)."""
        N, M = self.N, self.M
        idx = np.array([(x * N + y) for x in range(1, N - 1) for y in range(1, N - 1)])
        C = np.zeros((N * N, N * N))
        C[np.ix_(idx, idx)] = self.G
        return C

    def residual(self) -> float:
        """Max entrywise ``|(I - P) G - I|``."""
        R = killed_walk_matrix(self.N) @ self.G
        R[np.diag_indices_from(R)] -= 1.0
        return float(np.abs(R).max())


@lru_cache(maxsize=8)
def build_green(N: int) -> GreenOperator:
    """Dense Green operator via a Cholesky solve of ``(I - P) G = I``."""
    if N < 3:
        raise ValueError("N must be at least 3 to have an interior vertex")
    if N > DENSE_MAX_N:
        raise SizeError(f"dense Green solve limited to N <= {DENSE_MAX_N}, got {N}")
    A = killed_walk_matrix(N).toarray()
    G = sla.cho_solve(sla.cho_factor(A, lower=True), np.eye(A.shape[0]))
    G = 0.5 * (G + G.T)
    G.setflags(write=False)
    return GreenOperator(N, G)


@lru_cache(maxsize=16)
def _sine_precision(N: int) -> np.ndarray:
    M = N - 2
    c = np.cos(np.pi * np.arange(1, M + 1) / (M + 1))
    return 1.0 - 0.5 * (c[:, None] + c[None, :])


def green_column(N: int, y) -> np.ndarray:
    """Exact ``G(., y)`` as an ``N x N`` array, via the orthonormal sine basis.

    ``G = Phi diag(1/q) Phi^T`` with ``Phi`` the DST-I basis, so a column costs
    two sine transforms. No size cap beyond memory.
    """
    if N < 3:
        raise ValueError("N must be at least 3")
    M = N - 2
    e = np.zeros((M, M))
    e[y[0] - 1, y[1] - 1] = 1.0
    _interior_index(N, y)
    col = dstn(dstn(e, type=1, norm="ortho") / _sine_precision(N), type=1, norm="ortho")
    out = np.zeros((N, N))
    out[1:-1, 1:-1] = col
    return out


def green_mc_oracle(N: int, x, y, walks: int, seed: int | RngStream = 0):
    """Monte Carlo estimate of ``G(x, y)`` from killed simple random walks.

    Counts visits to ``y`` at times ``0 .. tau - 1``; returns
    ``(estimate, standard_error)``.
    """
    g = GridSpec(N)
    if not (g.is_interior(x) and g.is_interior(y)):
        raise ValueError("green_mc_oracle needs interior start and target")
    if walks < 1:
        raise ValueError("walks must be >= 1")
    rng = as_stream(seed).generator(0, "green-mc")
    steps = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
    pos = np.tile(np.asarray(x, dtype=np.int64), (walks, 1))
    visits = np.zeros(walks, dtype=np.int64)
    alive = np.arange(walks)
    tx, ty = y
    while alive.size:
        p = pos[alive]
        visits[alive] += (p[:, 0] == tx) & (p[:, 1] == ty)
        p += steps[rng.integers(0, 4, size=alive.size)]
        pos[alive] = p
        inside = (p[:, 0] >= 1) & (p[:, 0] <= N - 2) & (p[:, 1] >= 1) & (p[:, 1] <= N - 2)
        alive = alive[inside]
    mean = visits.mean()
    se = visits.std(ddof=1) / math.sqrt(walks) if walks > 1 else math.inf
    return float(mean), float(se)


class ResistanceNetwork:
    """Unit-resistor network on V_N with the whole boundary wired into one ground node.

    Built from the edge list directly (not from ``G``) so that the identity
    ``E(eta_u - eta_v)^2 = 4 R_eff(u, v)`` compares two independent solves.
    """

    def __init__(self, N: int):
        if N < 3:
            raise ValueError("N must be at least 3")
        if N > DENSE_MAX_N:
            raise SizeError(f"dense resistance solve limited to N <= {DENSE_MAX_N}")
        self.N = N
        M = N - 2
        ground = M * M
        n_nodes = M * M + 1
        L = np.zeros((n_nodes, n_nodes))
        for x in range(1, N - 1):
            for y in range(1, N - 1):
                a = (x - 1) * M + (y - 1)
                for w in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                    b = _interior_index(N, w) if 1 <= w[0] <= M and 1 <= w[1] <= M else ground
                    # each undirected edge visited from both ends only when both are interior
                    if b == ground:
                        L[a, a] += 1
                        L[ground, ground] += 1
                        L[a, ground] -= 1
                        L[ground, a] -= 1
                    elif a < b:
                        L[a, a] += 1
                        L[b, b] += 1
                        L[a, b] -= 1
                        L[b, a] -= 1
        self.laplacian = L
        # ground the boundary node: drop its row and column
        self._factor = sla.cho_factor(L[:ground, :ground], lower=True)

    def potentials(self, current: np.ndarray) -> np.ndarray:
        return sla.cho_solve(self._factor, current)

    def resistance(self, u, v) -> float:
        if tuple(u) == tuple(v):
            return 0.0
        M = self.N - 2
        b = np.zeros(M * M)
        i, j = _interior_index(self.N, u), _interior_index(self.N, v)
        b[i], b[j] = 1.0, -1.0
        phi = self.potentials(b)
        return float(phi[i] - phi[j])

    def boundary_resistance(self, v) -> float:
        """Effective resistance between ``v`` and the wired boundary node."""
        M = self.N - 2
        b = np.zeros(M * M)
        i = _interior_index(self.N, v)
        b[i] = 1.0
        return float(self.potentials(b)[i])


@lru_cache(maxsize=8)
def resistance_network(N: int) -> ResistanceNetwork:
    return ResistanceNetwork(N)


def effective_resistance(N: int, u, v) -> float:
    return resistance_network(N).resistance(u, v)


def boundary_resistance(N: int, v) -> float:
    return resistance_network(N).boundary_resistance(v)


def gff_increment_variance(N: int, u, v) -> float:
    """``E(eta_u - eta_v)^2 = G(u,u) + G(v,v) - 2 G(u,v)`` from the dense Green operator."""
    G = build_green(N)
    return G(u, u) + G(v, v) - 2.0 * G(u, v)


def gff_cov_profile_check(N: int, sources: int = 16, seed: int = 0) -> dict:
    """Compare GFF covariance on V_{4N} with ``(2 log 2/pi)(n - (0 v log2 |u-v|))``.

    Pairs are drawn from the centered copy ``(2N, 2N) + V_N``: ``sources``
    random vertices ``u`` (the first one is the box center) against every
    ``v`` in the copy. Returns the empirical constant ``C_emp`` together with
    the mean covariance drop per doubling of ``|u - v|`` along a row.
    """
    n = log2_exact(N)
    big = 4 * N
    if big > 256:
        raise SizeError("gff_cov_profile_check supports 4N <= 256")
    slope = 2.0 * math.log(2.0) / math.pi
    rng = as_stream(seed).generator(0, "cov-profile")
    off = 2 * N
    center = (off + N // 2, off + N // 2)
    us = [center] + [tuple(int(t) for t in off + rng.integers(0, N, size=2)) for _ in range(sources - 1)]
    xs, ys = np.meshgrid(np.arange(off, off + N), np.arange(off, off + N), indexing="ij")
    dense = build_green(big) if big <= DENSE_MAX_N else None
    worst, worst_pair, diag_dev = 0.0, None, 0.0
    for u in us:
        col = green_column(big, u) if dense is None else _dense_column(dense, u)
        cov = col[off:off + N, off:off + N]
        dist = np.hypot(xs - u[0], ys - u[1])
        with np.errstate(divide="ignore"):
            lg = np.where(dist > 0, np.log2(np.maximum(dist, 1e-300)), 0.0)
        dev = np.abs(cov - slope * (n - np.maximum(lg, 0.0)))
        k = np.unravel_index(np.argmax(dev), dev.shape)
        if dev[k] > worst:
            worst, worst_pair = float(dev[k]), (u, (int(xs[k]), int(ys[k])))
        diag_dev = max(diag_dev, float(dev[u[0] - off, u[1] - off]))
    col = green_column(big, center) if dense is None else _dense_column(dense, center)
    row = [col[center[0] + (1 << j), center[1]] for j in range(0, n)]
    drops = [row[j] - row[j + 1] for j in range(len(row) - 1)]
    return {
        "N": N,
        "n": n,
        "box": big,
        "C_emp": worst,
        "worst_pair": worst_pair,
        "diagonal_deviation": diag_dev,
        "doubling_distances": [1 << j for j in range(n)],
        "doubling_drops": drops,
        "expected_drop": slope,
    }


def _dense_column(op: GreenOperator, y) -> np.ndarray:
    N = op.N
    out = np.zeros((N, N))
    out[1:-1, 1:-1] = op.G[:, op.index(y)].reshape(N - 2, N - 2)
    return out
