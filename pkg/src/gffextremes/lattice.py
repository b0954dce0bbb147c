"""Grid geometry for the square box V_N and its torus.

Coordinates are zero-based ``(x, y)`` with ``0 <= x, y < N``. The boundary is
the outermost one-vertex-thick layer, so the interior is the ``(N-2) x (N-2)``
sub-grid. Hierarchical constructions (dyadic blocks, torus boxes) require
``N = 2**n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np


class Vertex(NamedTuple):
    x: int
    y: int


class DyadicBlock(NamedTuple):
    level: int
    corner: Vertex

    @property
    def side(self) -> int:
        return 1 << self.level


def log2_exact(N: int) -> int:
    """Return ``n`` with ``N == 2**n``; raise ``ValueError`` otherwise."""
    N = int(N)
    if N < 1 or N & (N - 1):
        raise ValueError(f"side length {N} is not a power of two")
    return N.bit_length() - 1


@dataclass(frozen=True)
class GridSpec:
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"side length must be positive, got {self.N}")

    @property
    def hierarchical(self) -> bool:
        return self.N & (self.N - 1) == 0

    @property
    def n(self) -> int:
        return log2_exact(self.N)

    @property
    def interior_side(self) -> int:
        return max(self.N - 2, 0)

    def contains(self, v) -> bool:
        return 0 <= v[0] < self.N and 0 <= v[1] < self.N

    def is_interior(self, v) -> bool:
        return 1 <= v[0] <= self.N - 2 and 1 <= v[1] <= self.N - 2

    def interior_vertices(self) -> Iterator[Vertex]:
        for x in range(1, self.N - 1):
            for y in range(1, self.N - 1):
                yield Vertex(x, y)

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones((self.N, self.N), dtype=bool)
        mask[1:-1, 1:-1] = False
        return mask


def _check_vertex(v, N: int) -> None:
    if not (0 <= v[0] < N and 0 <= v[1] < N):
        raise ValueError(f"vertex {tuple(v)} outside [0, {N})^2")


def _check_level(k: int, n: int | None) -> None:
    if k < 0 or (n is not None and k > n):
        raise ValueError(f"level {k} outside [0, {n}]")


def torus_distance(u, v, N: int) -> float:
    """Euclidean distance between ``u`` and ``v`` on the ``N``-torus.

    Minimises ``||u - w||`` over the nine translates ``w = v + (iN, jN)``,
    ``i, j in {-1, 0, 1}``, which is enough for coordinates in ``[0, N)``.
    """
    _check_vertex(u, N)
    _check_vertex(v, N)
    best = math.inf
    for sx in (-N, 0, N):
        for sy in (-N, 0, N):
            best = min(best, math.hypot(u[0] - v[0] - sx, u[1] - v[1] - sy))
    return best


def torus_displacement(dx, dy, N: int):
    """Per-coordinate wrapped displacement ``min(|d| mod N, N - |d| mod N)``.

    Works elementwise on arrays; ``hypot`` of the two results is the torus
    distance.
    """
    dx = np.abs(np.asarray(dx)) % N
    dy = np.abs(np.asarray(dy)) % N
    return np.minimum(dx, N - dx), np.minimum(dy, N - dy)


def boxes_containing_count(v, k: int, n: int | None = None) -> int:
    """Number of side-``2**k`` lattice boxes containing ``v`` (always ``4**k``)."""
    _check_level(k, n)
    return 4**k


def boxes_containing(v, k: int, N: int) -> list[Vertex]:
    """Lower-left corners (reduced mod ``N``) of the torus boxes of side ``2**k`` containing ``v``."""
    n = log2_exact(N)
    _check_level(k, n)
    _check_vertex(v, N)
    side = 1 << k
    return [
        Vertex((v[0] - i) % N, (v[1] - j) % N)
        for i in range(side)
        for j in range(side)
    ]


def box_contains(corner, k: int, v, N: int) -> bool:
    """Whether the torus box with lower-left ``corner`` and side ``2**k`` contains ``v``."""
    side = 1 << k
    return (v[0] - corner[0]) % N < side and (v[1] - corner[1]) % N < side


def dyadic_block(v, k: int, n: int | None = None) -> DyadicBlock:
    """The unique dyadic block of level ``k`` containing ``v``."""
    _check_level(k, n)
    return DyadicBlock(k, Vertex((v[0] >> k) << k, (v[1] >> k) << k))


def split_level(u, v) -> int:
    """Smallest ``k`` for which ``u`` and ``v`` share their level-``k`` dyadic block.

    The vertices then have a common ancestor at generation ``n - k`` of the
    associated 4-ary tree. Raises ``ValueError`` for ``u == v`` (no split).
    """
    if u[0] == v[0] and u[1] == v[1]:
        raise ValueError("split_level undefined for identical vertices")
    return max((u[0] ^ v[0]).bit_length(), (u[1] ^ v[1]).bit_length())


def split_level_array(ux, uy, vx, vy) -> np.ndarray:
    """Vectorised ``split_level``; identical vertices map to 0."""
    a = np.bitwise_xor(np.asarray(ux), np.asarray(vx))
    b = np.bitwise_xor(np.asarray(uy), np.asarray(vy))
    # bit_length(max(a, b)) == bit_length(a | b)
    m = np.array(a | b, dtype=np.int64)
    out = np.zeros(m.shape, dtype=np.int64)
    while np.any(m):
        nz = m > 0
        out[nz] += 1
        m >>= 1
    return out


def parity_mask(N: int, even: bool = True) -> np.ndarray:
    x, y = np.indices((N, N))
    return ((x + y) % 2 == 0) == even
