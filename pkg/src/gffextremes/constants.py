"""Centering constants for the GFF, MBRW and BRW maxima.

``log`` is the natural logarithm throughout; base-2 logarithms appear only in
the covariance profiles (see :mod:`gffextremes.green` and
:func:`gffextremes.samplers.mbrw_cov_exact`).
"""

import math

C_STAR = 2.0 * math.sqrt(math.log(2.0))
C_BAR = 1.5 / C_STAR
RIGHT_TAIL_EXPONENT = math.sqrt(2.0 * math.pi)
# Cov(GFF) ~ GFF_SCALE**2 * Cov(MBRW) at matching scales
GFF_SCALE = math.sqrt(2.0 * math.log(2.0) / math.pi)
MN_SLOPE = 2.0 * math.sqrt(2.0 / math.pi)


def m_N(N: float) -> float:
    """Leading-order expected GFF maximum ``2 sqrt(2/pi) (log N - 3/8 log log N)``."""
    if N < 3:
        raise ValueError("m_N needs N >= 3 (log log N > 0)")
    L = math.log(N)
    return MN_SLOPE * (L - 0.375 * math.log(L))


def m_tilde(N: float) -> float:
    """MBRW-scale centering ``sqrt(pi / (2 log 2)) * m_N``."""
    return m_N(N) / GFF_SCALE


def t_n(n: float) -> float:
    """BRW maximum centering ``c* n - c_bar log n`` for ``n >= 1``."""
    if n < 1:
        raise ValueError("t_n needs n >= 1")
    return C_STAR * n - C_BAR * math.log(n)
