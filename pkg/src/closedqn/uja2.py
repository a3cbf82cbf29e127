"""Two-class UJA: balanced aggregate and first-order unbalanced correction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, SeriesDivergenceError


@dataclass(frozen=True)
class TwoClassMoments:
    M: int
    X0: float
    Y0: float
    E: dict  # (i, j) -> sum_n ex_n**i * ey_n**j, for i + j <= 2
    c_x: float
    c_y: float
    c_xy: float


def two_class_moments(X, Y) -> TwoClassMoments:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.shape != Y.shape or X.ndim != 1 or X.size == 0:
        raise ModelError("X and Y must be equal-length non-empty demand vectors")
    if np.any(X <= 0) or np.any(Y <= 0):
        raise ModelError("all demands must be > 0")
    M = X.size
    X0, Y0 = float(X.mean()), float(Y.mean())
    ex, ey = (X - X0) / X0, (Y - Y0) / Y0
    E = {(i, j): float(np.sum(ex**i * ey**j)) for i in range(3) for j in range(3) if i + j <= 2}
    c_x = math.sqrt(E[2, 0] / M)
    c_y = math.sqrt(E[0, 2] / M)
    c_xy = E[1, 1] / (M * c_x * c_y) if c_x > 0 and c_y > 0 else 0.0
    return TwoClassMoments(M, X0, Y0, E, c_x, c_y, c_xy)


def balanced_two_class(M: int, X0: float, Y0: float, K: int, L: int) -> tuple[float, float]:
    """Class throughputs of M balanced stations holding K and L jobs."""
    if K < 0 or L < 0 or K + L == 0:
        raise ValueError("need K, L >= 0 and K + L >= 1")
    d = M + K + L - 1
    return K / (d * X0), L / (d * Y0)


def _bracket(m: TwoClassMoments, K: int, L: int) -> float:
    if K < 0 or L < 0:
        return 1.0
    s = K * (K - 1) * m.E[2, 0] + L * (L - 1) * m.E[0, 2] + 2 * K * L * m.E[1, 1]
    return 1.0 + s / (2 * m.M * (m.M + 1))


def uja2_first_order(X, Y, K: int, L: int) -> tuple[float, float]:
    """First-order two-class throughputs T_1 = T_0 * V_1(pop - 1_class) / V_1(pop)."""
    m = two_class_moments(X, Y)
    t0x, t0y = balanced_two_class(m.M, m.X0, m.Y0, K, L)
    full = _bracket(m, K, L)
    if full <= 0:
        raise SeriesDivergenceError(1, (K, L))
    out = []
    for t0, pop, minus in ((t0x, K, (K - 1, L)), (t0y, L, (K, L - 1))):
        if pop == 0:
            out.append(0.0)
            continue
        b = _bracket(m, *minus)
        if b <= 0:
            raise SeriesDivergenceError(1, (K, L))
        out.append(t0 * b / full)
    return out[0], out[1]
