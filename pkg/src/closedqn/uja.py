"""Single-class Unbalanced Job Approximation (UJA).

The subnetwork generating function is expanded around the mean demand X0.
Truncating the correction after the E_{j+1} moment gives V_j(k) and the
order-j throughput ``T_j(k) = V_j(k-1) / V_j(k)``:

    V_j(k) = V_0(k) * [1 + sum_{i=2}^{j+1} (E_i / i) prod_{l<i} (k-l)/(M+l)]

with ``E_i = sum_n e_n**i`` and ``e_n = (X_n - X0) / X0``.  Order 0 is the
balanced (optimistic BJB) throughput.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .aggregate import ThroughputCharacteristic, uja_source
from .errors import ModelError, SeriesDivergenceError

DEFAULT_J_MAX = 8
DEFAULT_ORDER = 2


@dataclass(frozen=True)
class DemandMoments:
    M: int
    X0: float
    e: np.ndarray
    E: np.ndarray  # E[j] = sum e_n**j for j = 0..j_max
    c: float
    beta: float

    @property
    def j_max(self) -> int:
        return len(self.E) - 1


def moments(X, j_max: int = DEFAULT_J_MAX) -> DemandMoments:
    X = np.asarray(X, dtype=float)
    if X.ndim != 1 or X.size == 0:
        raise ModelError("demand vector must be a non-empty 1-D sequence")
    if np.any(X <= 0):
        raise ModelError("all demands must be > 0; drop zero-demand stations first")
    M = X.size
    X0 = float(X.mean())
    e = (X - X0) / X0
    E = np.array([np.sum(e**j) for j in range(j_max + 1)])
    c = math.sqrt(E[2] / M) if j_max >= 2 else 0.0
    beta = E[3] / (M * c**3) if c > 0 and j_max >= 3 else 0.0
    return DemandMoments(M, X0, e, E, c, beta)


def t0(m: DemandMoments, k: int) -> float:
    """Throughput of M balanced stations with the mean demand."""
    if k < 1:
        raise ValueError("population must be >= 1")
    return k / ((m.M + k - 1) * m.X0)


def _correction(m: DemandMoments, k: int, order: int) -> float:
    """R_j(k): the truncated bracket minus one."""
    total = 0.0
    for i in range(2, order + 2):
        prod = 1.0
        for l in range(i):
            if k - l <= 0:
                prod = 0.0
                break
            prod *= (k - l) / (m.M + l)
        total += m.E[i] / i * prod
    return total


def t_series(m: DemandMoments, k: int, order: int = DEFAULT_ORDER) -> float:
    """Order-j UJA throughput T_j(k) from the ratio of truncated series."""
    if order < 0:
        raise ValueError("order must be >= 0")
    if order + 1 > m.j_max:
        raise ValueError(f"order {order} needs moments up to {order + 1}; j_max is {m.j_max}")
    base = t0(m, k)
    if order == 0:
        return base
    num = 1.0 + _correction(m, k - 1, order)
    den = 1.0 + _correction(m, k, order)
    if num <= 0 or den <= 0:
        raise SeriesDivergenceError(order, k)
    return base * num / den


def t1_closed(m: DemandMoments, k: int) -> float:
    """First-order throughput in terms of the coefficient of variation."""
    c2 = m.c**2
    den = 1.0 + k * (k - 1) / (2 * (m.M + 1)) * c2
    if den <= 0 or 1.0 + (k - 1) * (k - 2) / (2 * (m.M + 1)) * c2 <= 0:
        raise SeriesDivergenceError(1, k)
    return t0(m, k) * (1.0 - (k - 1) / (m.M + 1) * c2 / den)


def t2_closed(m: DemandMoments, k: int) -> float:
    """Second-order throughput in terms of variation c and skewness beta."""
    M, c, b = m.M, m.c, m.beta
    c2 = c * c
    den = 1.0 + k * (k - 1) / (M + 1) * c2 * (0.5 + (k - 2) / (3 * (M + 2)) * c * b)
    prev = 1.0 + (k - 1) * (k - 2) / (M + 1) * c2 * (0.5 + (k - 3) / (3 * (M + 2)) * c * b)
    if den <= 0 or prev <= 0:
        raise SeriesDivergenceError(2, k)
    num = (k - 1) / (M + 1) * c2 * (1.0 + (k - 2) / (M + 2) * c * b)
    return t0(m, k) * (1.0 - num / den)


def uja_characteristic(X, order: int = DEFAULT_ORDER, k_max: int = 1) -> ThroughputCharacteristic:
    """Order-j throughput characteristic, capped at 1/max(X) and made non-decreasing."""
    X = np.asarray(X, dtype=float)
    m = moments(X, max(DEFAULT_J_MAX, order + 1))
    cap = 1.0 / float(X.max())
    T = []
    best = 0.0
    for k in range(1, k_max + 1):
        t = min(t_series(m, k, order), cap)
        best = max(best, t)
        T.append(best)
    return ThroughputCharacteristic(tuple(T), uja_source(order))
