"""Throughput bounds for single-class closed networks.

Every method returns a :class:`BoundInterval` on the system throughput X(N).
Methods that need brackets on X(N-1) (BJB, PB, GB) accept them explicitly
and otherwise derive them from cheaper bounds one population down.

Notation follows the usual bounding literature: ``L_i`` loadings, ``L`` their
sum, ``Z`` the aggregated think time, ``N`` the population.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundDegeneracyError, ModelError, UnsupportedStationError
from .model import ClosedModel, RoutingSpec, visit_ratios

log = logging.getLogger(__name__)

ABA, BJB, PBH, KRIZ, AE, GB, GSB, PB = "ABA", "BJB", "PBH", "KRIZ", "AE", "GB", "GSB", "PB"
METHODS = (ABA, BJB, PBH, KRIZ, AE, GB, GSB, PB)
PBH_MAX_LEVEL = 4
AE_EPS = 1e-6
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class BoundInterval:
    lower: float
    upper: float
    method: str
    level: int | None = None
    population: int = 0

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if lo < 0 or hi < 0:
            raise ValueError(f"negative bound ({lo}, {hi})")
        if lo > hi:
            # identical closed forms evaluated along different paths
            if lo - hi > 1e-12 * max(hi, 1e-300):
                raise ValueError(f"lower bound {lo!r} exceeds upper bound {hi!r}")
            lo = hi
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def label(self) -> str:
        return self.method if self.level is None else f"{self.method}({self.level})"

    def contains(self, x: float, tol: float = 1e-9) -> bool:
        return self.lower - tol * abs(x) <= x <= self.upper + tol * abs(x)

    def within(self, other: "BoundInterval", tol: float = 1e-12) -> bool:
        slack = tol * max(abs(other.upper), 1.0)
        return self.lower >= other.lower - slack and self.upper <= other.upper + slack

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class BoundModelView:
    """What the bounding methods need to know about a single-class model."""

    loadings: np.ndarray
    think_time: float
    population: int
    servers: np.ndarray | None = None

    def __post_init__(self):
        L = np.asarray(self.loadings, dtype=float)
        object.__setattr__(self, "loadings", L)
        s = np.ones_like(L) if self.servers is None else np.asarray(self.servers, dtype=float)
        object.__setattr__(self, "servers", s)
        object.__setattr__(self, "think_time", float(self.think_time))
        if L.ndim != 1 or L.size == 0 or np.any(L < 0) or not np.any(L > 0):
            raise ModelError("bounds need a non-empty, non-negative loading vector")

    @classmethod
    def from_model(cls, model: ClosedModel) -> "BoundModelView":
        bad = [s.id for s in model.stations if s.is_load_dependent]
        if bad:
            raise UnsupportedStationError(
                f"bounds support fixed-rate and delay stations only ({', '.join(bad)})"
            )
        L = [s.demand for s in model.stations if s.is_fixed]
        return cls(np.array(L), model.delay_demand, model.population)

    @classmethod
    def from_routing(cls, spec: RoutingSpec, population: int, reference_station: int = 0):
        """Loadings from relative throughputs: L_i = pi_i * xbar_i (pi_ref = 1)."""
        pi = visit_ratios(spec, reference_station)
        inf = np.array([math.isinf(m) for m in spec.servers])
        L = pi * spec.service_times
        return cls(L[~inf], float(L[inf].sum()), population, np.array(spec.servers)[~inf])

    def with_population(self, n: int) -> "BoundModelView":
        return BoundModelView(self.loadings, self.think_time, n, self.servers)

    @property
    def total(self) -> float:
        return float(self.loadings.sum())

    @property
    def l_max(self) -> float:
        return float(self.loadings.max())

    @property
    def l_avg(self) -> float:
        return self.total / self.loadings.size

    @property
    def m_max(self) -> int:
        return int(np.sum(self.loadings >= self.l_max * (1 - _TIE_RTOL)))

    @property
    def relative_utilization(self) -> np.ndarray:
        """Per-station utilisation relative to the busiest station (max = 1)."""
        u = self.loadings / self.servers
        return u / u.max()

    @property
    def bottleneck(self) -> int:
        return int(np.argmax(self.loadings / self.servers))

    def bottleneck_set(self, eps: float = AE_EPS) -> np.ndarray:
        return np.flatnonzero(self.relative_utilization >= 1.0 - eps)

    @property
    def x_max(self) -> float:
        """Saturation throughput min_i s_i / L_i."""
        pos = self.loadings > 0
        return float(np.min(self.servers[pos] / self.loadings[pos]))

    @property
    def single_server(self) -> bool:
        return bool(np.all(self.servers == 1))


def _require_single_server(view: BoundModelView, method: str) -> None:
    if not view.single_server:
        raise UnsupportedStationError(f"{method} assumes single-server queues")


def _aba_values(view: BoundModelView, n: int) -> tuple[float, float]:
    if n <= 0:
        return 0.0, 0.0
    Z, L = view.think_time, view.total
    return n / (Z + L * n), min(n / (Z + L), view.x_max)


def aba(view: BoundModelView) -> BoundInterval:
    """Asymptotic bounds: N/(Z+LN) <= X(N) <= min(N/(Z+L), X_max)."""
    lo, hi = _aba_values(view, view.population)
    return BoundInterval(lo, hi, ABA, None, view.population)


def _bjb_values(view, n, x_plus, x_minus):
    Z, L = view.think_time, view.total
    lo = n / (Z + L + view.l_max * max(n - 1 - Z * x_minus, 0.0))
    hi = min(n / (Z + L + view.l_avg * max(n - 1 - Z * x_plus, 0.0)), view.x_max)
    return lo, hi


def bjb(view: BoundModelView, x_plus=None, x_minus=None, refine: int = 0) -> BoundInterval:
    """Balanced job bounds with think time.

    ``x_plus`` / ``x_minus`` bracket X(N-1).  By default they come from ABA
    at N-1; each ``refine`` step replaces them by BJB at N-1 instead.
    """
    _require_single_server(view, BJB)
    N = view.population
    if N <= 0:
        return BoundInterval(0.0, 0.0, BJB, None, N)
    if x_plus is None or x_minus is None:
        if refine > 0:
            prev = bjb(view.with_population(N - 1), refine=refine - 1)
            xm, xp = prev.lower, prev.upper
        else:
            xm, xp = _aba_values(view, N - 1)
        x_plus = xp if x_plus is None else x_plus
        x_minus = xm if x_minus is None else x_minus
    lo, hi = _bjb_values(view, N, x_plus, x_minus)
    return BoundInterval(lo, hi, BJB, None, N)


def _pbh_residences(view: BoundModelView, level: int, optimistic: bool) -> np.ndarray:
    """Per-station residence-time table R[n, k] for n = 0..N at ``level``."""
    L = view.loadings
    Z = view.think_time
    K = L.size
    N = view.population
    n = np.arange(N + 1, dtype=float)
    R = np.zeros((N + 1, K))
    if optimistic:
        a = np.maximum(n * view.l_max - Z, view.total)
        R[1:] = (a[1:] / K)[:, None]
    else:
        R[1:, view.bottleneck] = n[1:] * view.total
    for _ in range(level):
        new = np.zeros_like(R)
        if N >= 1:
            new[1] = L
        if N >= 2:
            prev = R[1:N]  # populations 1..N-1
            share = prev / (Z + prev.sum(axis=1))[:, None]
            new[2:] = L * (1.0 + n[1:N, None] * share)
        R = new
    return R


def pbh(view: BoundModelView, level: int, direction: str = "optimistic",
        max_level: int = PBH_MAX_LEVEL) -> float:
    """One side of the performance bound hierarchy at ``level``.

    Level 0 is the asymptotic bound; every further level feeds the previous
    level's per-station residence times at N-1 through the arrival theorem.
    Returns an upper throughput bound for ``"optimistic"`` and a lower one for
    ``"pessimistic"``.
    """
    _require_single_server(view, PBH)
    if level < 0 or level > max_level:
        raise ValueError(f"PBH level {level} outside supported range 0..{max_level}")
    if direction not in ("optimistic", "pessimistic"):
        raise ValueError(f"unknown direction {direction!r}")
    N = view.population
    if N <= 0:
        return 0.0
    optimistic = direction == "optimistic"
    R = _pbh_residences(view, level, optimistic)[N].sum()
    x = N / (view.think_time + R)
    return min(x, view.x_max) if optimistic else x


def pbh_interval(view: BoundModelView, level: int, max_level: int = PBH_MAX_LEVEL) -> BoundInterval:
    lo = pbh(view, level, "pessimistic", max_level)
    hi = pbh(view, level, "optimistic", max_level)
    return BoundInterval(lo, hi, PBH, level, view.population)


def kriz(view: BoundModelView, iterations: int) -> BoundInterval:
    """Iterated balanced-job bounds with delay servers.

    Lower: Y_i(n) = n / (r + (n-1 - Z Y_{i-1}(n-1)) t'), starting from 0.
    Upper: the same with the average loading t'' and capped at 1/t',
    starting from the asymptotic bound.
    """
    _require_single_server(view, KRIZ)
    if iterations < 1:
        raise ValueError("Kriz bounds need at least one iteration")
    N = view.population
    if N <= 0:
        return BoundInterval(0.0, 0.0, KRIZ, iterations, N)
    Z = view.think_time
    r = Z + view.total
    t1, t2 = view.l_max, view.l_avg
    n = np.arange(N + 1, dtype=float)
    lower = np.zeros(N + 1)
    upper = np.minimum(n / r, 1.0 / t1)
    for _ in range(iterations):
        new_lo = np.zeros(N + 1)
        new_hi = np.zeros(N + 1)
        new_lo[1:] = n[1:] / (r + np.maximum(n[1:] - 1 - Z * lower[:-1], 0.0) * t1)
        new_hi[1:] = np.minimum(
            n[1:] / (r + np.maximum(n[1:] - 1 - Z * upper[:-1], 0.0) * t2), 1.0 / t1
        )
        lower, upper = new_lo, new_hi
    return BoundInterval(lower[N], upper[N], KRIZ, iterations, N)


def ae_bound(view: BoundModelView, eps: float = AE_EPS) -> BoundInterval:
    """Multi-bottleneck asymptotic upper bound.

    The saturation cap is shrunk by (1 - 1/N)^(|B|-1) where B is the set of
    stations whose relative utilisation is within ``eps`` of the maximum.  It
    is an asymptotic result: with several bottlenecks and little think time it
    can undercut the true throughput at small N.
    """
    N = view.population
    lo, hi_aba = _aba_values(view, N)
    if N <= 0:
        return BoundInterval(0.0, 0.0, AE, None, N)
    nb = len(view.bottleneck_set(eps))
    cap = view.x_max * (1.0 - 1.0 / N) ** (nb - 1)
    hi = min(N / (view.think_time + view.total), cap)
    lo = min(lo, hi)
    return BoundInterval(lo, hi, AE, None, N)


def _geometric_sum(y: np.ndarray, n: int) -> np.ndarray:
    """sum_{j=1}^n y^j, elementwise."""
    out = np.empty_like(y)
    one = np.isclose(y, 1.0, rtol=0.0, atol=1e-15)
    yy = y[~one]
    out[~one] = yy * (1.0 - yy**n) / (1.0 - yy)
    out[one] = float(n)
    return out


@dataclass(frozen=True)
class GeometricBounds:
    q_lower: np.ndarray
    q_upper: np.ndarray
    gb: BoundInterval
    gsb: BoundInterval


def queue_length_bounds(view: BoundModelView, n: int, x_plus: float, x_minus: float):
    """Per-station (Q^-(n), Q^+(n)) given X^- <= X(n) <= X^+."""
    L = view.loadings
    Z = view.think_time
    nb = L < view.l_max * (1 - _TIE_RTOL)
    qlo = np.zeros_like(L)
    qhi = np.zeros_like(L)
    if n <= 0:
        return qlo, qhi
    y = L[nb] * n / (Z + view.total + view.l_max * n)
    qlo[nb] = _geometric_sum(y, n)
    qhi[nb] = _geometric_sum(L[nb] * x_plus, n)
    mm = view.m_max
    qlo[~nb] = max(n - Z * x_plus - qhi[nb].sum(), 0.0) / mm
    qhi[~nb] = max(n - Z * x_minus - qlo[nb].sum(), 0.0) / mm
    return qlo, qhi


def geometric_bounds(view: BoundModelView, x_plus=None, x_minus=None) -> GeometricBounds:
    """Geometric queue-length bounds and the GB / GSB throughput intervals.

    ``x_plus`` / ``x_minus`` bracket X(N) (default: BJB).  Queue lengths of
    non-bottleneck stations at N-1 are bounded by geometric sums; the
    throughput follows from the exact relation

        X(N) = N / (Z + L + L_max (N-1 - Z X(N-1)) - sum_i (L_max - L_i) Q_i(N-1)).

    GB brackets X(N-1) directly; GSB uses X(N-1) <= X(N) <= N/(N-1) X(N-1)
    and solves the resulting quadratic.
    """
    _require_single_server(view, GB)
    N = view.population
    if N <= 0:
        z = np.zeros_like(view.loadings)
        return GeometricBounds(z, z, BoundInterval(0, 0, GB, None, 0), BoundInterval(0, 0, GSB, None, 0))
    if x_plus is None or x_minus is None:
        base = bjb(view)
        x_plus = base.upper if x_plus is None else x_plus
        x_minus = base.lower if x_minus is None else x_minus
    qlo_N, qhi_N = queue_length_bounds(view, N, x_plus, x_minus)
    qlo, qhi = queue_length_bounds(view, N - 1, x_plus, (N - 1) / N * x_minus)

    L, Z, Lm = view.loadings, view.think_time, view.l_max
    d_lo = float(np.dot(Lm - L, qlo))
    d_hi = float(np.dot(Lm - L, qhi))
    base = Z + view.total + Lm * (N - 1)
    xm_prev = (N - 1) / N * x_minus
    gb_lo = N / (base - Z * Lm * xm_prev - d_lo)
    gb_hi = min(N / (base - Z * Lm * x_plus - d_hi), view.x_max)
    # the brackets are valid by assumption, so never report anything wider
    gb = BoundInterval(max(gb_lo, x_minus), min(gb_hi, x_plus), GB, None, N)

    try:
        b_lo, b_hi = base - d_lo, base - d_hi
        disc_lo = b_lo * b_lo - 4 * Z * Lm * (N - 1)
        disc_hi = b_hi * b_hi - 4 * Z * Lm * N
        if disc_lo < 0 or disc_hi < 0:
            raise BoundDegeneracyError(f"negative discriminant in GSB at N={N}")
        gsb_lo = 2 * N / (b_lo + math.sqrt(disc_lo))
        gsb_hi = min(2 * N / (b_hi + math.sqrt(disc_hi)), view.x_max)
        gsb = BoundInterval(max(gsb_lo, x_minus), min(gsb_hi, x_plus), GSB, None, N)
    except BoundDegeneracyError as exc:
        log.warning("%s; falling back to BJB", exc)
        gsb = bjb(view)
    return GeometricBounds(qlo_N, qhi_N, gb, gsb)


def proportional_bounds(view: BoundModelView, x_plus=None, x_minus=None) -> BoundInterval:
    """Bounds assuming queue lengths proportional to powers of the loadings.

    ``x_plus`` / ``x_minus`` bracket X(N-1) (default: ABA at N-1).
    """
    _require_single_server(view, PB)
    N = view.population
    if N <= 0:
        return BoundInterval(0.0, 0.0, PB, None, N)
    if x_plus is None or x_minus is None:
        xm, xp = _aba_values(view, N - 1)
        x_plus = xp if x_plus is None else x_plus
        x_minus = xm if x_minus is None else x_minus
    L, Z = view.loadings, view.think_time
    r = L / view.l_max
    # sum L^N / sum L^(N-1) without overflow
    hi_share = view.l_max * float(np.sum(r**N)) / float(np.sum(r ** (N - 1)))
    lo = N / (Z + view.total + hi_share * max(N - 1 - Z * x_minus, 0.0))
    lo_share = float(np.sum(L * L)) / view.total
    hi = min(N / (Z + view.total + lo_share * max(N - 1 - Z * x_plus, 0.0)), view.x_max)
    return BoundInterval(lo, hi, PB, None, N)


def pbh_error_measure(interval: BoundInterval) -> float:
    """Relative half-width (upper - lower) / (upper + lower) in percent."""
    s = interval.upper + interval.lower
    if s == 0:
        raise ValueError("error measure undefined for a zero interval")
    return (interval.upper - interval.lower) / s * 100.0


def all_bounds(view: BoundModelView, methods=METHODS, pbh_levels: int = 3,
               kriz_iterations: int = 5) -> list[BoundInterval]:
    """Every requested method at the view's population (PBH 0..levels, Kriz 1..iterations)."""
    out = []
    for m in methods:
        m = m.upper()
        if m == ABA:
            out.append(aba(view))
        elif m == BJB:
            out.append(bjb(view))
        elif m == PBH:
            out.extend(pbh_interval(view, i) for i in range(pbh_levels + 1))
        elif m == KRIZ:
            out.extend(kriz(view, i) for i in range(1, kriz_iterations + 1))
        elif m == AE:
            out.append(ae_bound(view))
        elif m == GB:
            out.append(geometric_bounds(view).gb)
        elif m == GSB:
            out.append(geometric_bounds(view).gsb)
        elif m == PB:
            out.append(proportional_bounds(view))
        else:
            raise ValueError(f"unknown bound method {m!r}")
    return out
