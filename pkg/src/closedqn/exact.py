"""Exact solvers for closed product-form networks.

Four routes to the same numbers:

* :func:`oracle_enumerate` sums the product-form terms over every job
  distribution.  It is slow and only used as ground truth.
* :func:`convolution` builds the normalisation constants station by station.
* :func:`mva` runs the arrival-theorem recursion on mean values.
* :func:`convolution_two_class` / :func:`mva_multichain` handle two or more
  job classes.

Normalisation constants grow or shrink geometrically with the population, so
tables are kept as ``mantissa * 2**exponent`` with one exponent per
population.  Rescaling only ever multiplies by powers of two, so it is exact.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, StateSpaceTooLarge, UnsupportedStationError
from .model import ClosedModel, MultichainModel, require_valid

ORACLE_STATE_LIMIT = 10**7
LATTICE_LIMIT = 10**7

@dataclass(frozen=True)
class NormalizationTable:
    """G values stored as ``mantissa * 2**exponent`` (elementwise).

    Single-class tables are 1-D (index k); two-class tables are 2-D
    (index k, l).
    """

    mantissa: np.ndarray
    exponent: np.ndarray

    def value(self, *idx) -> float:
        return math.ldexp(float(self.mantissa[idx]), int(self.exponent[idx]))

    def log2(self, *idx) -> float:
        m = float(self.mantissa[idx])
        if m <= 0.0:
            return -math.inf
        return math.log2(m) + int(self.exponent[idx])

    def ratio(self, num, den) -> float:
        """G(num) / G(den) evaluated in scaled space."""
        num = num if isinstance(num, tuple) else (num,)
        den = den if isinstance(den, tuple) else (den,)
        return math.ldexp(
            float(self.mantissa[num]) / float(self.mantissa[den]),
            int(self.exponent[num]) - int(self.exponent[den]),
        )

    def values(self) -> np.ndarray:
        """Unscaled G values (may overflow to inf for huge models)."""
        with np.errstate(over="ignore"):
            return np.ldexp(self.mantissa, self.exponent)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mantissa.shape


@dataclass(frozen=True)
class SolverResult:
    """Exact or approximate metrics of a single-class closed model.

    ``throughput[k]`` is the system throughput with k jobs (index 0 is 0).
    Per-station arrays refer to the full population K.
    """

    station_ids: tuple[str, ...]
    throughput: np.ndarray
    utilization: np.ndarray
    queue_length: np.ndarray
    residence_time: np.ndarray
    think_time: float = 0.0

    @property
    def population(self) -> int:
        return len(self.throughput) - 1

    @property
    def system_throughput(self) -> float:
        return float(self.throughput[-1])


@dataclass(frozen=True)
class MultichainResult:
    """Exact multichain metrics at the full population vector.

    Arrays indexed ``[station, chain]``; ``throughput`` indexed by chain.
    """

    station_ids: tuple[str, ...]
    throughput: np.ndarray
    utilization: np.ndarray
    queue_length: np.ndarray
    residence_time: np.ndarray


def _pow2_exponent(values) -> int:
    vals = [v for v in values if v > 0]
    if not vals:
        return 0
    return int(round(math.log2(max(vals))))


def _renormalize(G: np.ndarray, e: np.ndarray) -> None:
    """Move each entry's binary exponent into ``e`` (exact)."""
    m, x = np.frexp(G)
    nz = G != 0
    G[nz] = m[nz]
    e[nz] += x[nz]


def _fold_fixed(G: np.ndarray, e: np.ndarray, x: float) -> None:
    for k in range(1, len(G)):
        G[k] = G[k] + math.ldexp(x, int(e[k - 1] - e[k])) * G[k - 1]
    _renormalize(G, e)


def _is_factors(z: float, K: int) -> np.ndarray:
    F = np.empty(K + 1)
    F[0] = 1.0
    for k in range(1, K + 1):
        F[k] = F[k - 1] * z / k
    return F


def _factor_table(x: float, rate, K: int) -> tuple[np.ndarray, np.ndarray]:
    """F(a) = x^a / (rate(1)...rate(a)) as mantissa/exponent pairs."""
    Fm = np.zeros(K + 1)
    fe = np.zeros(K + 1, dtype=np.int64)
    Fm[0] = 1.0
    for a in range(1, K + 1):
        m, ex = math.frexp(Fm[a - 1] * (x / rate(a)))
        Fm[a] = m
        fe[a] = fe[a - 1] + ex
    return Fm, fe


def _fold_full(G: np.ndarray, e: np.ndarray, Fm: np.ndarray, fe: np.ndarray):
    """Full convolution out(k) = sum_a F(a) G(k-a) on scaled operands."""
    K = len(G) - 1
    out = np.zeros(K + 1)
    eo = e.copy()
    for k in range(K + 1):
        mant = Fm[: k + 1] * G[k::-1]
        ex = fe[: k + 1] + e[k::-1]
        nz = mant != 0
        if not nz.any():
            continue
        top = int(ex[nz].max())
        out[k] = float(np.sum(np.ldexp(mant[nz], ex[nz] - top)))
        eo[k] = top
    _renormalize(out, eo)
    return out, eo


def _convolve(stations, delay_demand: float, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Scaled G'(0..K) and per-population exponents e with G(k) = G'(k) 2^e(k).

    Fixed-rate stations are folded largest demand first with e(k) seeded at
    k log2(X_max), so the dominant term stays near one and smaller stations
    can only underflow in negligible places.
    """
    fixed = sorted((s for s in stations if s.is_fixed), key=lambda s: -s.demand)
    ld = [s for s in stations if s.is_load_dependent]
    G = np.zeros(K + 1)
    G[0] = 1.0
    lam = math.log2(fixed[0].demand) if fixed and fixed[0].demand > 0 else 0.0
    e = np.rint(lam * np.arange(K + 1)).astype(np.int64)
    for st in fixed:
        _fold_fixed(G, e, st.demand)
    if delay_demand > 0:
        G, e = _fold_full(G, e, *_factor_table(delay_demand, float, K))
    for st in ld:
        G, e = _fold_full(G, e, *_factor_table(st.demand, st.rate, K))
    return G, e


def _table_1d(G: np.ndarray, e: np.ndarray) -> NormalizationTable:
    return NormalizationTable(G.copy(), e.copy())


def convolution(model: ClosedModel) -> NormalizationTable:
    """Normalisation constants G(0..K) by the convolution algorithm.

    Fixed-rate stations use ``G_n(k) = G_{n-1}(k) + X_n G_n(k-1)``; delay
    stations and the think time are folded as one infinite-server factor;
    load-dependent stations are folded last by full convolution.
    """
    require_valid(model)
    G, e = _convolve(model.stations, model.delay_demand, model.population)
    return _table_1d(G, e)


def _complement_table(model: ClosedModel, skip: int) -> NormalizationTable:
    rest = [st for i, st in enumerate(model.stations) if i != skip]
    G, e = _convolve(rest, model.delay_demand, model.population)
    return _table_1d(G, e)


def oracle_enumerate(model: ClosedModel) -> NormalizationTable:
    """G(0..K) by explicit summation over every distribution of jobs.

    Each station (and the think time, as an infinite server) contributes
    its product-form factor.  Exponential in size; guarded.
    """
    require_valid(model)
    K = model.population
    factors = []
    for st in model.stations:
        x = st.demand
        if st.is_fixed:
            factors.append([x**k for k in range(K + 1)])
        elif st.is_delay:
            factors.append([x**k / math.factorial(k) for k in range(K + 1)])
        else:
            f = [1.0]
            for k in range(1, K + 1):
                f.append(x**k / math.prod(st.rate(j) for j in range(1, k + 1)))
            factors.append(f)
    if model.think_time > 0:
        z = model.think_time
        factors.append([z**k / math.factorial(k) for k in range(K + 1)])
    n = len(factors)
    states = math.comb(K + n - 1, n - 1)
    if states > ORACLE_STATE_LIMIT:
        raise StateSpaceTooLarge(
            f"{states} states exceed the enumeration limit {ORACLE_STATE_LIMIT}; use convolution"
        )
    G = np.empty(K + 1)
    for k in range(K + 1):
        terms = []
        # stars and bars: bar positions split k jobs over n stations
        for bars in itertools.combinations(range(k + n - 1), n - 1):
            prev = -1
            prod = 1.0
            for i, b in enumerate(bars + (k + n - 1,)):
                prod *= factors[i][b - prev - 1]
                prev = b
            terms.append(prod)
        G[k] = math.fsum(terms)
    return NormalizationTable(G, np.zeros(K + 1, dtype=np.int64))


def metrics_from_G(model: ClosedModel, table: NormalizationTable) -> SolverResult:
    """Throughput, utilisation, queue length and residence time from G.

    Delay stations report their mean number of busy servers as utilisation;
    load-dependent stations report the probability of being non-empty.
    """
    K = model.population
    ids = tuple(model.station_ids)
    n = len(model.stations)
    if K == 0:
        z = np.zeros(n)
        return SolverResult(ids, np.zeros(1), z, z.copy(), z.copy(), model.think_time)
    T = np.zeros(K + 1)
    for k in range(1, K + 1):
        T[k] = table.ratio(k - 1, k)
    TK = T[K]
    U = np.empty(n)
    Q = np.empty(n)
    for i, st in enumerate(model.stations):
        x = st.demand
        if st.is_fixed:
            U[i] = x * TK
            # X^j G(K-j)/G(K) = prod_{i<j} X T(K-i)
            term, q = 1.0, 0.0
            for j in range(1, K + 1):
                term *= x * T[K - j + 1]
                q += term
            Q[i] = q
        elif st.is_delay:
            U[i] = Q[i] = x * TK
        else:
            comp = _complement_table(model, i)
            lgK = table.log2(K)
            logp = np.full(K + 1, -math.inf)
            lf = 0.0
            for j in range(K + 1):
                if j > 0:
                    lf += math.log2(x) - math.log2(st.rate(j)) if x > 0 else -math.inf
                logp[j] = lf + comp.log2(K - j) - lgK
            p = np.exp2(logp)
            Q[i] = float(np.dot(np.arange(K + 1), p))
            U[i] = 1.0 - p[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        R = np.where(TK > 0, Q / TK, 0.0)
    return SolverResult(ids, T, U, Q, R, model.think_time)


def solve_convolution(model: ClosedModel) -> SolverResult:
    return metrics_from_G(model, convolution(model))


def solve_oracle(model: ClosedModel) -> SolverResult:
    return metrics_from_G(model, oracle_enumerate(model))


def mva(model: ClosedModel) -> SolverResult:
    """Exact single-class MVA for fixed-rate and delay stations plus think time."""
    require_valid(model)
    bad = [s.id for s in model.stations if s.is_load_dependent]
    if bad:
        raise UnsupportedStationError(
            f"mva does not support load-dependent stations ({', '.join(bad)}); use convolution"
        )
    L = model.demands
    queueing = np.array([s.is_fixed for s in model.stations])
    Z = model.think_time
    K = model.population
    T = np.zeros(K + 1)
    Q = np.zeros(len(L))
    W = L.copy()
    for n in range(1, K + 1):
        W = np.where(queueing, L * (1.0 + Q), L)
        T[n] = n / (Z + W.sum())
        Q = T[n] * W
    if K == 0:
        W = np.zeros(len(L))
    return SolverResult(tuple(model.station_ids), T, L * T[K], Q, W, Z)


def convolution_two_class(
    stations, K: int, L: int, think_times: tuple[float, float] = (0.0, 0.0)
) -> NormalizationTable:
    """Two-class normalisation constants G(k, l) for k <= K, l <= L.

    Single-server stations follow ``G_n(k,l) = G_{n-1}(k,l) + X_n G_n(k-1,l)
    + Y_n G_n(k,l-1)``; delay stations and think times are folded as one
    infinite-server factor ``X^k/k! * Y^l/l!``.
    """
    if K < 0 or L < 0:
        raise ModelError(f"populations must be >= 0, got ({K}, {L})")
    stations = list(stations)
    for st in stations:
        if st.is_load_dependent:
            raise UnsupportedStationError(
                f"two-class convolution supports fixed-rate and delay stations only ({st.id})"
            )
        if len(st.demands) != 2:
            raise ModelError(f"station {st.id!r} needs two class demands")
    fixed = [s for s in stations if s.is_fixed]
    zx = think_times[0] + sum(s.demands[0] for s in stations if s.is_delay)
    zy = think_times[1] + sum(s.demands[1] for s in stations if s.is_delay)
    sx = _pow2_exponent([s.demands[0] for s in fixed] + [zx])
    sy = _pow2_exponent([s.demands[1] for s in fixed] + [zy])
    G = np.zeros((K + 1, L + 1))
    G[0, 0] = 1.0
    for st in fixed:
        x = math.ldexp(st.demands[0], -sx)
        y = math.ldexp(st.demands[1], -sy)
        for k in range(K + 1):
            for l in range(L + 1):
                if k == 0 and l == 0:
                    continue
                a = x * G[k - 1, l] if k > 0 else 0.0
                b = y * G[k, l - 1] if l > 0 else 0.0
                G[k, l] = G[k, l] + a + b
    if zx > 0 or zy > 0:
        FX = _is_factors(math.ldexp(zx, -sx), K)
        FY = _is_factors(math.ldexp(zy, -sy), L)
        out = np.empty_like(G)
        for k in range(K + 1):
            for l in range(L + 1):
                acc = 0.0
                for b in range(l + 1):
                    for a in range(k + 1):
                        acc += (FX[a] * FY[b]) * G[k - a, l - b]
                out[k, l] = acc
        G = out
    kk, ll = np.meshgrid(np.arange(K + 1), np.arange(L + 1), indexing="ij")
    return NormalizationTable(G, (kk * sx + ll * sy).astype(np.int64))


def two_class_throughputs(table: NormalizationTable, K: int, L: int) -> tuple[float, float]:
    """Class throughputs G(K-1,L)/G(K,L) and G(K,L-1)/G(K,L)."""
    t1 = table.ratio((K - 1, L), (K, L)) if K > 0 else 0.0
    t2 = table.ratio((K, L - 1), (K, L)) if L > 0 else 0.0
    return t1, t2


def mva_multichain(model: MultichainModel) -> MultichainResult:
    """Exact multichain MVA over the full population lattice."""
    require_valid(model)
    bad = [s.id for s in model.stations if s.is_load_dependent]
    if bad:
        raise UnsupportedStationError(
            f"multichain MVA does not support load-dependent stations ({', '.join(bad)})"
        )
    pops = model.populations
    dims = tuple(n + 1 for n in pops)
    size = math.prod(dims)
    if size > LATTICE_LIMIT:
        raise StateSpaceTooLarge(
            f"population lattice of {size} points exceeds {LATTICE_LIMIT}; use PAM"
        )
    tau = model.loadings
    M, R = tau.shape
    queueing = ~model.is_delay
    Z = np.array(model.think_times)
    strides = np.array([math.prod(dims[k + 1:]) for k in range(R)], dtype=np.int64)
    Qtot = np.zeros((size, M))
    W = np.zeros((M, R))
    T = np.zeros(R)
    for idx, n in enumerate(np.ndindex(*dims)):
        if idx == 0:
            continue
        n = np.asarray(n)
        act = n > 0
        prev = Qtot[idx - strides[act]].T  # (M, active chains)
        Wa = tau[:, act] * (1.0 + np.where(queueing[:, None], prev, 0.0))
        Ta = n[act] / (Z[act] + Wa.sum(axis=0))
        Qtot[idx] = Wa @ Ta
        if idx == size - 1:
            W[:, act] = Wa
            T[act] = Ta
    Qmk = W * T
    return MultichainResult(
        tuple(s.id for s in model.stations), T, tau * T, Qmk, W
    )
