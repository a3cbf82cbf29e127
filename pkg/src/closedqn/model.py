"""Model representation for product-form queueing networks.

Stations carry *loadings* (service demands): the total mean service time a
job needs at a station over all its visits, ``X_n = v_n * xbar_n``.  Closed
single-class models are the unit every exact and approximate solver
consumes; multichain models feed the multiclass MVA and PAM solvers.

Routing-level descriptions (:class:`RoutingSpec`) are kept separate because
they only matter for deriving visit ratios and for the open-network quick
analysis.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ModelError, RoutingError, UnstableStationError

ROW_SUM_TOL = 1e-9


class StationKind(str, enum.Enum):
    FIXED = "fixed"
    DELAY = "delay"
    LOAD_DEPENDENT = "load_dependent"


@dataclass(frozen=True)
class Station:
    """A service center.

    ``demands`` holds one loading per class (seconds).  ``rates`` is only
    meaningful for load-dependent stations: ``rates[j-1]`` is the rate
    multiplier ``a(j)`` with ``j`` jobs present, and the last entry is held
    constant for larger populations.
    """

    id: str
    kind: StationKind = StationKind.FIXED
    demands: tuple[float, ...] = (0.0,)
    rates: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", StationKind(self.kind))
        d = self.demands
        if isinstance(d, (int, float, np.floating, np.integer)):
            d = (d,)
        object.__setattr__(self, "demands", tuple(float(x) for x in d))
        object.__setattr__(self, "rates", tuple(float(x) for x in self.rates))

    @classmethod
    def fixed(cls, id: str, demand) -> "Station":
        return cls(id, StationKind.FIXED, demand)

    @classmethod
    def delay(cls, id: str, demand) -> "Station":
        return cls(id, StationKind.DELAY, demand)

    @classmethod
    def load_dependent(cls, id: str, demand, rates: Sequence[float]) -> "Station":
        return cls(id, StationKind.LOAD_DEPENDENT, demand, tuple(rates))

    @property
    def demand(self) -> float:
        """Loading of the first (or only) class."""
        return self.demands[0]

    @property
    def is_delay(self) -> bool:
        return self.kind is StationKind.DELAY

    @property
    def is_fixed(self) -> bool:
        return self.kind is StationKind.FIXED

    @property
    def is_load_dependent(self) -> bool:
        return self.kind is StationKind.LOAD_DEPENDENT

    def rate(self, j: int) -> float:
        """Rate multiplier a(j) for ``j >= 1`` jobs."""
        if self.kind is StationKind.FIXED:
            return 1.0
        if self.kind is StationKind.DELAY:
            return float(j)
        if not self.rates:
            return 1.0
        return self.rates[min(j, len(self.rates)) - 1]

    def factors(self, kmax: int, cls: int = 0, scale: float = 1.0) -> np.ndarray:
        """Product-form factors F(k) for k = 0..kmax of demand/scale.

        F(k) = x^k for fixed-rate, x^k / k! for delay and
        x^k / (a(1)...a(k)) for load-dependent stations.
        """
        x = self.demands[cls] / scale
        f = np.empty(kmax + 1)
        f[0] = 1.0
        for k in range(1, kmax + 1):
            f[k] = f[k - 1] * x / self.rate(k)
        return f


def multiserver(id: str, demand: float, servers: int) -> Station:
    """m-server station as a load-dependent station with a(j) = min(j, m)."""
    if servers < 1:
        raise ModelError(f"station {id!r}: server count must be >= 1")
    return Station.load_dependent(id, demand, [float(min(j, servers)) for j in range(1, servers + 1)])


@dataclass(frozen=True)
class ClosedModel:
    """Single-class closed network: stations, population K, think time Z."""

    stations: tuple[Station, ...]
    population: int
    think_time: float = 0.0
    metadata: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "think_time", float(self.think_time))

    @property
    def station_ids(self) -> list[str]:
        return [s.id for s in self.stations]

    @property
    def demands(self) -> np.ndarray:
        return np.array([s.demand for s in self.stations], dtype=float)

    @property
    def delay_demand(self) -> float:
        """Think time plus every delay station, aggregated into one IS term."""
        return self.think_time + sum(s.demand for s in self.stations if s.is_delay)

    @property
    def has_load_dependent(self) -> bool:
        return any(s.is_load_dependent for s in self.stations)

    def with_population(self, population: int) -> "ClosedModel":
        return ClosedModel(self.stations, population, self.think_time, self.metadata)


@dataclass(frozen=True)
class MultichainModel:
    """Closed multichain network: ``stations[m].demands[k]`` is tau_{mk}."""

    stations: tuple[Station, ...]
    populations: tuple[int, ...]
    think_times: tuple[float, ...] = ()
    metadata: Mapping = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        object.__setattr__(self, "populations", tuple(int(n) for n in self.populations))
        z = tuple(float(t) for t in self.think_times) or (0.0,) * len(self.populations)
        object.__setattr__(self, "think_times", z)

    @property
    def chains(self) -> int:
        return len(self.populations)

    @property
    def loadings(self) -> np.ndarray:
        """Demand matrix of shape (stations, chains)."""
        return np.array([s.demands for s in self.stations], dtype=float).reshape(
            len(self.stations), self.chains
        )

    @property
    def is_delay(self) -> np.ndarray:
        return np.array([s.is_delay for s in self.stations], dtype=bool)

    def with_populations(self, populations) -> "MultichainModel":
        return MultichainModel(self.stations, tuple(populations), self.think_times, self.metadata)


@dataclass(frozen=True)
class RoutingSpec:
    """Routing-level description of a network.

    ``servers`` gives the server count per station; ``math.inf`` marks a
    delay (infinite-server) station.  ``external_rates`` is ``None`` for a
    closed network.
    """

    P: np.ndarray
    service_times: np.ndarray
    external_rates: np.ndarray | None = None
    servers: tuple[float, ...] | None = None
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "service_times", np.array(self.service_times, dtype=float))
        if self.external_rates is not None:
            object.__setattr__(self, "external_rates", np.array(self.external_rates, dtype=float))
        n = P.shape[0] if P.ndim == 2 else 0
        if self.servers is None:
            object.__setattr__(self, "servers", (1.0,) * n)
        else:
            object.__setattr__(self, "servers", tuple(float(m) for m in self.servers))
        if self.ids is None:
            object.__setattr__(self, "ids", tuple(f"S{i + 1}" for i in range(n)))

    @property
    def is_open(self) -> bool:
        return self.external_rates is not None

    @property
    def size(self) -> int:
        return self.P.shape[0]


def _routing_diagnostics(spec: RoutingSpec) -> list[str]:
    out = []
    P = spec.P
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        return [f"routing matrix must be square, got shape {P.shape}"]
    n = P.shape[0]
    if spec.service_times.shape != (n,):
        out.append(f"service_times must have {n} entries")
    if np.any(P < 0):
        out.append("routing matrix has negative entries")
    rows = P.sum(axis=1)
    for i, r in enumerate(rows):
        if spec.is_open:
            if r > 1 + ROW_SUM_TOL:
                out.append(f"row {spec.ids[i]!r} sums to {r:.12g} > 1")
        elif abs(r - 1) > ROW_SUM_TOL:
            out.append(f"row {spec.ids[i]!r} sums to {r:.12g}, expected 1 for a closed network")
    if spec.is_open:
        if spec.external_rates.shape != (n,):
            out.append(f"external_rates must have {n} entries")
        elif np.any(spec.external_rates < 0):
            out.append("external arrival rates must be >= 0")
    if np.any(spec.service_times < 0):
        out.append("service times must be >= 0")
    if len(spec.servers) != n:
        out.append(f"servers must have {n} entries")
    elif any(m < 1 for m in spec.servers):
        out.append("server counts must be >= 1")
    return out


def _station_diagnostics(s: Station, nclasses: int) -> list[str]:
    out = []
    if len(s.demands) != nclasses:
        out.append(f"station {s.id!r}: expected {nclasses} demand(s), got {len(s.demands)}")
    for d in s.demands:
        if not math.isfinite(d) or d < 0:
            out.append(f"station {s.id!r}: demand {d!r} must be finite and >= 0")
            break
    if s.is_load_dependent:
        if not s.rates:
            out.append(f"station {s.id!r}: load-dependent station needs a rate table")
        else:
            if s.rates[0] != 1.0:
                out.append(f"station {s.id!r}: a(1) must equal 1, got {s.rates[0]!r}")
            if any(not (a > 0) or not math.isfinite(a) for a in s.rates):
                out.append(f"station {s.id!r}: rates a(j) must be finite and > 0")
    elif s.rates:
        out.append(f"station {s.id!r}: rates given for a {s.kind.value} station")
    return out


def validate(model) -> list[str]:
    """Return one diagnostic string per violated invariant (empty when valid)."""
    if isinstance(model, RoutingSpec):
        return _routing_diagnostics(model)
    out: list[str] = []
    if isinstance(model, ClosedModel):
        nclasses = 1
        if not isinstance(model.population, (int, np.integer)) or model.population < 0:
            out.append(f"population must be a non-negative integer, got {model.population!r}")
        if not math.isfinite(model.think_time) or model.think_time < 0:
            out.append(f"think time must be >= 0, got {model.think_time!r}")
    elif isinstance(model, MultichainModel):
        nclasses = model.chains
        if nclasses == 0:
            out.append("multichain model needs at least one chain")
        if any(n < 0 for n in model.populations):
            out.append("chain populations must be >= 0")
        if len(model.think_times) != nclasses:
            out.append(f"expected {nclasses} think times, got {len(model.think_times)}")
        elif any(z < 0 or not math.isfinite(z) for z in model.think_times):
            out.append("think times must be >= 0")
    else:
        return [f"unsupported model type {type(model).__name__}"]

    seen = set()
    for s in model.stations:
        if s.id in seen:
            out.append(f"duplicate station id {s.id!r}")
        seen.add(s.id)
        out.extend(_station_diagnostics(s, nclasses))
    if not model.stations:
        out.append("model has no stations")
    else:
        for r in range(nclasses):
            if not any(len(s.demands) > r and s.demands[r] > 0 for s in model.stations):
                out.append(f"class {r}: no station has a positive demand")
    return out


def require_valid(model) -> None:
    diags = validate(model)
    if diags:
        raise ModelError("; ".join(diags))


def _reachable(adj: np.ndarray, start: int) -> set[int]:
    seen = {start}
    todo = deque([start])
    while todo:
        i = todo.popleft()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                todo.append(int(j))
    return seen


def visit_ratios(spec: RoutingSpec, reference_station: int = 0, scale: float = 1.0) -> np.ndarray:
    """Relative visit counts ``v = v P`` normalised to ``v[reference] = scale``."""
    diags = _routing_diagnostics(spec)
    if spec.is_open:
        diags.append("visit_ratios needs a closed routing matrix")
    if diags:
        raise RoutingError("; ".join(diags))
    n = spec.size
    if not 0 <= reference_station < n:
        raise RoutingError(f"reference station {reference_station} out of range")
    adj = spec.P > 0
    fwd = _reachable(adj, reference_station)
    back = _reachable(adj.T, reference_station)
    bad = sorted(set(range(n)) - (fwd & back))
    if bad:
        names = ", ".join(spec.ids[i] for i in bad)
        raise RoutingError(f"routing chain is reducible; unreachable stations: {names}")
    A = spec.P.T - np.eye(n)
    A[reference_station, :] = 0.0
    A[reference_station, reference_station] = 1.0
    rhs = np.zeros(n)
    rhs[reference_station] = scale
    try:
        v = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError as exc:
        raise RoutingError(f"singular visit-ratio system: {exc}") from None
    return v


def loadings_from_routing(spec: RoutingSpec, reference_station: int = 0) -> np.ndarray:
    """Service demands X_n = v_n * xbar_n with v_reference = 1."""
    return visit_ratios(spec, reference_station) * spec.service_times


@dataclass(frozen=True)
class OpenResult:
    ids: tuple[str, ...]
    arrival_rates: np.ndarray
    utilizations: np.ndarray
    residence_times: np.ndarray


def erlang_c(servers: int, offered_load: float) -> float:
    """Probability of waiting in an M/M/m queue with offered load a = lambda*xbar."""
    b = 1.0
    for k in range(1, servers + 1):
        b = offered_load * b / (k + offered_load * b)
    rho = offered_load / servers
    return b / (1.0 - rho * (1.0 - b))


def analyze_open(spec: RoutingSpec) -> OpenResult:
    """Jackson-network quick analysis: traffic equations then per-station M/M/m."""
    diags = _routing_diagnostics(spec)
    if not spec.is_open:
        diags.append("analyze_open needs external arrival rates")
    if diags:
        raise RoutingError("; ".join(diags))
    n = spec.size
    try:
        lam = np.linalg.solve((np.eye(n) - spec.P).T, spec.external_rates)
    except np.linalg.LinAlgError as exc:
        raise RoutingError(f"singular traffic equations (I - P): {exc}") from None
    xbar = spec.service_times
    util = np.empty(n)
    resid = np.empty(n)
    for i, m in enumerate(spec.servers):
        if math.isinf(m):
            util[i] = lam[i] * xbar[i]
            resid[i] = xbar[i]
            continue
        m = int(m)
        util[i] = lam[i] * xbar[i] / m
        if util[i] >= 1.0:
            raise UnstableStationError(spec.ids[i], util[i])
        if m == 1:
            resid[i] = xbar[i] / (1.0 - util[i])
        else:
            wait = erlang_c(m, lam[i] * xbar[i]) * xbar[i] / (m * (1.0 - util[i]))
            resid[i] = xbar[i] + wait
    return OpenResult(tuple(spec.ids), lam, util, resid)
