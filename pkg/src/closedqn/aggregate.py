"""Flow-equivalent service centers (FESCs).

A subnetwork is summarised by its throughput characteristic T(k) and
replaced by one load-dependent station whose rate with j jobs is T(j).
Balanced fixed-rate subnetworks and delay stations aggregate exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError
from .model import ClosedModel, Station, StationKind

BALANCED_EXACT = "balanced-exact"
EXTERNAL_SOLVER = "external-solver"


def uja_source(order: int) -> str:
    return f"uja-order-{order}"


@dataclass(frozen=True)
class ThroughputCharacteristic:
    """T(k) for k = 1..K_max; held constant beyond K_max."""

    T: tuple[float, ...]
    source: str = EXTERNAL_SOLVER

    def __post_init__(self):
        T = tuple(float(t) for t in self.T)
        object.__setattr__(self, "T", T)
        if not T:
            raise ModelError("throughput characteristic is empty")
        if any(not t > 0 for t in T):
            raise ModelError("throughput characteristic must be strictly positive")
        for k in range(1, len(T)):
            # one-ulp wobble from k / (k X) style arithmetic is not a decrease
            if T[k] < T[k - 1] * (1.0 - 1e-12):
                raise ModelError(
                    f"throughput characteristic decreases at k={k + 1}: {T[k]!r} < {T[k - 1]!r}"
                )

    @property
    def k_max(self) -> int:
        return len(self.T)

    def at(self, k: int) -> float:
        if k < 1:
            raise ValueError("population must be >= 1")
        return self.T[min(k, len(self.T)) - 1]

    @property
    def is_exact(self) -> bool:
        return self.source in (BALANCED_EXACT, EXTERNAL_SOLVER)


def aggregate_balanced(M: int, X: float, k_max: int) -> ThroughputCharacteristic:
    """Throughput of M identical single servers with demand X each."""
    if M < 1 or not X > 0:
        raise ModelError("balanced aggregation needs M >= 1 and X > 0")
    return ThroughputCharacteristic(
        tuple(k / ((M + k - 1) * X) for k in range(1, k_max + 1)), BALANCED_EXACT
    )


def balanced_residence(M: int, X: float, k: int) -> float:
    """Residence time at one of M balanced stations with k jobs in the subnetwork."""
    return X * (1.0 + (k - 1) / M)


def aggregate_delay(stations: Iterable[Station]) -> float:
    """Sum of delay-station demands (the single equivalent IS demand)."""
    total = 0.0
    for st in stations:
        if not st.is_delay:
            raise ModelError(f"station {st.id!r} is not a delay station")
        total += st.demand
    return total


def fesc_to_station(tc: ThroughputCharacteristic, id: str = "fesc") -> Station:
    """Load-dependent station reproducing ``tc``: demand 1/T(1), a(j) = T(j)/T(1)."""
    t1 = tc.T[0]
    rates = [t / t1 for t in tc.T]
    rates[0] = 1.0
    return Station(id, StationKind.LOAD_DEPENDENT, (1.0 / t1,), tuple(rates))


def is_balanced(demands: Sequence[float], rtol: float = 1e-12) -> bool:
    d = np.asarray(demands, dtype=float)
    return bool(d.size) and bool(np.all(np.abs(d - d[0]) <= rtol * abs(d[0])))


def replace_subnetwork(
    model: ClosedModel, station_ids: Sequence[str], tc: ThroughputCharacteristic, id: str = "fesc"
) -> ClosedModel:
    """Swap the named stations for one FESC, which takes the first one's place."""
    wanted = set(station_ids)
    missing = wanted - set(model.station_ids)
    if missing:
        raise ModelError(f"unknown stations: {', '.join(sorted(missing))}")
    out = []
    placed = False
    for st in model.stations:
        if st.id in wanted:
            if not placed:
                out.append(fesc_to_station(tc, id))
                placed = True
        else:
            out.append(st)
    return ClosedModel(tuple(out), model.population, model.think_time, dict(model.metadata))
