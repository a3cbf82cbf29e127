"""Randomised accuracy studies and the model corpora used by them.

Demands are drawn as ``X0 * (1 + u)`` with ``u ~ U[-a, a]`` and
``a = c * sqrt(3)``, so ``c`` is the coefficient of variation of the
demand vector in expectation.  Each sample's population is the one whose
exact average utilisation lands closest to the middle of the target band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import yaml

from .bounds import BoundModelView, bjb, geometric_bounds, pbh_error_measure
from .errors import ModelError, SeriesDivergenceError
from .exact import mva_multichain, solve_convolution
from .model import ClosedModel, MultichainModel, Station, StationKind
from .pam import pam_basic, pam_improved, pam_two
from .uja import moments, t_series

PERCENTILES = (50, 90, 95, 99, 100)
THRESHOLDS = (0.10, 0.15)


class StudyError(ModelError):
    pass


@dataclass(frozen=True)
class StudyConfig:
    samples: int = 1000
    stations: tuple[int, int] = (18, 18)
    cv_range: tuple[float, float] = (0.1, 0.4)
    mean_demand: float = 1.0
    population: tuple[int, int] = (1, 60)
    utilization_band: tuple[float, float] = (0.35, 0.45)
    orders: tuple[int, ...] = (0, 1, 2)
    seed: int = 42
    bounds: bool = False
    pam_samples: int = 0

    def __post_init__(self):
        for name in ("stations", "cv_range", "population", "utilization_band", "orders"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        lo, hi = self.utilization_band
        if not 0 < lo <= hi < 1:
            raise StudyError(f"utilization band {self.utilization_band} must satisfy 0 < lo <= hi < 1")
        if not 0 <= self.cv_range[0] <= self.cv_range[1] < 1 / math.sqrt(3):
            raise StudyError("cv_range must lie in [0, 1/sqrt(3)) to keep demands positive")
        if self.samples < 1 or self.stations[0] < 1 or self.stations[0] > self.stations[1]:
            raise StudyError("need samples >= 1 and a valid station range")
        if self.population[0] < 1 or self.population[0] > self.population[1]:
            raise StudyError("invalid population range")

    @classmethod
    def from_mapping(cls, data) -> "StudyConfig":
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise StudyError(f"unknown study field(s): {', '.join(sorted(extra))}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "StudyConfig":
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise StudyError("study config must be a mapping")
        return cls.from_mapping(data)


def sample_demands(rng: np.random.Generator, M: int, cv: float, mean: float = 1.0) -> np.ndarray:
    a = cv * math.sqrt(3.0)
    return mean * (1.0 + rng.uniform(-a, a, size=M))


def closed_model(demands, population: int, think_time: float = 0.0) -> ClosedModel:
    return ClosedModel(
        tuple(Station.fixed(f"S{i + 1}", float(x)) for i, x in enumerate(demands)),
        population,
        think_time,
    )


def random_closed_model(rng, max_stations=6, max_population=15, think_prob=0.5,
                        demand_range=(0.05, 1.0), think_range=(0.0, 5.0)) -> ClosedModel:
    """Generic small single-class model for property and sandwich tests."""
    M = int(rng.integers(1, max_stations + 1))
    N = int(rng.integers(1, max_population + 1))
    X = rng.uniform(*demand_range, size=M)
    Z = float(rng.uniform(*think_range)) if rng.random() < think_prob else 0.0
    return closed_model(X, N, Z)


def random_multichain_model(rng, stations=(3, 10), chains=(2, 5), population=(1, 8),
                            loading=(0.1, 1.0)) -> MultichainModel:
    M = int(rng.integers(stations[0], stations[1] + 1))
    K = int(rng.integers(chains[0], chains[1] + 1))
    N = rng.integers(population[0], population[1] + 1, size=K)
    tau = rng.uniform(*loading, size=(M, K))
    st = tuple(Station(f"S{m + 1}", StationKind.FIXED, tuple(tau[m]), ()) for m in range(M))
    return MultichainModel(st, tuple(int(n) for n in N))


def pick_population(throughput: np.ndarray, mean_demand: float, config: StudyConfig) -> int:
    """Population whose average utilisation is nearest the band centre; error if outside."""
    lo, hi = config.utilization_band
    target = 0.5 * (lo + hi)
    k = np.arange(config.population[0], config.population[1] + 1)
    util = throughput[k] * mean_demand
    best = int(k[np.argmin(np.abs(util - target))])
    u = float(throughput[best] * mean_demand)
    if not lo <= u <= hi:
        raise StudyError(
            f"utilization band {config.utilization_band} unreachable: closest population "
            f"{best} gives {u:.4f}"
        )
    return best


@dataclass
class StudyReport:
    config: StudyConfig
    errors: dict[str, np.ndarray] = field(default_factory=dict)  # key -> relative errors
    divergences: dict[str, int] = field(default_factory=dict)
    populations: np.ndarray | None = None
    utilizations: np.ndarray | None = None
    bound_widths: dict[str, float] = field(default_factory=dict)
    pam_errors: dict[str, np.ndarray] = field(default_factory=dict)

    def fraction_within(self, key: str, threshold: float) -> float:
        e = self.errors[key]
        return float(np.mean(e <= threshold)) if e.size else float("nan")

    def to_text(self) -> str:
        c = self.config
        lines = [
            "# UJA accuracy study",
            f"seed={c.seed} samples={c.samples} stations={c.stations[0]}..{c.stations[1]} "
            f"cv={c.cv_range[0]:g}..{c.cv_range[1]:g} band={c.utilization_band[0]:g}..{c.utilization_band[1]:g}",
            f"population: mean={self.populations.mean():.4f} min={self.populations.min()} "
            f"max={self.populations.max()}",
            f"average utilization: mean={self.utilizations.mean():.6f}",
            "",
            "estimate  count   " + "  ".join(f"p{p:<6d}" for p in PERCENTILES)
            + "  " + "  ".join(f"<={int(t * 100)}%   " for t in THRESHOLDS) + "  diverged",
        ]
        for key, e in self.errors.items():
            pct = np.percentile(e, PERCENTILES) if e.size else [float("nan")] * len(PERCENTILES)
            row = f"{key:<8s}  {e.size:<6d}  " + "  ".join(f"{v:.5f}" for v in pct)
            row += "  " + "  ".join(f"{self.fraction_within(key, t):.5f}" for t in THRESHOLDS)
            row += f"  {self.divergences.get(key, 0)}"
            lines.append(row)
        if self.bound_widths:
            lines += ["", "mean bound error measure (%)"]
            lines += [f"{k:<8s}  {v:.6f}" for k, v in self.bound_widths.items()]
        if self.pam_errors:
            lines += ["", "PAM mean / max relative chain-throughput error"]
            for k, v in self.pam_errors.items():
                lines.append(f"{k:<13s}  {v.mean():.6f}  {v.max():.6f}")
        return "\n".join(lines) + "\n"


def run_study(config: StudyConfig) -> StudyReport:
    """Compare T0 (at the chosen population) and higher orders (at 1..K*) against exact."""
    rng = np.random.default_rng(config.seed)
    errs: dict[str, list[float]] = {f"T{j}": [] for j in config.orders}
    div = {f"T{j}": 0 for j in config.orders}
    pops, utils = [], []
    widths: dict[str, list[float]] = {"BJB": [], "GSB": []}
    kmax = config.population[1]
    for _ in range(config.samples):
        M = int(rng.integers(config.stations[0], config.stations[1] + 1))
        cv = float(rng.uniform(*config.cv_range))
        X = sample_demands(rng, M, cv, config.mean_demand)
        model = closed_model(X, kmax)
        exact = solve_convolution(model).throughput
        K = pick_population(exact, float(X.mean()), config)
        pops.append(K)
        utils.append(float(exact[K] * X.mean()))
        mom = moments(X)
        for j in config.orders:
            ks = [K] if j == 0 else range(1, K + 1)
            for k in ks:
                try:
                    est = t_series(mom, k, j)
                except SeriesDivergenceError:
                    div[f"T{j}"] += 1
                    continue
                errs[f"T{j}"].append(abs(est - exact[k]) / exact[k])
        if config.bounds:
            view = BoundModelView.from_model(model.with_population(K))
            widths["BJB"].append(pbh_error_measure(bjb(view)))
            widths["GSB"].append(pbh_error_measure(geometric_bounds(view).gsb))
    report = StudyReport(
        config,
        {k: np.array(v) for k, v in errs.items()},
        div,
        np.array(pops),
        np.array(utils),
    )
    if config.bounds:
        report.bound_widths = {k: float(np.mean(v)) for k, v in widths.items()}
    if config.pam_samples:
        report.pam_errors = pam_study(np.random.default_rng([config.seed, 1]), config.pam_samples)
    return report


def pam_study(rng, samples: int) -> dict[str, np.ndarray]:
    """Mean relative chain-throughput error of each PAM variant per model."""
    out = {"PAM_BASIC": [], "PAM_IMPROVED": [], "PAM_TWO": []}
    for _ in range(samples):
        model = random_multichain_model(rng)
        exact = mva_multichain(model).throughput
        for name, fn in (("PAM_BASIC", pam_basic), ("PAM_IMPROVED", pam_improved), ("PAM_TWO", pam_two)):
            T = fn(model).throughput
            out[name].append(float(np.mean(np.abs(T - exact) / exact)))
    return {k: np.array(v) for k, v in out.items()}
