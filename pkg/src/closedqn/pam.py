"""Proportional approximation (PAM) for multichain closed networks.

All variants seed the arrival-theorem queue lengths with a proportional
split ``q'_mh = gamma_mh * N_h`` where ``gamma_mk = tau_mk / sum_i tau_ik``,
then run one (BASIC, IMPROVED) or two (TWO) exact MVA steps.  IMPROVED and
TWO finally rescale chains whose throughput would push a queueing station
past saturation.

Pass a :class:`collections.Counter` as ``ops`` to count (station, chain)
visits; the tests use it to check the O(MK) / O(MK^2) cost.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, UnsupportedStationError
from .model import MultichainModel

BASIC, IMPROVED, TWO = "PAM_BASIC", "PAM_IMPROVED", "PAM_TWO"


@dataclass(frozen=True)
class PamResult:
    throughput: np.ndarray  # (K,)
    utilization: np.ndarray  # (M,)
    scaled: tuple[bool, ...]
    variant: str


def _setup(model: MultichainModel):
    if any(s.is_load_dependent for s in model.stations):
        raise UnsupportedStationError("PAM handles fixed-rate and delay stations only")
    tau = model.loadings
    totals = tau.sum(axis=0)
    if np.any(totals <= 0):
        bad = [k for k in range(tau.shape[1]) if totals[k] <= 0]
        raise ModelError(f"chain(s) {bad} have zero total loading")
    N = np.array(model.populations, dtype=float)
    if np.any(N < 0):
        raise ModelError("populations must be >= 0")
    gamma = tau / totals
    queueing = ~model.is_delay
    return tau, gamma, N, np.array(model.think_times), queueing


def _tick(ops: Counter | None, key: str, n: int) -> None:
    if ops is not None:
        ops[key] += n


def _basic_throughput(model, ops) -> np.ndarray:
    tau, gamma, N, Z, queueing = _setup(model)
    qtot = gamma @ N  # total proportional queue at each station, full population
    # removing one chain-k job takes gamma_mk off station m
    arrival = qtot[:, None] - gamma
    D = tau * np.where(queueing[:, None], 1.0 + arrival, 1.0)
    _tick(ops, "pairs", tau.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(N > 0, N / (Z + D.sum(axis=0)), 0.0)


def _scale(model, T, ops):
    tau = model.loadings
    queueing = ~model.is_delay
    U = tau @ T
    _tick(ops, "pairs", tau.size)
    scaled = []
    T = T.copy()
    for k in range(tau.shape[1]):
        visited = queueing & (tau[:, k] > 0)
        S = float(U[visited].max()) if visited.any() else 0.0
        if S > 1.0:
            T[k] /= S
            scaled.append(True)
        else:
            scaled.append(False)
    _tick(ops, "pairs", tau.size)
    return T, tau @ T, tuple(scaled)


def pam_basic(model: MultichainModel, ops: Counter | None = None) -> PamResult:
    T = _basic_throughput(model, ops)
    U = model.loadings @ T
    return PamResult(T, U, (False,) * len(T), BASIC)


def pam_improved(model: MultichainModel, ops: Counter | None = None) -> PamResult:
    """BASIC followed by per-chain rescaling so no queueing station exceeds U = 1."""
    T = _basic_throughput(model, ops)
    T, U, scaled = _scale(model, T, ops)
    return PamResult(T, U, scaled, IMPROVED)


def pam_two(model: MultichainModel, ops: Counter | None = None) -> PamResult:
    """Proportional seed two jobs down, then the last two MVA steps exactly."""
    tau, gamma, N, Z, queueing = _setup(model)
    M, K = tau.shape
    qtot = gamma @ N
    T = np.zeros(K)
    for k in range(K):
        if N[k] <= 0:
            continue
        P = N.copy()
        P[k] -= 1
        # step at N - 1_k, arrival queues from the proportional seed at N - 1_k - 1_j
        seed = qtot[:, None] - gamma[:, [k]] - gamma
        W = tau * np.where(queueing[:, None], 1.0 + seed, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            # chains left empty at N - 1_k carry no flow
            Tp = np.where(P > 0, P / (Z + W.sum(axis=0)), 0.0)
        q = W @ Tp
        _tick(ops, "pairs", M * K)
        Wk = tau[:, k] * np.where(queueing, 1.0 + q, 1.0)
        T[k] = N[k] / (Z[k] + Wk.sum())
        _tick(ops, "pairs", M)
    T, U, scaled = _scale(model, T, ops)
    return PamResult(T, U, scaled, TWO)


VARIANTS = {BASIC: pam_basic, IMPROVED: pam_improved, TWO: pam_two}
