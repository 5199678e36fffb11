"""Coherence scoring, routing decisions, phase feedforward and sweep metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import QubitState

__all__ = [
    "GatingMetrics",
    "PhaseUndefined",
    "EmptyEnsemble",
    "coherence_score",
    "purity",
    "route",
    "equatorial_phase",
    "gating_sweep",
]

PHASE_EPS = 1e-9


class PhaseUndefined(ValueError):
    pass


class EmptyEnsemble(ValueError):
    pass


@dataclass(frozen=True)
class GatingMetrics:
    s_th: float
    heralding_efficiency: float
    mismatch_rate: float
    mean_bias: float
    mean_repairs: float
    accepted_count: int

    def __post_init__(self):
        if not (0.0 <= self.heralding_efficiency <= 1.0 and 0.0 <= self.mismatch_rate <= 1.0):
            raise ValueError("fractions must lie in [0, 1]")
        if self.accepted_count < 0:
            raise ValueError("accepted_count must be nonnegative")


def _as_bloch(state) -> np.ndarray:
    if isinstance(state, QubitState):
        return np.asarray(state.bloch, dtype=float)
    return np.asarray(state, dtype=float)


def coherence_score(state) -> float | np.ndarray:
    """S = sqrt(<sigma_x>^2 + <sigma_y>^2) = 2|rho_01|, in [0, 1]."""
    r = _as_bloch(state)
    return np.hypot(r[..., 0], r[..., 1])


def purity(state) -> float | np.ndarray:
    """Tr[rho^2] = (1 + |r|^2)/2, in [1/2, 1]."""
    r = _as_bloch(state)
    return 0.5 * (1.0 + np.sum(r * r, axis=-1))


def route(s_score: float, s_th: float) -> str:
    """Binary routing decision: 'A' iff the score strictly exceeds the threshold."""
    return "A" if s_score > s_th else "B"


def equatorial_phase(state):
    """Phase message and feedforward-corrected state.

    phi = atan2(<sigma_y>, <sigma_x>) in (-pi, pi]; the corrected state is
    the input rotated by R_z(-phi): y -> 0, x -> S >= 0, z unchanged.
    Undefined when the equatorial projection is shorter than 1e-9.
    """
    r = _as_bloch(state)
    s = float(np.hypot(r[0], r[1]))
    if s <= PHASE_EPS:
        raise PhaseUndefined("equatorial projection too small to define a phase")
    phi = float(np.arctan2(r[1], r[0]))
    corrected = QubitState.from_bloch(s, 0.0, float(r[2]))
    return phi, corrected


def equatorial_phase_array(bloch: np.ndarray) -> np.ndarray:
    """Vectorized phase of an (n, 3) stack; NaN where the phase is undefined."""
    bloch = np.asarray(bloch, dtype=float)
    s = np.hypot(bloch[..., 0], bloch[..., 1])
    phi = np.arctan2(bloch[..., 1], bloch[..., 0])
    return np.where(s > PHASE_EPS, phi, np.nan)


def gating_sweep(true_terminal: np.ndarray, est_terminal: np.ndarray,
                 s_th_grid, mean_repairs: float = 0.0) -> list[GatingMetrics]:
    """Threshold sweep over terminal states of a shared-record ensemble.

    Heralding efficiency counts true accepts S_true(T) > s_th; the
    mismatch rate counts decision disagreements between the estimated and
    true scores.  The mean bias is threshold-independent and repeated on
    every row for convenience.
    """
    true_terminal = np.asarray(true_terminal, dtype=float)
    est_terminal = np.asarray(est_terminal, dtype=float)
    if true_terminal.size == 0:
        raise EmptyEnsemble("no trajectories supplied")
    s_true = coherence_score(true_terminal)
    s_est = coherence_score(est_terminal)
    bias = float(np.mean(s_est - s_true))
    out = []
    for s_th in np.atleast_1d(np.asarray(s_th_grid, dtype=float)):
        acc_true = s_true > s_th
        acc_est = s_est > s_th
        out.append(
            GatingMetrics(
                s_th=float(s_th),
                heralding_efficiency=float(np.mean(acc_true)),
                mismatch_rate=float(np.mean(acc_true != acc_est)),
                mean_bias=bias,
                mean_repairs=float(mean_repairs),
                accepted_count=int(np.sum(acc_true)),
            )
        )
    return out
