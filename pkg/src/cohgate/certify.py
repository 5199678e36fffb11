"""Closed-form certification surface: entropy, fidelity, rates and scaling laws.

Everything here is geometry or algebra on accepted-trajectory guarantees;
no simulation.  The only statistics consumed are accepted z-values (for the
empirical min-entropy) and heralding fractions (for rate projections).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SimParams

__all__ = [
    "ComposablePoint",
    "EmptyAcceptedSet",
    "MarginExceedsThreshold",
    "min_entropy_bound",
    "pz_interval",
    "empirical_min_entropy",
    "bell_fidelity",
    "input_fidelity",
    "composable_point",
    "s_typ",
    "optimal_eta_ratio",
    "network_rates",
]


class EmptyAcceptedSet(ValueError):
    pass


class MarginExceedsThreshold(ValueError):
    pass


@dataclass(frozen=True)
class ComposablePoint:
    s_th: float
    epsilon: float
    delta: float
    h_min: float
    f_mm: float


def min_entropy_bound(s_th: float) -> float:
    """Worst-case min-entropy per accepted bit, -log2((1 + sqrt(1 - s_th^2))/2).

    Follows from |z| <= sqrt(1 - s^2) for any accepted state with s > s_th
    inside the Bloch ball.
    """
    s_th = float(s_th)
    if not 0.0 <= s_th <= 1.0:
        raise ValueError("s_th must lie in [0, 1]")
    return float(-np.log2((1.0 + np.sqrt(1.0 - s_th * s_th)) / 2.0))


def pz_interval(s_th: float) -> tuple[float, float]:
    """Range of the Born probability P_z for accepted trajectories."""
    s_th = float(s_th)
    if not 0.0 <= s_th <= 1.0:
        raise ValueError("s_th must lie in [0, 1]")
    d = np.sqrt(1.0 - s_th * s_th)
    return ((1.0 - d) / 2.0, (1.0 + d) / 2.0)


def empirical_min_entropy(accepted_z) -> float:
    """Worst accepted trajectory's Born bias, -log2(max_i max(P_z, 1 - P_z)).

    P_z = (1 + z)/2, so the guessing probability of trajectory i is
    (1 + |z_i|)/2 and the worst case over the accepted set bounds the
    extractable randomness of the whole batch.
    """
    z = np.asarray(accepted_z, dtype=float)
    if z.size == 0:
        raise EmptyAcceptedSet("no accepted trajectories")
    p_guess = (1.0 + np.abs(z).max()) / 2.0
    return float(-np.log2(p_guess))


def bell_fidelity(s: float) -> float:
    """Qubit-photon Bell-pair fidelity (1 + s)/2 at coherence s."""
    s = float(s)
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    return (1.0 + s) / 2.0


def input_fidelity(s_th: float, f_gate: float = 1.0) -> float:
    """Two-node product-state fidelity bound f_gate^2 ((1 + s_th)/2)^2."""
    if not 0.0 <= s_th <= 1.0 or not 0.0 <= f_gate <= 1.0:
        raise ValueError("arguments must lie in [0, 1]")
    return f_gate * f_gate * bell_fidelity(s_th) ** 2


def composable_point(s_th: float, epsilon: float, delta: float) -> ComposablePoint:
    """Operating point carrying guarantees degraded by the security margin.

    h_min holds with probability >= 1 - delta, f_mm with >= (1 - delta)^2;
    both evaluate the closed forms at the slack threshold s_th - epsilon.
    """
    if not 0.0 <= s_th - epsilon <= 1.0:
        raise MarginExceedsThreshold(
            f"s_th - epsilon = {s_th - epsilon} must lie in [0, 1]"
        )
    s_eff = s_th - epsilon
    return ComposablePoint(
        s_th=float(s_th),
        epsilon=float(epsilon),
        delta=float(delta),
        h_min=min_entropy_bound(s_eff),
        f_mm=bell_fidelity(s_eff) ** 2,
    )


def s_typ(p: SimParams) -> float:
    """Typical stationary coherence, sqrt(2 eta g / (3 (eta g + g_dec)))."""
    eg = p.eta_true * p.gamma_meas
    return float(np.sqrt(2.0 * eg / (3.0 * (eg + p.gamma_dec))))


def optimal_eta_ratio(p: SimParams, s_value: float) -> float:
    """Scaling-law assumed-efficiency ratio r* = 1/(1 + xi), xi = 4 g s^2 / rate_bar."""
    s_value = float(s_value)
    if not 0.0 <= s_value <= 1.0:
        raise ValueError("s_value must lie in [0, 1]")
    xi = 4.0 * p.gamma_meas * s_value * s_value / p.rate_bar
    return 1.0 / (1.0 + xi)


def network_rates(n_modules: int, eta_h: float, t_decision: float) -> tuple[float, float]:
    """(single-node, two-node coincidence) certified event rates.

    single = n eta_h / t; the two-node rate squares the heralding
    efficiency for the simultaneous-accept coincidence, two_node =
    n eta_h^2 / t.  ``t_decision`` is in seconds.
    """
    if n_modules < 1 or t_decision <= 0.0 or not 0.0 <= eta_h <= 1.0:
        raise ValueError("need n_modules >= 1, t_decision > 0, eta_h in [0, 1]")
    single = n_modules * eta_h / t_decision
    return (single, n_modules * eta_h * eta_h / t_decision)
