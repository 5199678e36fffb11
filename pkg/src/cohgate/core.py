"""Shared domain types: simulation parameters, qubit states and conversions.

All rates are plain inverse-time numbers in the same unit system as the
decision time ``t_final``; nothing in this package applies hidden 2*pi
factors.  The sigma_z eigenbasis convention is fixed here once: the ground
state |0> has sigma_z eigenvalue +1, and relaxation (lowering operator
|0><1|) drives the Bloch z component toward +1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import numpy as np

TWO_PI = 2.0 * np.pi

# Pauli matrices in the z basis, |0> = (1, 0) with sigma_z |0> = +|0>.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_MINUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |0><1|
IDENTITY2 = np.eye(2, dtype=complex)

HERMITICITY_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_SLACK = 1e-9
BLOCH_BALL_TOL = 1e-6


class ParameterError(ValueError):
    """Base class for parameter validation failures."""


class NonPositiveDt(ParameterError):
    pass


class RateNegative(ParameterError):
    pass


class EfficiencyOutOfRange(ParameterError):
    pass


class ThresholdOutOfRange(ParameterError):
    pass


class BlochOutOfBall(ValueError):
    pass


class NumericalDivergence(RuntimeError):
    """A state or filter produced non-finite values."""


@dataclass(frozen=True)
class SimParams:
    """Physical and numerical knobs of a simulation run.

    Rates follow the plain-number convention: the values are used directly
    as inverse-time coefficients with time measured in the unit of
    ``t_final``.  Use :func:`table1_params` to build the reference
    parameter set, optionally in the angular (rate * 2*pi) reading.
    """

    omega_x: float = 1.0          # Rabi drive strength
    delta: float = 0.5            # detuning
    gamma_x: float = 0.1          # sigma_x measurement rate
    gamma_z: float = 0.1          # sigma_z measurement rate
    gamma_rel: float = 0.01       # relaxation rate
    gamma_phi: float = 0.01       # pure dephasing rate
    eta_true: float = 0.7         # detector efficiency generating the records
    s_th: float = 0.7             # routing threshold on the coherence score
    t_final: float = 10.0         # decision time
    n_steps: int = 2001           # time-grid points (dt = t_final/(n_steps-1))
    n_traj: int = 3000
    base_seed: int = 20240817

    @property
    def dt(self) -> float:
        return self.t_final / (self.n_steps - 1)

    @property
    def gamma_meas(self) -> float:
        """Total measurement rate gamma_x + gamma_z."""
        return self.gamma_x + self.gamma_z

    @property
    def gamma_dec(self) -> float:
        """Total intrinsic decoherence rate gamma_rel + gamma_phi."""
        return self.gamma_rel + self.gamma_phi

    @property
    def rate_x(self) -> float:
        """Transverse decay of the Bloch x component."""
        return 2 * self.gamma_z + 2 * self.gamma_phi + self.gamma_rel / 2

    @property
    def rate_y(self) -> float:
        """Transverse decay of the Bloch y component."""
        return 2 * self.gamma_x + 2 * self.gamma_z + 2 * self.gamma_phi + self.gamma_rel / 2

    @property
    def rate_bar(self) -> float:
        """Phase-averaged transverse decay, (rate_x + rate_y)/2."""
        return 0.5 * (self.rate_x + self.rate_y)

    @property
    def rate_z(self) -> float:
        """Longitudinal decay of the Bloch z component."""
        return 2 * self.gamma_x + self.gamma_rel

    def with_updates(self, **kw) -> "SimParams":
        return validate_params(replace(self, **kw))


def validate_params(p: SimParams) -> SimParams:
    """Check ranges and grid sanity; return the validated parameters."""
    if p.n_steps < 2 or p.t_final <= 0:
        raise NonPositiveDt(
            f"need n_steps >= 2 and t_final > 0, got n_steps={p.n_steps}, t_final={p.t_final}"
        )
    for name in ("omega_x", "delta"):
        if not np.isfinite(getattr(p, name)):
            raise ParameterError(f"{name} must be finite")
    for name in ("gamma_x", "gamma_z", "gamma_rel", "gamma_phi"):
        v = getattr(p, name)
        if not np.isfinite(v) or v < 0:
            raise RateNegative(f"{name} must be a finite nonnegative rate, got {v}")
    if not 0.0 < p.eta_true <= 1.0:
        raise EfficiencyOutOfRange(f"eta_true must lie in (0, 1], got {p.eta_true}")
    if not 0.0 <= p.s_th <= 1.0:
        raise ThresholdOutOfRange(f"s_th must lie in [0, 1], got {p.s_th}")
    if p.n_traj < 1:
        raise ParameterError(f"n_traj must be >= 1, got {p.n_traj}")
    return p


def table1_params(angular: bool = False, **overrides) -> SimParams:
    """Reference parameter set.

    With ``angular=True`` the rate and drive entries are multiplied by
    2*pi, i.e. the quoted values are read as frequencies (value * 2*pi
    in angular units) rather than as plain rates.  Statistics of the
    stationary coherence are invariant under this rescaling; transient
    timing, repair counts and the error-process rates are not.
    """
    p = SimParams()
    if angular:
        p = replace(
            p,
            omega_x=p.omega_x * TWO_PI,
            delta=p.delta * TWO_PI,
            gamma_x=p.gamma_x * TWO_PI,
            gamma_z=p.gamma_z * TWO_PI,
            gamma_rel=p.gamma_rel * TWO_PI,
            gamma_phi=p.gamma_phi * TWO_PI,
        )
    if overrides:
        p = replace(p, **overrides)
    return validate_params(p)


@dataclass(frozen=True)
class QubitState:
    """2x2 density matrix with a Bloch-vector view.

    Invariants: Hermitian and unit trace within 1e-12; positive
    semidefinite within the 1e-9 repair slack, equivalently |r| <= 1 + 1e-9.
    """

    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (2, 2):
            raise ValueError(f"rho must be 2x2, got shape {rho.shape}")
        if not np.all(np.isfinite(rho.view(float))):
            raise NumericalDivergence("rho contains non-finite entries")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
            raise ValueError("rho is not Hermitian within tolerance")
        tr = rho.trace().real
        if abs(tr - 1.0) > 1e-9:
            raise ValueError(f"rho trace {tr} deviates from 1")
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "QubitState":
        return density_from_bloch(x, y, z)

    @property
    def bloch(self) -> tuple[float, float, float]:
        return bloch_from_density(self)

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.rho @ self.rho)))


def bloch_from_density(s: QubitState) -> tuple[float, float, float]:
    """Bloch components r_j = Tr[sigma_j rho]."""
    rho = s.rho
    x = float(np.real(rho[0, 1] + rho[1, 0]))
    y = float(np.real(1j * (rho[0, 1] - rho[1, 0])))
    z = float(np.real(rho[0, 0] - rho[1, 1]))
    return (x, y, z)


def density_from_bloch(x: float, y: float, z: float) -> QubitState:
    """Inverse map rho = (I + r . sigma)/2; rejects |r| > 1 + 1e-6."""
    r = float(np.sqrt(x * x + y * y + z * z))
    if r > 1.0 + BLOCH_BALL_TOL:
        raise BlochOutOfBall(f"Bloch vector length {r} exceeds the unit ball")
    rho = 0.5 * (IDENTITY2 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)
    return QubitState(rho)


@dataclass(frozen=True)
class MeasurementRecord:
    """Per-step integrated homodyne currents J_k = I_k * dt for both channels."""

    dt: float
    j_x: np.ndarray
    j_z: np.ndarray

    def __post_init__(self):
        jx = np.asarray(self.j_x, dtype=float)
        jz = np.asarray(self.j_z, dtype=float)
        if jx.shape != jz.shape or jx.ndim != 1:
            raise ValueError("j_x and j_z must be 1-d arrays of equal length")
        if not (np.all(np.isfinite(jx)) and np.all(np.isfinite(jz))):
            raise NumericalDivergence("record contains non-finite entries")
        object.__setattr__(self, "j_x", jx)
        object.__setattr__(self, "j_z", jz)

    def __len__(self) -> int:
        return self.j_x.shape[0]


class BlochPath:
    """Sequence view over an (n, 3) array of Bloch vectors yielding QubitState."""

    def __init__(self, bloch: np.ndarray):
        self.bloch = np.asarray(bloch, dtype=float)

    def __len__(self) -> int:
        return self.bloch.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return BlochPath(self.bloch[i])
        x, y, z = self.bloch[i]
        return density_from_bloch(x, y, z)


@dataclass
class TrajectoryPair:
    """One true/estimated trajectory sharing a single measurement record."""

    times: np.ndarray
    true_states: BlochPath
    est_states: BlochPath
    record: MeasurementRecord
    repairs: int = 0
    zakai_weight: float = 0.0
    diverged: bool = False

    def __post_init__(self):
        n = len(self.times)
        if len(self.true_states) != n or len(self.est_states) != n:
            raise ValueError("state sequences must share the time-grid length")
        if len(self.record) != n - 1:
            raise ValueError("record must have n_steps - 1 entries")
        if self.repairs < 0:
            raise ValueError("repairs must be nonnegative")
