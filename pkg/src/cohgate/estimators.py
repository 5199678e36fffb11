"""Real-time state estimators consuming a shared measurement record.

Three filter families, all run at an assumed efficiency ``eta_assumed``
that may deliberately differ from the ``eta_true`` that generated the
record:

* ``direct_sme`` -- Euler step of the full conditional master equation in
  2x2 matrix form, driven by the innovations
  dW_k = J_k - sqrt(4 eta_a gamma_k) <sigma_k> dt, followed by eigenvalue
  clipping (PSD repair).  Matrix form is deliberate: it makes positivity
  violations observable and countable.
* ``zakai`` -- linear, unnormalized filter driven by the raw record;
  readout is the trace-normalized state.  Never repairs.
* ``ekf`` -- extended Kalman filter on the Bloch vector: exact affine
  prediction, linear measurement model h_k(r) = sqrt(4 eta_a gamma_k) r_k
  with observation variance 1/dt per current sample, Bloch-ball projection
  on overshoot.  The covariance is propagated through the drift Jacobian
  only (no process-noise inflation), which reproduces the severe
  conservative bias this filter family shows on this problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    IDENTITY2,
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    MeasurementRecord,
    NumericalDivergence,
    QubitState,
    SimParams,
)
from .dynamics import DEFAULT_INITIAL_STATE, drift_matrix, _drift, _diffusion

__all__ = [
    "EstimatorConfig",
    "EstimatorDiagnostics",
    "ZeroTrace",
    "WeightOverflow",
    "CovarianceBlowup",
    "psd_repair",
    "psd_repair_bloch",
    "direct_sme_step",
    "zakai_step",
    "ekf_step",
    "run_estimator",
    "run_estimator_ensemble",
    "benchmark_configs",
]

KINDS = ("direct_sme", "zakai", "ekf")


class ZeroTrace(RuntimeError):
    pass


class WeightOverflow(RuntimeError):
    pass


class CovarianceBlowup(RuntimeError):
    pass


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str
    eta_assumed: float
    renorm_period: int = 50     # zakai only
    cov_init: float = 0.01      # ekf only
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if not 0.0 < self.eta_assumed <= 1.0:
            raise ValueError(f"eta_assumed must lie in (0, 1], got {self.eta_assumed}")
        if self.renorm_period < 1:
            raise ValueError("renorm_period must be >= 1")
        if not self.label:
            object.__setattr__(self, "label", f"{self.kind}_{self.eta_assumed:g}")


@dataclass
class EstimatorDiagnostics:
    psd_repairs: int = 0
    weight_log: float = 0.0
    projections: int = 0
    diverged: bool = False


def benchmark_configs(eta_true: float) -> list[EstimatorConfig]:
    """The seven-configuration benchmark set (reference handled by the caller)."""
    return [
        EstimatorConfig("direct_sme", eta_true, label="direct_sme_matched"),
        EstimatorConfig("direct_sme", 0.35),
        EstimatorConfig("direct_sme", 0.30),
        EstimatorConfig("zakai", eta_true),
        EstimatorConfig("ekf", eta_true),
        EstimatorConfig("ekf", 1.0),
    ]


# ---------------------------------------------------------------------------
# PSD repair
# ---------------------------------------------------------------------------

def psd_repair_bloch(trace: np.ndarray, v: np.ndarray,
                     tol_eig: float = 1e-12, tol_tr: float = 1e-12):
    """Clip-and-renormalize in the exact 2x2 eigenbasis, vectorized.

    A Hermitian h = (trace * I + v . sigma)/2 has eigenvalues
    (trace +- |v|)/2.  Negative eigenvalues are clipped at zero and the
    trace is renormalized to one.  Returns (trace_out=1 implied) the Bloch
    vector of the repaired state and the repaired flag.
    """
    trace = np.atleast_1d(np.asarray(trace, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    norm = np.sqrt(np.sum(v * v, axis=-1))
    lam_lo = 0.5 * (trace - norm)
    lam_hi = 0.5 * (trace + norm)
    repaired = (lam_lo < -tol_eig) | (lam_hi < -tol_eig) | (np.abs(trace - 1.0) > tol_tr)
    lo = np.maximum(lam_lo, 0.0)
    hi = np.maximum(lam_hi, 0.0)
    total = lo + hi
    if np.any(total <= 0.0):
        raise ZeroTrace("both eigenvalues clipped to zero")
    # New Bloch vector: (hi - lo)/(hi + lo) along v-hat; v = 0 stays at the origin.
    safe = np.where(norm > 0.0, norm, 1.0)
    scale = (hi - lo) / (total * safe)
    out = v * scale[..., None]
    return out, repaired


def psd_repair(h: np.ndarray) -> tuple[QubitState, bool]:
    """Repair one Hermitian 2x2 matrix into a physical density matrix."""
    h = np.asarray(h, dtype=complex)
    if np.max(np.abs(h - h.conj().T)) > 1e-9:
        raise ValueError("input is not Hermitian within tolerance")
    h = 0.5 * (h + h.conj().T)
    tr = float(np.real(h[0, 0] + h[1, 1]))
    v = np.array(
        [
            float(np.real(h[0, 1] + h[1, 0])),
            float(np.real(1j * (h[0, 1] - h[1, 0]))),
            float(np.real(h[0, 0] - h[1, 1])),
        ]
    )
    bloch, repaired = psd_repair_bloch(np.array([tr]), v[None, :])
    x, y, z = bloch[0]
    return QubitState.from_bloch(x, y, z), bool(repaired[0])


# ---------------------------------------------------------------------------
# Matrix-form conditional master equation (direct SME)
# ---------------------------------------------------------------------------

def _dissipator(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    Ld = L.conj().T
    LdL = Ld @ L
    return L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)


def _lindblad_rhs(rho: np.ndarray, p: SimParams) -> np.ndarray:
    """Deterministic generator of the conditional master equation (eta-free)."""
    H = 0.5 * p.omega_x * SIGMA_X + 0.5 * p.delta * SIGMA_Z
    out = -1j * (H @ rho - rho @ H)
    out += p.gamma_rel * _dissipator(SIGMA_MINUS, rho)
    out += p.gamma_phi * _dissipator(SIGMA_Z, rho)
    out += p.gamma_x * _dissipator(SIGMA_X, rho)
    out += p.gamma_z * _dissipator(SIGMA_Z, rho)
    return out


def _expectations(rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(<sigma_x>, <sigma_z>) for a stack of 2x2 matrices."""
    sx = 2.0 * np.real(rho[..., 0, 1])
    sz = np.real(rho[..., 0, 0] - rho[..., 1, 1])
    return sx, sz


def direct_sme_step(rho: np.ndarray, j_x: float, j_z: float, p: SimParams,
                    eta_a: float, dt: float):
    """One innovation-driven Euler step of the matrix-form SME plus repair.

    Returns (rho_next, repaired).  Accepts a single 2x2 matrix or a stack
    (n, 2, 2); the stacked variant returns a stacked repaired array and a
    boolean array of repair flags.
    """
    rho = np.asarray(rho, dtype=complex)
    single = rho.ndim == 2
    if rho.shape[-2:] != (2, 2):
        raise ValueError("rho must be 2x2 or a stack of 2x2 matrices")
    if single:
        rho = rho.reshape(1, 2, 2)
    ex, ez = _expectations(rho)
    dwx = np.asarray(j_x, dtype=float) - np.sqrt(4 * eta_a * p.gamma_x) * ex * dt
    dwz = np.asarray(j_z, dtype=float) - np.sqrt(4 * eta_a * p.gamma_z) * ez * dt
    hx = SIGMA_X @ rho + rho @ SIGMA_X - 2.0 * ex[..., None, None] * rho
    hz = SIGMA_Z @ rho + rho @ SIGMA_Z - 2.0 * ez[..., None, None] * rho
    rho_new = (
        rho
        + _lindblad_rhs(rho, p) * dt
        + np.sqrt(eta_a * p.gamma_x) * hx * dwx[..., None, None]
        + np.sqrt(eta_a * p.gamma_z) * hz * dwz[..., None, None]
    )
    if not np.all(np.isfinite(rho_new.view(float))):
        raise NumericalDivergence("direct SME step produced non-finite entries")
    tr = np.real(rho_new[..., 0, 0] + rho_new[..., 1, 1])
    v = np.stack(
        [
            2.0 * np.real(rho_new[..., 0, 1]),
            2.0 * np.imag(rho_new[..., 1, 0]),
            np.real(rho_new[..., 0, 0] - rho_new[..., 1, 1]),
        ],
        axis=-1,
    )
    bloch, repaired = psd_repair_bloch(tr, v)
    out = 0.5 * (
        IDENTITY2
        + bloch[..., 0, None, None] * SIGMA_X
        + bloch[..., 1, None, None] * SIGMA_Y
        + bloch[..., 2, None, None] * SIGMA_Z
    )
    if single:
        return out[0], bool(repaired[0])
    return out, repaired


# ---------------------------------------------------------------------------
# Zakai (linear, unnormalized) filter
# ---------------------------------------------------------------------------

def zakai_step(rho_u: np.ndarray, j_x: float, j_z: float, p: SimParams,
               eta_a: float, dt: float) -> np.ndarray:
    """One Euler step of the unnormalized linear filter, driven by the raw record."""
    rho_u = np.asarray(rho_u, dtype=complex)
    single = rho_u.ndim == 2
    if single:
        rho_u = rho_u.reshape(1, 2, 2)
    tr = np.real(rho_u[..., 0, 0] + rho_u[..., 1, 1])
    if np.any(tr <= 0.0):
        raise ZeroTrace("zakai state has non-positive trace")
    upd = (
        np.sqrt(eta_a * p.gamma_x) * (SIGMA_X @ rho_u + rho_u @ SIGMA_X) * np.asarray(j_x)[..., None, None]
        + np.sqrt(eta_a * p.gamma_z) * (SIGMA_Z @ rho_u + rho_u @ SIGMA_Z) * np.asarray(j_z)[..., None, None]
    )
    out = rho_u + _lindblad_rhs(rho_u, p) * dt + upd
    if not np.all(np.isfinite(out.view(float))):
        raise NumericalDivergence("zakai step produced non-finite entries")
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Extended Kalman filter on the Bloch vector
# ---------------------------------------------------------------------------

def ekf_step(r_est: np.ndarray, cov: np.ndarray, j_x: float, j_z: float,
             p: SimParams, eta_a: float, dt: float):
    """Predict/update step.  Returns (r_next, cov_next, projected)."""
    single = np.ndim(r_est) == 1
    r = np.atleast_2d(np.asarray(r_est, dtype=float))
    P = np.asarray(cov, dtype=float)
    if single:
        P = P.reshape(1, 3, 3)
    F = np.eye(3) + drift_matrix(p) * dt
    H = np.array([[np.sqrt(4 * eta_a * p.gamma_x), 0.0, 0.0],
                  [0.0, 0.0, np.sqrt(4 * eta_a * p.gamma_z)]])
    R = np.eye(2) / dt

    r_pred = r + _drift(r, p) * dt
    P = F @ P @ F.T
    y = np.stack([np.atleast_1d(np.asarray(j_x, float)) / dt,
                  np.atleast_1d(np.asarray(j_z, float)) / dt], axis=-1)
    innov = y - r_pred @ H.T
    S = H @ P @ H.T + R
    K = P @ H.T @ np.linalg.inv(S)
    r_new = r_pred + (K @ innov[..., None])[..., 0]
    P = (np.eye(3) - K @ H) @ P
    P = 0.5 * (P + np.transpose(P, (0, 2, 1)))
    # eigenvalue floor keeps the update well-posed after long gain decay
    w, V = np.linalg.eigh(P)
    if np.any(w > 1e6):
        raise CovarianceBlowup(f"covariance eigenvalue {w.max():.3e} exceeds 1e6")
    w = np.maximum(w, 1e-12)
    P = V @ (w[..., None] * np.transpose(V, (0, 2, 1)))
    norm = np.sqrt(np.sum(r_new * r_new, axis=-1))
    projected = norm > 1.0
    if np.any(projected):
        r_new = r_new.copy()
        r_new[projected] /= norm[projected, None]
    if not np.all(np.isfinite(r_new)):
        raise NumericalDivergence("ekf step produced non-finite state")
    if single:
        return r_new[0], P[0], bool(projected[0])
    return r_new, P, projected


# ---------------------------------------------------------------------------
# Full-record drivers
# ---------------------------------------------------------------------------

def _bloch_to_rho(r: np.ndarray) -> np.ndarray:
    return 0.5 * (
        IDENTITY2
        + r[..., 0, None, None] * SIGMA_X
        + r[..., 1, None, None] * SIGMA_Y
        + r[..., 2, None, None] * SIGMA_Z
    )


def _rho_to_bloch(rho: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            2.0 * np.real(rho[..., 0, 1]),
            2.0 * np.imag(rho[..., 1, 0]),
            np.real(rho[..., 0, 0] - rho[..., 1, 1]),
        ],
        axis=-1,
    )


def _readout_ball(bloch: np.ndarray) -> np.ndarray:
    """Project emitted readout states into the Bloch ball.

    The unnormalized linear filter is never repaired internally, but its
    trace-normalized state may transiently leave the physical set; the
    emitted readout is the radially projected state.
    """
    norm = np.sqrt(np.sum(bloch * bloch, axis=-1))
    over = norm > 1.0
    if np.any(over):
        bloch = bloch.copy()
        bloch[over] /= norm[over, None]
    return bloch


def run_estimator_ensemble(records: np.ndarray, cfg: EstimatorConfig, p: SimParams,
                           *, store_paths: bool = False,
                           initial_state=DEFAULT_INITIAL_STATE) -> dict:
    """Run one estimator over a stack of records, shape (n, n_steps-1, 2).

    Returns arrays: terminal (n, 3) readout Bloch vectors, repairs,
    projections, weight_log, diverged, and optionally paths (n, n_steps, 3).
    Deterministic: identical inputs give identical outputs.
    """
    records = np.asarray(records, dtype=float)
    n, n_inc, _ = records.shape
    if n_inc != p.n_steps - 1:
        raise ValueError("record length does not match the parameter grid")
    dt = p.dt
    r0 = np.asarray(initial_state, dtype=float)
    paths = np.empty((n, p.n_steps, 3)) if store_paths else None
    repairs = np.zeros(n, dtype=np.int64)
    projections = np.zeros(n, dtype=np.int64)
    weight_log = np.zeros(n)
    diverged = np.zeros(n, dtype=bool)

    if cfg.kind == "direct_sme":
        rho = np.tile(_bloch_to_rho(r0), (n, 1, 1))
        if store_paths:
            paths[:, 0] = _rho_to_bloch(rho)
        for i in range(n_inc):
            rho, rep = direct_sme_step(rho, records[:, i, 0], records[:, i, 1],
                                       p, cfg.eta_assumed, dt)
            repairs += rep
            if store_paths:
                paths[:, i + 1] = _rho_to_bloch(rho)
        terminal = _rho_to_bloch(rho)

    elif cfg.kind == "zakai":
        rho = np.tile(_bloch_to_rho(r0), (n, 1, 1))
        if store_paths:
            paths[:, 0] = _rho_to_bloch(rho)
        for i in range(n_inc):
            # trajectories whose unnormalized trace left (0, inf) are dead;
            # flag them and park them at the maximally mixed state
            tr = np.real(rho[:, 0, 0] + rho[:, 1, 1])
            bad = ~np.isfinite(tr) | (tr <= 0.0)
            if np.any(bad):
                diverged |= bad
                rho[bad] = 0.5 * IDENTITY2
            rho = zakai_step(rho, records[:, i, 0], records[:, i, 1],
                             p, cfg.eta_assumed, dt)
            if (i + 1) % cfg.renorm_period == 0 or i == n_inc - 1:
                tr = np.real(rho[:, 0, 0] + rho[:, 1, 1])
                bad = ~np.isfinite(tr) | (tr <= 0.0)
                if np.any(bad):
                    diverged |= bad
                    tr = np.where(bad, 1.0, tr)
                    rho[bad] = 0.5 * IDENTITY2
                step_log = np.log(tr)
                if np.any(np.abs(step_log) > 30.0):
                    raise WeightOverflow("zakai weight drifted past e^30 between renormalizations")
                weight_log += step_log
                rho = rho / tr[:, None, None]
            if store_paths:
                trv = np.real(rho[:, 0, 0] + rho[:, 1, 1])
                safe = np.where(np.isfinite(trv) & (trv > 0), trv, 1.0)
                paths[:, i + 1] = _readout_ball(_rho_to_bloch(rho / safe[:, None, None]))
        terminal = _readout_ball(_rho_to_bloch(rho))

    elif cfg.kind == "ekf":
        r = np.tile(r0, (n, 1))
        cov = np.tile(cfg.cov_init * np.eye(3), (n, 1, 1))
        if store_paths:
            paths[:, 0] = r
        for i in range(n_inc):
            r, cov, proj = ekf_step(r, cov, records[:, i, 0], records[:, i, 1],
                                    p, cfg.eta_assumed, dt)
            projections += proj
            if store_paths:
                paths[:, i + 1] = r
        terminal = r

    else:  # pragma: no cover - guarded by EstimatorConfig
        raise ValueError(cfg.kind)

    bad = ~np.all(np.isfinite(terminal), axis=-1)
    if np.any(bad):
        diverged |= bad
        terminal = terminal.copy()
        terminal[bad] = 0.0
    return {
        "terminal": terminal,
        "paths": paths,
        "repairs": repairs,
        "projections": projections,
        "weight_log": weight_log,
        "diverged": diverged,
    }


def run_estimator(record: MeasurementRecord, cfg: EstimatorConfig, p: SimParams,
                  *, initial_state=DEFAULT_INITIAL_STATE):
    """Run one estimator over a single record.

    Returns (est_bloch_path, EstimatorDiagnostics) with the path on the
    full time grid, shape (n_steps, 3).
    """
    records = np.stack([record.j_x, record.j_z], axis=-1)[None, :, :]
    out = run_estimator_ensemble(records, cfg, p, store_paths=True,
                                 initial_state=initial_state)
    diag = EstimatorDiagnostics(
        psd_repairs=int(out["repairs"][0]),
        weight_log=float(out["weight_log"][0]),
        projections=int(out["projections"][0]),
        diverged=bool(out["diverged"][0]),
    )
    return out["paths"][0], diag
