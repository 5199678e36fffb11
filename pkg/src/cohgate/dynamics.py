"""Ground-truth diffusive trajectory integration and the Lindblad baseline.

The conditional state of a monitored qubit closes exactly on the Bloch
vector, so the integrator works on 3-vectors: Euler-Maruyama steps of

    dr = a(r) dt + b_x(r) dW_x + b_z(r) dW_z,

with the deterministic part

    a = (-delta*y - rate_x*x,
         delta*x - omega_x*z - rate_y*y,
         omega_x*y - rate_z*z + gamma_rel)

and measurement backaction columns

    b_k,j = 2 sqrt(eta gamma_k) (delta_jk - r_j r_k).

Overshoots past the unit sphere are projected back radially, which is the
bias-minimal way to keep states physical under Euler stepping.  Each
trajectory draws its Wiener increments from a counter-based stream keyed
by (base_seed, trajectory_index), so ensembles are reproducible
per-trajectory regardless of chunking or scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    MeasurementRecord,
    BlochPath,
    NumericalDivergence,
    SimParams,
    TrajectoryPair,
    validate_params,
)

__all__ = [
    "BlochDrift",
    "bloch_drift",
    "drift_matrix",
    "sme_step",
    "synthesize_record",
    "EnsembleResult",
    "simulate_ensemble",
    "trajectory_wiener_increments",
    "unconditional_evolve",
    "unconditional_steady_state",
    "self_convergence_errors",
]


@dataclass(frozen=True)
class BlochDrift:
    """Drift vector and diffusion columns of the Bloch-vector SDE at one point."""

    a: np.ndarray
    b_x: np.ndarray
    b_z: np.ndarray


def drift_matrix(p: SimParams) -> np.ndarray:
    """Linear part A of the deterministic drift a(r) = A r + (0, 0, gamma_rel)."""
    return np.array(
        [
            [-p.rate_x, -p.delta, 0.0],
            [p.delta, -p.rate_y, -p.omega_x],
            [0.0, p.omega_x, -p.rate_z],
        ]
    )


def _drift(r: np.ndarray, p: SimParams) -> np.ndarray:
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    return np.stack(
        [
            -p.delta * y - p.rate_x * x,
            p.delta * x - p.omega_x * z - p.rate_y * y,
            p.omega_x * y - p.rate_z * z + p.gamma_rel,
        ],
        axis=-1,
    )


def _diffusion(r: np.ndarray, p: SimParams, eta: float) -> tuple[np.ndarray, np.ndarray]:
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    cx = 2.0 * np.sqrt(eta * p.gamma_x)
    cz = 2.0 * np.sqrt(eta * p.gamma_z)
    b_x = cx * np.stack([1.0 - x * x, -x * y, -x * z], axis=-1)
    b_z = cz * np.stack([-x * z, -y * z, 1.0 - z * z], axis=-1)
    return b_x, b_z


def bloch_drift(r, p: SimParams, eta: float) -> BlochDrift:
    """Drift and diffusion of the conditional Bloch vector at efficiency eta."""
    r = np.asarray(r, dtype=float)
    return BlochDrift(a=_drift(r, p), b_x=_diffusion(r, p, eta)[0], b_z=_diffusion(r, p, eta)[1])


def _project_ball(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Radially rescale rows with |r| > 1 onto the unit sphere."""
    norm = np.sqrt(np.sum(r * r, axis=-1))
    over = norm > 1.0
    if np.any(over):
        r = r.copy()
        r[over] /= norm[over, None]
    return r, over


def sme_step(state, dw_x: float, dw_z: float, p: SimParams, eta: float, dt: float):
    """One Euler-Maruyama step of the conditional Bloch dynamics.

    Accepts and returns a Bloch 3-vector (array-in, array-out); the
    matrix-form view is recoverable via ``core.density_from_bloch``.
    """
    r = np.atleast_2d(np.asarray(state, dtype=float))
    with np.errstate(invalid="ignore"):
        a = _drift(r, p)
        b_x, b_z = _diffusion(r, p, eta)
        r_new = (r + a * dt + b_x * np.asarray(dw_x)[..., None]
                 + b_z * np.asarray(dw_z)[..., None])
    if not np.all(np.isfinite(r_new)):
        raise NumericalDivergence("sme_step produced non-finite Bloch components")
    r_new, _ = _project_ball(r_new)
    return r_new[0] if np.ndim(state) == 1 else r_new


def synthesize_record(true_bloch: np.ndarray, dw_x: np.ndarray, dw_z: np.ndarray,
                      p: SimParams) -> MeasurementRecord:
    """Integrated homodyne currents for a trajectory generated with (dw_x, dw_z).

    J_k[i] = sqrt(4 eta_true gamma_k) <sigma_k>(t_i) dt + dw_k[i], with the
    conditional expectation taken at the start of each step, exactly as the
    integrator used it.
    """
    path = np.asarray(true_bloch, dtype=float)
    dw_x = np.asarray(dw_x, dtype=float)
    dw_z = np.asarray(dw_z, dtype=float)
    if len(dw_x) != path.shape[0] - 1 or len(dw_z) != path.shape[0] - 1:
        raise ValueError("increment sequences must have n_steps - 1 entries")
    dt = p.dt
    j_x = np.sqrt(4 * p.eta_true * p.gamma_x) * path[:-1, 0] * dt + dw_x
    j_z = np.sqrt(4 * p.eta_true * p.gamma_z) * path[:-1, 2] * dt + dw_z
    return MeasurementRecord(dt=dt, j_x=j_x, j_z=j_z)


def trajectory_wiener_increments(p: SimParams, traj_index: int,
                                 oversample: int = 1) -> np.ndarray:
    """Wiener increments for one trajectory, shape (oversample*(n_steps-1), 2).

    Drawn from a Philox stream keyed by (base_seed, traj_index); the same
    pair always yields the same increments, independent of ensemble
    chunking.
    """
    ss = np.random.SeedSequence((int(p.base_seed) & 0xFFFFFFFFFFFFFFFF, int(traj_index)))
    rng = np.random.Generator(np.random.Philox(ss))
    n = (p.n_steps - 1) * oversample
    return rng.normal(0.0, np.sqrt(p.dt / oversample), size=(n, 2))


def trajectory_seed(p: SimParams, traj_index: int) -> int:
    ss = np.random.SeedSequence((int(p.base_seed) & 0xFFFFFFFFFFFFFFFF, int(traj_index)))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class EnsembleResult:
    """Array-layer output of :func:`simulate_ensemble`.

    ``bloch_paths`` is (n_traj, n_kept, 3) when paths are stored (stride
    applied), otherwise None.  ``records`` is (n_traj, n_steps-1, 2) with
    channels ordered (x, z).  ``max_r2`` tracks the per-trajectory maximum
    of |r|^2 over every step, for the Bloch-ball diagnostic.
    """

    params: SimParams
    times: np.ndarray
    terminal: np.ndarray
    records: np.ndarray | None
    bloch_paths: np.ndarray | None
    path_stride: int
    projections: np.ndarray
    max_r2: np.ndarray
    mean_path: np.ndarray
    diverged: np.ndarray
    seeds: np.ndarray
    initial_state: np.ndarray
    oversample: int

    @property
    def n_traj(self) -> int:
        return self.terminal.shape[0]

    def record(self, i: int) -> MeasurementRecord:
        if self.records is None:
            raise ValueError("ensemble was run with store_records=False")
        return MeasurementRecord(dt=self.params.dt, j_x=self.records[i, :, 0],
                                 j_z=self.records[i, :, 1])

    def pair_with(self, i: int, est_path: np.ndarray, repairs: int = 0,
                  zakai_weight: float = 0.0, diverged: bool = False) -> TrajectoryPair:
        if self.bloch_paths is None or self.path_stride != 1:
            raise ValueError("full paths are required to build TrajectoryPair")
        return TrajectoryPair(
            times=self.times,
            true_states=BlochPath(self.bloch_paths[i]),
            est_states=BlochPath(est_path),
            record=self.record(i),
            repairs=repairs,
            zakai_weight=zakai_weight,
            diverged=diverged,
        )


DEFAULT_INITIAL_STATE = np.array([1.0, 0.0, 0.0])  # |+>, maximal initial coherence


def simulate_ensemble(p: SimParams, *, store_records: bool = True,
                      store_paths: bool = False, path_stride: int = 1,
                      oversample: int = 1, chunk: int = 4000,
                      initial_state=DEFAULT_INITIAL_STATE) -> EnsembleResult:
    """Generate the ground-truth ensemble at eta_true with its records.

    With ``oversample=K`` the state advances on a K-times finer grid while
    the record is still integrated per coarse step, emulating a detector
    that integrates the photocurrent over each estimator update interval.
    Trajectory i depends only on (base_seed, i).
    """
    p = validate_params(p)
    n, n_steps, dt = p.n_traj, p.n_steps, p.dt
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    dt_f = dt / oversample
    r0 = np.asarray(initial_state, dtype=float)
    if r0.shape != (3,) or np.linalg.norm(r0) > 1.0 + 1e-12:
        raise ValueError("initial state must be a Bloch vector inside the unit ball")

    kept = range(0, n_steps, path_stride)
    n_kept = len(kept)
    times = np.arange(n_steps) * dt

    terminal = np.empty((n, 3))
    records = np.empty((n, n_steps - 1, 2)) if store_records else None
    paths = np.empty((n, n_kept, 3)) if store_paths else None
    projections = np.zeros(n, dtype=np.int64)
    max_r2 = np.zeros(n)
    mean_path = np.zeros((n_steps, 3))
    diverged = np.zeros(n, dtype=bool)
    seeds = np.array([trajectory_seed(p, i) for i in range(n)], dtype=np.uint64)

    cx = np.sqrt(4 * p.eta_true * p.gamma_x)
    cz = np.sqrt(4 * p.eta_true * p.gamma_z)

    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        m = hi - lo
        dw = np.empty((m, (n_steps - 1) * oversample, 2))
        for i in range(lo, hi):
            dw[i - lo] = trajectory_wiener_increments(p, i, oversample)
        r = np.tile(r0, (m, 1))
        max_r2[lo:hi] = np.sum(r * r, axis=1)
        mean_path[0] += r.sum(axis=0)
        if store_paths:
            paths[lo:hi, 0] = r
        kept_idx = 1
        for step in range(n_steps - 1):
            jx = np.zeros(m)
            jz = np.zeros(m)
            for sub in range(oversample):
                w = dw[:, step * oversample + sub, :]
                jx += cx * r[:, 0] * dt_f + w[:, 0]
                jz += cz * r[:, 2] * dt_f + w[:, 1]
                a = _drift(r, p)
                b_x, b_z = _diffusion(r, p, p.eta_true)
                r = r + a * dt_f + b_x * w[:, 0:1] + b_z * w[:, 1:2]
                r, over = _project_ball(r)
                projections[lo:hi] += over
            bad = ~np.all(np.isfinite(r), axis=1)
            if np.any(bad):
                diverged[lo:hi] |= bad
                r[bad] = 0.0
            if store_records:
                records[lo:hi, step, 0] = jx
                records[lo:hi, step, 1] = jz
            np.maximum(max_r2[lo:hi], np.sum(r * r, axis=1), out=max_r2[lo:hi])
            mean_path[step + 1] += r.sum(axis=0)
            if store_paths and (step + 1) % path_stride == 0:
                paths[lo:hi, kept_idx] = r
                kept_idx += 1
        terminal[lo:hi] = r

    mean_path /= n
    return EnsembleResult(
        params=p,
        times=times,
        terminal=terminal,
        records=records,
        bloch_paths=paths,
        path_stride=path_stride,
        projections=projections,
        max_r2=max_r2,
        mean_path=mean_path,
        diverged=diverged,
        seeds=seeds,
        initial_state=r0,
        oversample=oversample,
    )


def unconditional_evolve(p: SimParams, *, initial_state=DEFAULT_INITIAL_STATE,
                         t_final: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (Lindblad) evolution: Eq. of motion with the noise dropped.

    Returns (times, s_uncond) where s_uncond(t) is the coherence score of
    the unconditional state.  Independent of eta.  Pass ``t_final`` to
    integrate past the decision time, e.g. to read off the collapse
    plateau.  The dynamics is affine with constant coefficients, so each
    grid step applies the exact propagator of the augmented system (no
    Euler norm inflation in the unitary limit).
    """
    from scipy.linalg import expm

    p = validate_params(p)
    t_end = p.t_final if t_final is None else float(t_final)
    n_steps = max(2, int(round(t_end / p.dt)) + 1)
    aug = np.zeros((4, 4))
    aug[:3, :3] = drift_matrix(p)
    aug[:3, 3] = [0.0, 0.0, p.gamma_rel]
    prop = expm(aug * p.dt)
    state = np.append(np.asarray(initial_state, dtype=float), 1.0)
    out = np.empty(n_steps)
    out[0] = np.hypot(state[0], state[1])
    for i in range(1, n_steps):
        state = prop @ state
        out[i] = np.hypot(state[0], state[1])
    return np.arange(n_steps) * p.dt, out


def unconditional_steady_state(p: SimParams) -> np.ndarray:
    """Fixed point of the deterministic drift, A r = -(0, 0, gamma_rel)."""
    A = drift_matrix(p)
    return np.linalg.solve(A, -np.array([0.0, 0.0, p.gamma_rel]))


def self_convergence_errors(p: SimParams, n_traj: int = 256, seed: int = 1,
                            ref_refine: int = 16) -> tuple[float, float]:
    """RMS terminal Bloch error of Euler stepping at dt and dt/2.

    All three resolutions (dt, dt/2 and the dt/ref_refine reference) share
    one Brownian path per trajectory, built by summing the fine increments.
    Strong order >= 0.5 shows as err(dt/2) <= err(dt)/sqrt(2) up to noise.
    """
    if ref_refine % 2:
        raise ValueError("ref_refine must be even")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    n_coarse = p.n_steps - 1
    dt_f = p.dt / ref_refine
    err = {1: 0.0, 2: 0.0}
    for _ in range(n_traj):
        dw_f = rng.normal(0.0, np.sqrt(dt_f), size=(n_coarse * ref_refine, 2))
        final = {}
        for refine in (1, 2, ref_refine):
            group = ref_refine // refine
            dw = dw_f.reshape(-1, group, 2).sum(axis=1)
            r = DEFAULT_INITIAL_STATE.copy()[None, :]
            h = p.dt / refine
            for k in range(n_coarse * refine):
                a = _drift(r, p)
                b_x, b_z = _diffusion(r, p, p.eta_true)
                r = r + a * h + b_x * dw[k, 0] + b_z * dw[k, 1]
                r, _ = _project_ball(r)
            final[refine] = r[0]
        for refine in (1, 2):
            err[refine] += float(np.sum((final[refine] - final[ref_refine]) ** 2))
    return np.sqrt(err[1] / n_traj), np.sqrt(err[2] / n_traj)
