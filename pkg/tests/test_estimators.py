import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import cohgate as cg
from cohgate.core import SIGMA_X, SIGMA_Y, SIGMA_Z
from cohgate.dynamics import drift_matrix, simulate_ensemble, unconditional_evolve
from cohgate.estimators import (
    CovarianceBlowup,
    EstimatorConfig,
    ZeroTrace,
    psd_repair,
    run_estimator,
    run_estimator_ensemble,
    zakai_step,
)
from conftest import terminal_coherence


# ---------------------------------------------------------------------------
# PSD repair
# ---------------------------------------------------------------------------

def closest_psd_oracle(h):
    """Frobenius projection onto the PSD cone via numpy's eigensolver."""
    w, v = np.linalg.eigh(h)
    return (v * np.maximum(w, 0.0)) @ v.conj().T


def test_psd_repair_identity_cases():
    state, repaired = psd_repair(np.diag([0.6, 0.4]).astype(complex))
    assert not repaired
    assert np.allclose(state.rho, np.diag([0.6, 0.4]))

    state, repaired = psd_repair(np.diag([1.1, -0.1]).astype(complex))
    assert repaired
    assert np.allclose(state.rho, np.diag([1.0, 0.0]), atol=1e-12)


def test_psd_repair_closest_psd_property():
    rng = np.random.default_rng(8)
    for _ in range(50):
        v = rng.normal(size=4)
        h = 0.5 * ((1 + v[3]) * np.eye(2)
                   + v[0] * SIGMA_X + v[1] * SIGMA_Y + v[2] * SIGMA_Z)
        h = h.astype(complex)
        clipped = closest_psd_oracle(h)
        tr = np.real(np.trace(clipped))
        if tr <= 0:
            with pytest.raises(ZeroTrace):
                psd_repair(h)
            continue
        state, repaired = psd_repair(h)
        assert np.allclose(state.rho, clipped / tr, atol=1e-10)
        # clipping is the Frobenius-closest PSD point, pre-normalization
        for _ in range(20):
            q = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            q = q @ q.conj().T
            assert (np.linalg.norm(h - clipped) <=
                    np.linalg.norm(h - q) + 1e-12)
        w = np.linalg.eigvalsh(state.rho)
        assert w.min() >= -1e-12
        assert np.real(np.trace(state.rho)) == pytest.approx(1.0, abs=1e-12)


def test_psd_repair_zero_trace_raises():
    with pytest.raises(ZeroTrace):
        psd_repair(np.diag([-0.5, -0.5]).astype(complex))


def test_psd_repair_rejects_non_hermitian():
    with pytest.raises(ValueError):
        psd_repair(np.array([[1.0, 1.0], [0.0, 0.0]], dtype=complex))


# ---------------------------------------------------------------------------
# Direct SME
# ---------------------------------------------------------------------------

def test_direct_sme_step_static_identity():
    p = cg.table1_params(omega_x=0, delta=0, gamma_x=0, gamma_z=0,
                         gamma_rel=0, gamma_phi=0)
    rho = cg.density_from_bloch(0.3, 0.1, -0.2).rho
    out, repaired = cg.direct_sme_step(rho, 0.0, 0.0, p, 0.7, p.dt)
    assert not repaired
    assert np.allclose(out, rho, atol=1e-15)


def test_matched_direct_sme_reproduces_truth(angular_params):
    # on a shared grid, the matrix-form filter driven by its own
    # innovations retraces the Bloch-form truth path exactly, including
    # the repair events
    p = angular_params.with_updates(n_traj=300)
    ens = simulate_ensemble(p)
    out = run_estimator_ensemble(ens.records,
                                 EstimatorConfig("direct_sme", p.eta_true), p)
    s_true = terminal_coherence(ens.terminal)
    s_est = terminal_coherence(out["terminal"])
    assert np.max(np.abs(s_est - s_true)) < 1e-9
    assert np.array_equal(out["repairs"], ens.projections)


def test_conservative_bias_negative_at_3_sigma(angular_ensemble, angular_benchmark):
    s_true = terminal_coherence(angular_ensemble.terminal)
    for label in ("direct_sme_0.35", "direct_sme_0.3"):
        diff = terminal_coherence(angular_benchmark[label]["terminal"]) - s_true
        z = diff.mean() / (diff.std(ddof=1) / np.sqrt(len(diff)))
        assert z < -3.0


def test_repair_ordering(angular_benchmark):
    matched = angular_benchmark["direct_sme_matched"]["repairs"].mean()
    cons = angular_benchmark["direct_sme_0.35"]["repairs"].mean()
    zak = angular_benchmark["zakai_0.7"]["repairs"].mean()
    assert matched > cons >= zak == 0.0


def test_matched_filter_tracks_best(angular_ensemble, angular_benchmark):
    true_term = angular_ensemble.terminal
    def mean_dist(label):
        # trace distance between qubit states is half the Bloch distance
        d = angular_benchmark[label]["terminal"] - true_term
        return float(np.mean(0.5 * np.linalg.norm(d, axis=1)))
    matched = mean_dist("direct_sme_matched")
    for label in ("direct_sme_0.35", "direct_sme_0.3", "zakai_0.7", "ekf_0.7", "ekf_1"):
        assert matched < mean_dist(label)


def test_estimator_outputs_stay_physical(angular_benchmark):
    for label, out in angular_benchmark.items():
        norms = np.linalg.norm(out["terminal"], axis=1)
        assert np.all(norms <= 1 + 1e-9), label


def test_run_estimator_deterministic(angular_params, angular_ensemble):
    rec = angular_ensemble.record(5)
    cfg = EstimatorConfig("direct_sme", 0.35)
    path1, diag1 = run_estimator(rec, cfg, angular_params)
    path2, diag2 = run_estimator(rec, cfg, angular_params)
    assert np.array_equal(path1, path2)
    assert diag1 == diag2


# ---------------------------------------------------------------------------
# Zakai
# ---------------------------------------------------------------------------

def test_zakai_reduces_to_lindblad_without_measurement():
    p = cg.table1_params(gamma_x=0.0, gamma_z=0.0)
    rho = cg.density_from_bloch(0.5, 0.2, 0.1).rho
    out = zakai_step(rho, 0.3, -0.2, p, 0.7, p.dt)
    assert np.real(np.trace(out)) == pytest.approx(1.0, abs=1e-12)
    # record values are irrelevant once the coupling vanishes
    out2 = zakai_step(rho, 0.0, 0.0, p, 0.7, p.dt)
    assert np.allclose(out, out2, atol=1e-15)


def test_zakai_runs_clean_on_reference_records(angular_benchmark):
    out = angular_benchmark["zakai_0.7"]
    assert out["repairs"].sum() == 0
    assert not out["diverged"].any()


def test_zakai_weight_fluctuations_grow(angular_params, angular_ensemble):
    p = angular_params
    spreads = []
    for n_steps in (501, 1001, 2001):
        p_cut = p.with_updates(n_steps=n_steps)
        recs = angular_ensemble.records[:200, : n_steps - 1, :]
        out = run_estimator_ensemble(recs, EstimatorConfig("zakai", p.eta_true), p_cut)
        spreads.append(np.std(out["weight_log"]))
    assert spreads[0] < spreads[1] < spreads[2]


def test_zakai_zero_trace_raises():
    p = cg.table1_params()
    with pytest.raises(ZeroTrace):
        zakai_step(-np.eye(2, dtype=complex), 0.0, 0.0, p, 0.7, p.dt)


# ---------------------------------------------------------------------------
# EKF
# ---------------------------------------------------------------------------

class KalmanOracle:
    """Textbook linear Kalman filter used as an independent reference."""

    def __init__(self, F, c, H, R, x0, P0):
        self.F, self.c, self.H, self.R = F, c, H, R
        self.x, self.P = x0.copy(), P0.copy()

    def step(self, y):
        self.x = self.F @ self.x + self.c
        self.P = self.F @ self.P @ self.F.T
        S = self.H @ self.P @ self.H.T + self.R
        K = self.P @ self.H.T @ np.linalg.inv(S)
        self.x = self.x + K @ (y - self.H @ self.x)
        self.P = (np.eye(3) - K @ self.H) @ self.P
        self.P = 0.5 * (self.P + self.P.T)
        return self.x, self.P


def test_ekf_matches_kalman_oracle_on_linear_system():
    # intrinsic rates off: the Bloch model is exactly linear-Gaussian and
    # small states never trigger the ball projection
    p = cg.table1_params(gamma_rel=0.0, gamma_phi=0.0)
    eta_a = 0.6
    F = np.eye(3) + drift_matrix(p) * p.dt
    H = np.array([[np.sqrt(4 * eta_a * p.gamma_x), 0, 0],
                  [0, 0, np.sqrt(4 * eta_a * p.gamma_z)]])
    oracle = KalmanOracle(F, np.zeros(3), H, np.eye(2) / p.dt,
                          np.array([0.05, -0.02, 0.04]), 0.01 * np.eye(3))
    r = np.array([0.05, -0.02, 0.04])
    cov = 0.01 * np.eye(3)
    rng = np.random.default_rng(4)
    for _ in range(200):
        j = rng.normal(0, np.sqrt(p.dt), 2) * 0.2
        r, cov, projected = cg.ekf_step(r, cov, j[0], j[1], p, eta_a, p.dt)
        x_ref, p_ref = oracle.step(j / p.dt)
        assert not projected
        assert np.max(np.abs(r - x_ref)) < 1e-10
        assert np.max(np.abs(cov - p_ref)) < 1e-10


def test_ekf_zero_gain_follows_deterministic_drift():
    # with both measurement gains off, the update is inert and the filter
    # performs exactly its Euler drift prediction (plus ball projection)
    p = cg.table1_params(gamma_x=0.0, gamma_z=0.0)
    r = np.array([0.6, 0.0, 0.0])
    cov = 0.01 * np.eye(3)
    oracle = r.copy()
    for _ in range(p.n_steps - 1):
        r, cov, _ = cg.ekf_step(r, cov, 0.0, 0.0, p, 0.7, p.dt)
        oracle = oracle + np.array(cg.bloch_drift(oracle, p, 0.7).a) * p.dt
        if np.linalg.norm(oracle) > 1:
            oracle /= np.linalg.norm(oracle)
        assert np.allclose(r, oracle, atol=1e-12)
    # and the drift prediction converges to the unconditional curve
    _, s_uncond = unconditional_evolve(p, initial_state=np.array([0.6, 0.0, 0.0]))
    assert np.hypot(r[0], r[1]) == pytest.approx(s_uncond[-1], abs=0.02)


def test_ekf_covariance_blowup_detected():
    p = cg.table1_params()
    cov = np.eye(3) * 2e6
    with pytest.raises(CovarianceBlowup):
        cg.ekf_step(np.zeros(3), cov, 0.0, 0.0, p, 0.7, p.dt)


def test_ekf_strongly_conservative(angular_ensemble, angular_benchmark):
    s_true = terminal_coherence(angular_ensemble.terminal)
    for label in ("ekf_0.7", "ekf_1"):
        bias = np.mean(terminal_coherence(angular_benchmark[label]["terminal"]) - s_true)
        assert -0.75 <= bias <= -0.50
