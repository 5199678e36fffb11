"""Batch front-end emitting the CSV/JSON data products behind every figure.

Configuration is a flat key=value file (JSON also accepted); command-line
flags override file values.  All data files are written deterministically:
same config + seed means byte-identical CSVs.  Timestamps live only in the
run manifest.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import certify, gating
from .bounds import (
    NonRestoringDrift,
    simulate_joint,
    overcert_stats,
    ou_tail,
    OUParams,
    supermartingale_bound,
    supermartingale_tail,
)
from .core import (
    ParameterError,
    NumericalDivergence,
    SimParams,
    TWO_PI,
    validate_params,
)
from .dynamics import (
    simulate_ensemble,
    unconditional_evolve,
    unconditional_steady_state,
)
from .estimators import (
    CovarianceBlowup,
    EstimatorConfig,
    WeightOverflow,
    ZeroTrace,
    benchmark_configs,
    run_estimator_ensemble,
)
from .gating import equatorial_phase_array

COMMANDS = ("demo", "estimators", "qrng", "gate-sweep", "overcert", "rstar",
            "certify-tables")

CONFIG_KEYS = {
    "omega_x": float, "delta": float, "gamma_x": float, "gamma_z": float,
    "gamma_rel": float, "gamma_phi": float, "eta_true": float,
    "eta_assumed": float, "s_th": float, "t_final": float, "n_steps": int,
    "n_traj": int, "base_seed": int, "estimator": str,
    "units": str, "oversample": int,
}

# OU parameters of the error process at the reference operating point
# (eta_assumed = 0.35 against eta_true = 0.7, plain units); used to label
# certification tables when no fresh fit is supplied.
REFERENCE_OU = OUParams(mu=1.20, e_bar=-0.157, sigma_e=0.142, nu=-0.1884)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    omega_x: float = 1.0
    delta: float = 0.5
    gamma_x: float = 0.1
    gamma_z: float = 0.1
    gamma_rel: float = 0.01
    gamma_phi: float = 0.01
    eta_true: float = 0.7
    eta_assumed: float = 0.35
    s_th: float = 0.7
    t_final: float = 10.0
    n_steps: int = 2001
    n_traj: int = 3000
    base_seed: int = 20240817
    estimator: str = "direct_sme"
    units: str = "plain"
    oversample: int = 1

    def sim_params(self) -> SimParams:
        scale = 1.0
        if self.units == "angular":
            scale = TWO_PI
        elif self.units != "plain":
            raise ConfigError(f"units must be 'plain' or 'angular', got {self.units!r}")
        if self.oversample < 1:
            raise ConfigError("oversample must be >= 1")
        try:
            return validate_params(SimParams(
                omega_x=self.omega_x * scale,
                delta=self.delta * scale,
                gamma_x=self.gamma_x * scale,
                gamma_z=self.gamma_z * scale,
                gamma_rel=self.gamma_rel * scale,
                gamma_phi=self.gamma_phi * scale,
                eta_true=self.eta_true,
                s_th=self.s_th,
                t_final=self.t_final,
                n_steps=self.n_steps,
                n_traj=self.n_traj,
                base_seed=self.base_seed,
            ))
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc

    def normalized_lines(self) -> list[str]:
        d = asdict(self)
        return [f"{k}={d[k]!r}" if isinstance(d[k], str) else f"{k}={d[k]:.12g}"
                if isinstance(d[k], float) else f"{k}={d[k]}"
                for k in sorted(d)]

    def config_hash(self) -> str:
        payload = "\n".join(self.normalized_lines()).encode()
        return hashlib.sha256(payload).hexdigest()


def parse_config_file(path: Path) -> dict:
    text = path.read_text()
    raw: dict = {}
    if text.lstrip().startswith("{"):
        raw = json.loads(text)
    else:
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            raw[key.strip()] = value.strip()
    out = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            out[key] = CONFIG_KEYS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return out


def load_config(args) -> RunConfig:
    values: dict = {}
    if args.config:
        values.update(parse_config_file(Path(args.config)))
    if args.seed is not None:
        values["base_seed"] = args.seed
    if args.n_traj is not None:
        values["n_traj"] = args.n_traj
    if args.units is not None:
        values["units"] = args.units
    if args.oversample is not None:
        values["oversample"] = args.oversample
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    cfg.sim_params()  # validate early
    return cfg


# ---------------------------------------------------------------------------
# deterministic writers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.9g" % float(value)


def write_csv(path: Path, header: list[str], rows) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def write_json(path: Path, payload: dict) -> Path:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n",
                    newline="\n")
    return path


@dataclass
class RunManifest:
    config_hash: str
    seed: int
    command: str
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        return write_json(out_dir / "manifest.json", asdict(self))


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def _terminal_stats(terminal: np.ndarray):
    s = np.hypot(terminal[:, 0], terminal[:, 1])
    z = terminal[:, 2]
    pur = 0.5 * (1.0 + np.sum(terminal * terminal, axis=1))
    return s, z, pur


def _trajectory_rows(ens, est_terminal, repairs, diverged, s_th):
    s_t, z_t, p_t = _terminal_stats(ens.terminal)
    s_e, z_e, p_e = _terminal_stats(est_terminal)
    phase = equatorial_phase_array(est_terminal)
    for i in range(ens.n_traj):
        yield (i, int(ens.seeds[i]), s_t[i], z_t[i], p_t[i], s_e[i], z_e[i],
               p_e[i], phase[i], s_t[i] > s_th, s_e[i] > s_th,
               int(repairs[i]), bool(diverged[i]))


TRAJECTORIES_HEADER = ["traj_id", "seed", "s_true", "z_true", "purity_true",
                       "s_est", "z_est", "purity_est", "phase_est",
                       "accepted_true", "accepted_est", "psd_repairs", "diverged"]
METRICS_HEADER = ["estimator", "eta_assumed", "mean_bias", "mismatch_rate",
                  "mean_repairs", "heralding_eff"]
OVERCERT_HEADER = ["epsilon", "empirical", "ou_bound", "sm_bound"]


def _run_benchmark_config(ens, cfg: EstimatorConfig, p: SimParams):
    out = run_estimator_ensemble(ens.records, cfg, p)
    s_t, _, _ = _terminal_stats(ens.terminal)
    s_e, _, _ = _terminal_stats(out["terminal"])
    repairs = out["repairs"] if cfg.kind != "ekf" else out["projections"]
    return {
        "label": cfg.label,
        "eta_assumed": cfg.eta_assumed,
        "terminal": out["terminal"],
        "repairs": repairs,
        "diverged": out["diverged"],
        "mean_bias": float(np.mean(s_e - s_t)),
        "mismatch_rate": float(np.mean((s_e > p.s_th) != (s_t > p.s_th))),
        "mean_repairs": float(np.mean(repairs)),
        "heralding_eff": float(np.mean(s_e > p.s_th)),
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_demo(cfg: RunConfig, out_dir: Path) -> list[Path]:
    p = cfg.sim_params()
    n_sample = min(10, p.n_traj)
    sample = simulate_ensemble(p.with_updates(n_traj=n_sample), store_records=False,
                               store_paths=True, oversample=cfg.oversample)
    ens = simulate_ensemble(p, store_records=False, oversample=cfg.oversample)
    times_u, s_u = unconditional_evolve(p)
    _, s_u_long = unconditional_evolve(p, t_final=6.0 * p.t_final)
    s_t, z_t, p_t = _terminal_stats(ens.terminal)
    phase = equatorial_phase_array(ens.terminal)

    files = []
    rows = []
    for i in range(n_sample):
        s_path = np.hypot(sample.bloch_paths[i, :, 0], sample.bloch_paths[i, :, 1])
        rows.extend((sample.times[k], i, s_path[k]) for k in range(len(sample.times)))
    files.append(write_csv(out_dir / "demo_paths.csv", ["time", "traj_id", "s_cond"], rows))
    files.append(write_csv(out_dir / "uncond.csv", ["time", "s_uncond"],
                           zip(times_u, s_u)))
    counts, edges = np.histogram(s_t, bins=50, range=(0.0, 1.0))
    files.append(write_csv(out_dir / "hist_s.csv", ["bin_lo", "bin_hi", "count"],
                           zip(edges[:-1], edges[1:], counts)))
    files.append(write_csv(
        out_dir / "terminal.csv",
        ["traj_id", "seed", "s_true", "z_true", "purity_true", "phase_true",
         "accepted_true"],
        ((i, int(ens.seeds[i]), s_t[i], z_t[i], p_t[i], phase[i], s_t[i] > p.s_th)
         for i in range(ens.n_traj)),
    ))
    summary = {
        "mean_s_terminal": float(np.mean(s_t)),
        "uncond_s_at_t_final": float(s_u[-1]),
        "uncond_s_plateau": float(s_u_long[-1]),
        "uncond_s_steady_state": float(np.hypot(*unconditional_steady_state(p)[:2])),
        "heralding_efficiency": float(np.mean(s_t > p.s_th)),
        "accepted_count": int(np.sum(s_t > p.s_th)),
        "max_bloch_violation": float(np.max(ens.max_r2) - 1.0),
        "s_th": p.s_th,
    }
    files.append(write_json(out_dir / "summary.json", summary))
    return files


def cmd_estimators(cfg: RunConfig, out_dir: Path) -> list[Path]:
    p = cfg.sim_params()
    ens = simulate_ensemble(p, oversample=cfg.oversample)
    s_t, _, _ = _terminal_stats(ens.terminal)

    results = []
    reference = {
        "label": "reference",
        "eta_assumed": p.eta_true,
        "terminal": ens.terminal,
        "repairs": ens.projections,
        "diverged": ens.diverged,
        "mean_bias": 0.0,
        "mismatch_rate": 0.0,
        "mean_repairs": float(np.mean(ens.projections)),
        "heralding_eff": float(np.mean(s_t > p.s_th)),
    }
    results.append(reference)
    for est_cfg in benchmark_configs(p.eta_true):
        results.append(_run_benchmark_config(ens, est_cfg, p))

    files = []
    files.append(write_csv(
        out_dir / "metrics.csv", METRICS_HEADER,
        ((r["label"], r["eta_assumed"], r["mean_bias"], r["mismatch_rate"],
          r["mean_repairs"], r["heralding_eff"]) for r in results),
    ))
    chosen = next((r for r in results
                   if r["label"] == f"{cfg.estimator}_{cfg.eta_assumed:g}"), None)
    if chosen is None:
        chosen_cfg = EstimatorConfig(cfg.estimator, cfg.eta_assumed)
        chosen = _run_benchmark_config(ens, chosen_cfg, p)
    files.append(write_csv(
        out_dir / "trajectories.csv", TRAJECTORIES_HEADER,
        _trajectory_rows(ens, chosen["terminal"], chosen["repairs"],
                         chosen["diverged"], p.s_th),
    ))
    # single-trajectory overlay: rerun trajectory 0 with its path stored
    single = simulate_ensemble(p.with_updates(n_traj=1), store_paths=True,
                               oversample=cfg.oversample)
    overlay_cols = ["time", "s_true"]
    overlay_data = [single.times,
                    np.hypot(single.bloch_paths[0, :, 0], single.bloch_paths[0, :, 1])]
    for est_cfg in benchmark_configs(p.eta_true):
        out = run_estimator_ensemble(single.records, est_cfg, p, store_paths=True)
        overlay_cols.append(f"s_{est_cfg.label}")
        overlay_data.append(np.hypot(out["paths"][0, :, 0], out["paths"][0, :, 1]))
    files.append(write_csv(out_dir / "overlay.csv", overlay_cols,
                           zip(*overlay_data)))
    summary = {r["label"]: {k: r[k] for k in
                            ("eta_assumed", "mean_bias", "mismatch_rate",
                             "mean_repairs", "heralding_eff")}
               for r in results}
    files.append(write_json(out_dir / "summary.json", summary))
    return files


QRNG_GRID = np.linspace(0.05, 0.95, 10)


def cmd_qrng(cfg: RunConfig, out_dir: Path) -> list[Path]:
    p = cfg.sim_params()
    ens = simulate_ensemble(p, store_records=False, oversample=cfg.oversample)
    s_t, z_t, _ = _terminal_stats(ens.terminal)
    files = []
    rows = []
    for s_th in QRNG_GRID:
        acc = s_t > s_th
        n_acc = int(acc.sum())
        lo, hi = certify.pz_interval(s_th)
        if n_acc:
            emp = certify.empirical_min_entropy(z_t[acc])
            pz = (1.0 + z_t[acc]) / 2.0
            pz_lo, pz_hi = float(pz.min()), float(pz.max())
        else:
            emp, pz_lo, pz_hi = float("nan"), float("nan"), float("nan")
        rows.append((s_th, n_acc, certify.min_entropy_bound(s_th), emp,
                     lo, hi, pz_lo, pz_hi))
    files.append(write_csv(
        out_dir / "qrng.csv",
        ["s_th", "n_accepted", "h_min_bound", "h_min_empirical",
         "pz_lo", "pz_hi", "pz_emp_min", "pz_emp_max"],
        rows,
    ))
    hist_rows = []
    for s_th in (0.3, 0.9):
        acc = s_t > s_th
        pz = (1.0 + z_t[acc]) / 2.0
        counts, edges = np.histogram(pz, bins=40, range=(0.0, 1.0))
        hist_rows.extend(zip([s_th] * 40, edges[:-1], edges[1:], counts))
    files.append(write_csv(out_dir / "pz_hist.csv",
                           ["s_th", "bin_lo", "bin_hi", "count"], hist_rows))
    summary = {
        "h_min_bound_095": certify.min_entropy_bound(0.95),
        "h_min_bound_099": certify.min_entropy_bound(0.99),
        "empirical_dominates_bound": bool(all(
            (r[1] < 30) or (r[3] >= r[2] - 1e-12) for r in rows
        )),
        "grid": [float(v) for v in QRNG_GRID],
    }
    files.append(write_json(out_dir / "summary.json", summary))
    return files


def cmd_gate_sweep(cfg: RunConfig, out_dir: Path) -> list[Path]:
    p = cfg.sim_params()
    ens = simulate_ensemble(p, oversample=cfg.oversample)
    est_cfg = EstimatorConfig(cfg.estimator, cfg.eta_assumed)
    run = _run_benchmark_config(ens, est_cfg, p)
    s_t, _, _ = _terminal_stats(ens.terminal)
    s_e, _, _ = _terminal_stats(run["terminal"])
    grid = np.linspace(0.05, 0.95, 19)
    metrics = gating.gating_sweep(ens.terminal, run["terminal"], grid,
                                  mean_repairs=run["mean_repairs"])
    rows = []
    for m in metrics:
        acc_t = s_t > m.s_th
        acc_e = s_e > m.s_th
        p_a_given_a = float(np.mean(acc_e[acc_t])) if acc_t.any() else float("nan")
        rows.append((m.s_th, m.heralding_efficiency, m.mismatch_rate,
                     float(np.mean(acc_e)), p_a_given_a, m.accepted_count))
    files = [write_csv(
        out_dir / "threshold.csv",
        ["s_th", "heralding_eff", "mismatch_rate", "est_accept_rate",
         "p_route_a_given_true_a", "accepted_count"],
        rows,
    )]
    summary = {
        "estimator": est_cfg.label,
        "mean_bias": run["mean_bias"],
        "heralding_at_s_th": float(np.mean(s_t > p.s_th)),
        "monotone_heralding": bool(np.all(np.diff([r[1] for r in rows]) <= 1e-12)),
    }
    files.append(write_json(out_dir / "summary.json", summary))
    return files


OVERCERT_EPS_GRID = np.array([0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3])


def cmd_overcert(cfg: RunConfig, out_dir: Path) -> list[Path]:
    p = cfg.sim_params()
    if p.n_traj > 1_000_000:
        raise ConfigError("overcert accepts n_traj up to 1e6")
    je = simulate_joint(p, cfg.eta_assumed)
    ou, table = je.fit_ou(with_table=True)
    stats = overcert_stats(je.terminal, OVERCERT_EPS_GRID)
    sm = supermartingale_bound(p, cfg.eta_assumed, 0.0)
    sm_bounds = supermartingale_tail(p, cfg.eta_assumed, OVERCERT_EPS_GRID)
    files = [write_csv(
        out_dir / "overcert.csv", OVERCERT_HEADER,
        ((eps, emp, ou_tail(ou, float(eps)), smb)
         for eps, emp, smb in zip(OVERCERT_EPS_GRID, stats.tail_curve, sm_bounds)),
    )]
    files.append(write_csv(
        out_dir / "ou_fit.csv",
        ["e_center", "drift", "weight", "fit"],
        zip(table["centers"], table["drifts"], table["weights"], table["fit"]),
    ))
    e_terminal = (je.terminal[:, 3] ** 2 + je.terminal[:, 4] ** 2
                  - je.terminal[:, 0] ** 2 - je.terminal[:, 1] ** 2)
    counts, edges = np.histogram(e_terminal, bins=80, range=(-1.0, 1.0))
    files.append(write_csv(out_dir / "e_hist.csv", ["e_lo", "e_hi", "count"],
                           zip(edges[:-1], edges[1:], counts)))
    # geometric loophole: polar-angle histograms and exceedance curves
    r2_t = np.sum(je.terminal[:, :3] ** 2, axis=1)
    r2_e = np.sum(je.terminal[:, 3:] ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        th_t = np.arccos(np.clip(je.terminal[:, 2] / np.sqrt(r2_t), -1, 1))
        th_e = np.arccos(np.clip(je.terminal[:, 5] / np.sqrt(r2_e), -1, 1))
    ct, edges_t = np.histogram(th_t[np.isfinite(th_t)], bins=48, range=(0.0, np.pi))
    ce, _ = np.histogram(th_e[np.isfinite(th_e)], bins=48, range=(0.0, np.pi))
    files.append(write_csv(out_dir / "geometric.csv",
                           ["theta_lo", "theta_hi", "count_true", "count_est"],
                           zip(edges_t[:-1], edges_t[1:], ct, ce)))
    s_t = np.hypot(je.terminal[:, 0], je.terminal[:, 1])
    s_e = np.hypot(je.terminal[:, 3], je.terminal[:, 4])
    taus = np.linspace(0.0, 0.3, 31)
    files.append(write_csv(
        out_dir / "geometric_exceed.csv", ["tau", "p_coh", "p_pur"],
        ((t, float(np.mean(s_e - s_t > t)), float(np.mean(r2_e - r2_t > 2 * t)))
         for t in taus),
    ))
    summary = {
        "n_traj": stats.n_traj,
        "p_s_over": stats.p_s_over,
        "p_purity_over": stats.p_purity_over,
        "amplification": stats.amplification,
        "ou_mu": ou.mu, "ou_e_bar": ou.e_bar, "ou_sigma_e": ou.sigma_e,
        "ou_nu": ou.nu, "ou_fit_r2": ou.fit_r2,
        "ou_tail_0": ou_tail(ou, 0.0),
        "visited_drift_max": je.visited_drift_max,
        "sup_drift_K": sm.max_drift,
        "sm_bound_eps0": sm.bound,
        "polar_true": stats.polar_true,
        "polar_est": stats.polar_est,
    }
    files.append(write_json(out_dir / "summary.json", summary))
    return files


def cmd_rstar(cfg: RunConfig, out_dir: Path) -> list[Path]:
    p = cfg.sim_params()
    ens = simulate_ensemble(p, oversample=cfg.oversample)
    s_t, _, _ = _terminal_stats(ens.terminal)
    ratios = np.linspace(0.1, 1.0, 12)
    rows = []
    for ratio in ratios:
        est_cfg = EstimatorConfig(cfg.estimator, float(ratio * p.eta_true))
        run = _run_benchmark_config(ens, est_cfg, p)
        rows.append((float(ratio), est_cfg.eta_assumed, run["mean_bias"],
                     run["mismatch_rate"], run["mean_repairs"]))
    bias = np.array([r[2] for r in rows])
    mismatch = np.array([r[3] for r in rows])
    feasible = mismatch <= mismatch[-1] + 0.02
    r_star_emp = float(ratios[feasible][np.argmin(np.abs(bias[feasible]))])
    mean_s = float(np.mean(s_t))
    files = [write_csv(out_dir / "rstar.csv",
                       ["ratio", "eta_assumed", "mean_bias", "mismatch_rate",
                        "mean_repairs"], rows)]
    summary = {
        "r_star_empirical": r_star_emp,
        "r_star_formula_mean_s": certify.optimal_eta_ratio(p, mean_s),
        "r_star_formula_s_typ": certify.optimal_eta_ratio(p, certify.s_typ(p)),
        "mean_s": mean_s,
        "s_typ": certify.s_typ(p),
        "matched_mismatch": float(mismatch[-1]),
    }
    files.append(write_json(out_dir / "summary.json", summary))
    return files


COMPOSABLE_POINTS = [
    (0.70, 0.05, 0.036),
    (0.70, 0.10, 0.007),
    (0.90, 0.05, 0.036),
    (0.90, 0.10, 0.007),
    (0.95, 0.05, 0.036),
]

ENTANGLEMENT_THRESHOLDS = (0.50, 0.70, 0.90, 0.95)
NETWORK_MODULES = 10
NETWORK_T_DECISION = 1e-5  # 10 microseconds, in seconds


def cmd_certify_tables(cfg: RunConfig, out_dir: Path) -> list[Path]:
    p = cfg.sim_params()
    ens = simulate_ensemble(p, store_records=False, oversample=cfg.oversample)
    s_t, _, _ = _terminal_stats(ens.terminal)
    files = [write_csv(
        out_dir / "composable.csv",
        ["s_th", "epsilon", "delta", "h_min", "f_mm"],
        ((pt.s_th, pt.epsilon, pt.delta, pt.h_min, pt.f_mm)
         for pt in (certify.composable_point(*row) for row in COMPOSABLE_POINTS)),
    )]
    ent_rows = []
    for s_th in ENTANGLEMENT_THRESHOLDS:
        eta_h = float(np.mean(s_t > s_th))
        single, two_node = certify.network_rates(NETWORK_MODULES, eta_h,
                                                 NETWORK_T_DECISION)
        ent_rows.append((s_th, certify.bell_fidelity(s_th),
                         certify.input_fidelity(s_th), eta_h, single, two_node))
    files.append(write_csv(
        out_dir / "entanglement.csv",
        ["s_th", "f_i", "f_input", "eta_h", "rate_single", "rate_two_node"],
        ent_rows,
    ))
    eps_grid = np.linspace(0.0, 0.2, 41)
    files.append(write_csv(
        out_dir / "composable_curves.csv",
        ["epsilon", "delta_ou", "h_min_070", "h_min_090", "h_min_095"],
        ((e, ou_tail(REFERENCE_OU, float(e)),
          certify.min_entropy_bound(max(0.70 - e, 0.0)),
          certify.min_entropy_bound(max(0.90 - e, 0.0)),
          certify.min_entropy_bound(max(0.95 - e, 0.0))) for e in eps_grid),
    ))
    summary = {
        "network_rate_example": certify.network_rates(10, 0.10, NETWORK_T_DECISION)[0],
        "composable_rows": [
            {"s_th": s, "epsilon": e, "delta": d,
             "h_min": certify.composable_point(s, e, d).h_min,
             "f_mm": certify.composable_point(s, e, d).f_mm}
            for (s, e, d) in COMPOSABLE_POINTS
        ],
    }
    files.append(write_json(out_dir / "summary.json", summary))
    return files


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

_HANDLERS = {
    "demo": cmd_demo,
    "estimators": cmd_estimators,
    "qrng": cmd_qrng,
    "gate-sweep": cmd_gate_sweep,
    "overcert": cmd_overcert,
    "rstar": cmd_rstar,
    "certify-tables": cmd_certify_tables,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cohgate",
        description="Coherence-gated routing experiment runner",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key=value or JSON config file")
    parser.add_argument("--seed", type=int, help="override base_seed")
    parser.add_argument("--n-traj", type=int, dest="n_traj", help="override n_traj")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = auto); outputs do not depend on it")
    parser.add_argument("--units", choices=("plain", "angular"),
                        help="rate convention for the Table-I entries")
    parser.add_argument("--oversample", type=int,
                        help="ground-truth substeps per record interval")
    return parser


def run_command(command: str, cfg: RunConfig, out_dir: Path) -> RunManifest:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(
        config_hash=cfg.config_hash(),
        seed=cfg.base_seed,
        command=command,
        started=datetime.now(timezone.utc).isoformat(),
        config={k: v for k, v in asdict(cfg).items()},
    )
    files = _HANDLERS[command](cfg, out_dir)
    manifest.finished = datetime.now(timezone.utc).isoformat()
    manifest.outputs = sorted(f.name for f in files)
    manifest.write(out_dir)
    return manifest


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
    except (ConfigError, ParameterError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out) if args.out else Path("cohgate_out") / args.command
    try:
        manifest = run_command(args.command, cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericalDivergence, WeightOverflow, CovarianceBlowup, ZeroTrace,
            NonRestoringDrift, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(f"{args.command}: wrote {len(manifest.outputs)} files to {out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
