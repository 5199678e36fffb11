"""Panel renderers over the experiment CSV outputs.

Each panel declares the CSV files and columns it needs; rendering is
deterministic (fixed canvas, fixed salt for SVG ids, no date metadata) so
identical inputs produce byte-identical images.  Input files are opened
read-only and never modified.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "render-figures"
matplotlib.rcParams["figure.figsize"] = (7.0, 4.2)
matplotlib.rcParams["figure.dpi"] = 110
matplotlib.rcParams["savefig.dpi"] = 110

import matplotlib.pyplot as plt
import numpy as np


class MissingColumn(ValueError):
    pass


class EmptyData(ValueError):
    pass


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    inputs: dict[str, Path]
    out_base: Path


def load_table(path: Path, required: tuple[str, ...]) -> dict[str, np.ndarray]:
    """Read a CSV into float columns, validating the header and row count."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyData(f"{path} has no header")
        rows = [row for row in reader if row]
    missing = [c for c in required if c not in header]
    if missing:
        raise MissingColumn(f"{path} lacks columns {missing}")
    if not rows:
        raise EmptyData(f"{path} has a header but no rows")
    cols = {}
    for name in required:
        k = header.index(name)
        values = []
        for row in rows:
            try:
                values.append(float(row[k]))
            except ValueError:
                values.append(np.nan)
        cols[name] = np.asarray(values)
    return cols


def _steps(ax, lo, hi, counts, **kw):
    ax.stairs(counts, np.append(lo, hi[-1]), **kw)


# --------------------------------------------------------------------------
# panels
# --------------------------------------------------------------------------

def panel_uncond_vs_cond(spec, ax_pair):
    ax1, ax2 = ax_pair
    paths = load_table(spec.inputs["demo_paths.csv"], ("time", "traj_id", "s_cond"))
    uncond = load_table(spec.inputs["uncond.csv"], ("time", "s_uncond"))
    hist = load_table(spec.inputs["hist_s.csv"], ("bin_lo", "bin_hi", "count"))
    for tid in np.unique(paths["traj_id"]):
        sel = paths["traj_id"] == tid
        ax1.plot(paths["time"][sel], paths["s_cond"][sel], lw=0.7, alpha=0.6)
    ax1.plot(uncond["time"], uncond["s_uncond"], "k-", lw=2.2,
             label="ensemble average")
    ax1.set_xlabel("time")
    ax1.set_ylabel("coherence score S")
    ax1.set_ylim(-0.02, 1.02)
    ax1.legend(loc="upper right", fontsize=8)
    _steps(ax2, hist["bin_lo"], hist["bin_hi"], hist["count"], fill=True,
           alpha=0.7)
    ax2.set_xlabel("S at decision time")
    ax2.set_ylabel("trajectories")


def panel_qrng(spec, ax_pair):
    ax1, ax2 = ax_pair
    hist = load_table(spec.inputs["pz_hist.csv"], ("s_th", "bin_lo", "bin_hi", "count"))
    for s_th in np.unique(hist["s_th"]):
        sel = hist["s_th"] == s_th
        _steps(ax1, hist["bin_lo"][sel], hist["bin_hi"][sel], hist["count"][sel],
               label=f"threshold {s_th:g}", alpha=0.8)
    ax1.set_xlabel("outcome probability P_z")
    ax1.set_ylabel("accepted trajectories")
    ax1.legend(fontsize=8)
    grid = load_table(spec.inputs["qrng.csv"],
                      ("s_th", "n_accepted", "h_min_bound", "h_min_empirical"))
    ok = grid["n_accepted"] >= 30
    ax2.plot(grid["s_th"], grid["h_min_bound"], "-", label="geometric bound")
    ax2.plot(grid["s_th"][ok], grid["h_min_empirical"][ok], "o", ms=5,
             label="empirical (>= 30 accepted)")
    ax2.set_xlabel("threshold")
    ax2.set_ylabel("min-entropy per bit")
    ax2.legend(fontsize=8)


def panel_bloch_diag(spec, ax):
    t = load_table(spec.inputs["terminal.csv"], ("s_true", "z_true"))
    ax.plot(t["z_true"], t["s_true"], ".", ms=2, alpha=0.5)
    th = np.linspace(0, np.pi, 200)
    ax.plot(np.cos(th), np.sin(th), "k--", lw=1, label="unit sphere")
    ax.set_xlabel("z at decision time")
    ax.set_ylabel("S at decision time")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-0.02, 1.05)
    ax.legend(fontsize=8)


def panel_phase(spec, ax):
    t = load_table(spec.inputs["terminal.csv"], ("phase_true", "accepted_true"))
    phases = t["phase_true"][t["accepted_true"] > 0.5]
    phases = phases[np.isfinite(phases)]
    if phases.size == 0:
        raise EmptyData("no accepted trajectories with a defined phase")
    ax.hist(phases, bins=36, range=(-np.pi, np.pi), alpha=0.8)
    ax.set_xlabel("equatorial phase of accepted trajectories")
    ax.set_ylabel("count")
    ax.set_xlim(-np.pi, np.pi)


def panel_geometric(spec, ax_pair):
    ax1, ax2 = ax_pair
    g = load_table(spec.inputs["geometric.csv"],
                   ("theta_lo", "theta_hi", "count_true", "count_est"))
    _steps(ax1, g["theta_lo"], g["theta_hi"], g["count_true"], label="true state")
    _steps(ax1, g["theta_lo"], g["theta_hi"], g["count_est"], label="estimate")
    ax1.set_xlabel("polar angle")
    ax1.set_ylabel("count")
    ax1.legend(fontsize=8)
    x = load_table(spec.inputs["geometric_exceed.csv"], ("tau", "p_coh", "p_pur"))
    ax2.semilogy(x["tau"], np.maximum(x["p_coh"], 1e-7), label="coherence excess")
    ax2.semilogy(x["tau"], np.maximum(x["p_pur"], 1e-7), label="purity excess")
    ax2.set_xlabel("threshold tau")
    ax2.set_ylabel("exceedance probability")
    ax2.legend(fontsize=8)


def _metrics_bars(spec, ax, column, ylabel):
    m = load_table(spec.inputs["metrics.csv"], ("eta_assumed", column))
    labels = _metrics_labels(spec.inputs["metrics.csv"])
    x = np.arange(len(labels))
    ax.bar(x, m[column], width=0.65)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel(ylabel)
    ax.axhline(0.0, color="k", lw=0.8)


def _metrics_labels(path: Path) -> list[str]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if "estimator" not in header:
            raise MissingColumn(f"{path} lacks columns ['estimator']")
        k = header.index("estimator")
        return [row[k] for row in reader if row]


def panel_bias_repairs(spec, ax_pair):
    _metrics_bars(spec, ax_pair[0], "mean_bias", "mean coherence bias")
    _metrics_bars(spec, ax_pair[1], "mean_repairs", "repairs per trajectory")


def panel_performance(spec, ax_pair):
    _metrics_bars(spec, ax_pair[0], "mismatch_rate", "decision mismatch rate")
    _metrics_bars(spec, ax_pair[1], "heralding_eff", "acceptance fraction")


def panel_pointwise_e(spec, ax_pair):
    ax1, ax2 = ax_pair
    hist = load_table(spec.inputs["e_hist.csv"], ("e_lo", "e_hi", "count"))
    _steps(ax1, hist["e_lo"], hist["e_hi"], hist["count"], fill=True, alpha=0.7)
    ax1.set_xlabel("squared-coherence error E at decision time")
    ax1.set_ylabel("count")
    fit = load_table(spec.inputs["ou_fit.csv"], ("e_center", "drift", "fit"))
    ax2.plot(fit["e_center"], fit["drift"], "o", ms=3, label="binned drift")
    ax2.plot(fit["e_center"], fit["fit"], "-", label="linear fit")
    ax2.set_xlabel("E")
    ax2.set_ylabel("conditional drift of E")
    ax2.legend(fontsize=8)


def panel_tail_bounds(spec, ax):
    t = load_table(spec.inputs["overcert.csv"],
                   ("epsilon", "empirical", "ou_bound", "sm_bound"))
    floor = 1e-7
    ax.semilogy(t["epsilon"], np.maximum(t["empirical"], floor), "o-",
                label="empirical")
    ax.semilogy(t["epsilon"], np.maximum(t["ou_bound"], floor), "s--",
                label="stationary-tail bound")
    ax.semilogy(t["epsilon"], np.maximum(t["sm_bound"], floor), "d:",
                label="exponential bound")
    ax.set_xlabel("margin epsilon")
    ax.set_ylabel("Pr[S_est > S + epsilon]")
    ax.legend(fontsize=8)


def panel_composable(spec, ax_pair):
    ax1, ax2 = ax_pair
    curves = load_table(spec.inputs["composable_curves.csv"],
                        ("epsilon", "delta_ou", "h_min_070", "h_min_090",
                         "h_min_095"))
    for col, label in (("h_min_070", "threshold 0.70"),
                       ("h_min_090", "threshold 0.90"),
                       ("h_min_095", "threshold 0.95")):
        ax1.plot(curves["epsilon"], curves[col], label=label)
    pts = load_table(spec.inputs["composable.csv"],
                     ("s_th", "epsilon", "delta", "h_min", "f_mm"))
    ax1.plot(pts["epsilon"], pts["h_min"], "k*", ms=8, label="operating points")
    ax1.set_xlabel("security margin epsilon")
    ax1.set_ylabel("certified min-entropy")
    ax1.legend(fontsize=7)
    ax2.semilogy(curves["epsilon"], np.maximum(curves["delta_ou"], 1e-9))
    ax2.set_xlabel("security margin epsilon")
    ax2.set_ylabel("failure probability")


def panel_trajectory(spec, ax):
    with open(spec.inputs["overlay.csv"], newline="") as fh:
        header = next(csv.reader(fh))
    series = [c for c in header if c.startswith("s_")]
    if "time" not in header or not series:
        raise MissingColumn("overlay.csv needs a time column and s_* series")
    t = load_table(spec.inputs["overlay.csv"], tuple(["time"] + series))
    for col in series:
        style = "k-" if col == "s_true" else None
        label = col[2:].replace("_", " ")
        if style:
            ax.plot(t["time"], t[col], style, lw=1.8, label=label)
        else:
            ax.plot(t["time"], t[col], lw=0.9, alpha=0.85, label=label)
    ax.set_xlabel("time")
    ax.set_ylabel("coherence score S")
    ax.legend(fontsize=7, ncol=2)


def panel_threshold(spec, ax_pair):
    ax1, ax2 = ax_pair
    t = load_table(spec.inputs["threshold.csv"],
                   ("s_th", "heralding_eff", "p_route_a_given_true_a"))
    ax1.plot(t["s_th"], t["heralding_eff"], "o-")
    ax1.set_xlabel("threshold")
    ax1.set_ylabel("heralding efficiency")
    ax2.plot(t["s_th"], t["p_route_a_given_true_a"], "o-")
    ax2.set_xlabel("threshold")
    ax2.set_ylabel("P(accept | truly above)")


@dataclass(frozen=True)
class PanelDef:
    renderer: object
    files: tuple[str, ...]
    two_axes: bool = True


PANELS: dict[str, PanelDef] = {
    "uncond_vs_cond": PanelDef(panel_uncond_vs_cond,
                               ("demo_paths.csv", "uncond.csv", "hist_s.csv")),
    "qrng": PanelDef(panel_qrng, ("pz_hist.csv", "qrng.csv")),
    "bloch_diag": PanelDef(panel_bloch_diag, ("terminal.csv",), two_axes=False),
    "phase": PanelDef(panel_phase, ("terminal.csv",), two_axes=False),
    "geometric": PanelDef(panel_geometric,
                          ("geometric.csv", "geometric_exceed.csv")),
    "bias_repairs": PanelDef(panel_bias_repairs, ("metrics.csv",)),
    "pointwise_E": PanelDef(panel_pointwise_e, ("e_hist.csv", "ou_fit.csv")),
    "tail_bounds": PanelDef(panel_tail_bounds, ("overcert.csv",), two_axes=False),
    "composable": PanelDef(panel_composable,
                           ("composable_curves.csv", "composable.csv")),
    "performance": PanelDef(panel_performance, ("metrics.csv",)),
    "trajectory": PanelDef(panel_trajectory, ("overlay.csv",), two_axes=False),
    "threshold": PanelDef(panel_threshold, ("threshold.csv",)),
}


def render(spec: FigureSpec) -> list[Path]:
    """Render one panel to SVG and PNG; returns the written paths.

    Validates inputs before the figure is created, so schema errors never
    leave a partial image behind.
    """
    panel = PANELS[spec.figure_id]
    for name in panel.files:
        if name not in spec.inputs:
            raise MissingColumn(f"panel {spec.figure_id} needs {name}")
    fig, axes = plt.subplots(1, 2 if panel.two_axes else 1)
    try:
        panel.renderer(spec, axes)
        fig.tight_layout()
        out = []
        spec.out_base.parent.mkdir(parents=True, exist_ok=True)
        for ext in ("svg", "png"):
            path = spec.out_base.with_suffix("." + ext)
            fig.savefig(path, metadata={"Date": None} if ext == "svg" else None)
            out.append(path)
        return out
    finally:
        plt.close(fig)
