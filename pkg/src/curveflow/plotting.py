"""Static figures for run directories and interpolation batches."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_snapshots(snapshots, times, path, max_curves=12):
    """Overlay of planar snapshot curves, evolving nodes only."""
    fig, ax = plt.subplots(figsize=(7, 5))
    idx = np.unique(np.linspace(0, len(snapshots) - 1, min(max_curves, len(snapshots))).astype(int))
    cmap = plt.get_cmap("viridis")
    for j, k in enumerate(idx):
        c = snapshots[k]
        P = c.nodes if c.periodic else c.nodes[c.interior]
        if c.periodic:
            P = np.vstack([P, P[:1]])
        ax.plot(P[:, 0], P[:, 1], color=cmap(j / max(len(idx) - 1, 1)), lw=1,
                label=f"t={times[k]:.3g}")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.legend(fontsize=7, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_series(series, path, keys=("E", "B", "D", "kinf")):
    """Scalar series against time, log scale where all values are positive."""
    keys = [k for k in keys if k in series]
    fig, axes = plt.subplots(len(keys), 1, figsize=(7, 2.2 * len(keys)), sharex=True, squeeze=False)
    t = np.asarray(series["t"])
    for ax, k in zip(axes[:, 0], keys):
        y = np.asarray(series[k], dtype=float)
        ax.plot(t, y, lw=1)
        if np.all(y[np.isfinite(y)] > 0):
            ax.set_yscale("log")
        ax.set_ylabel(k)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_blowup(series, T_hat, fit, path):
    """``int |kappa|^2`` against ``T_hat - t`` on log axes with the fitted power law."""
    t = np.asarray(series["t"])
    y = np.asarray(series["k2"])
    tau = T_hat - t
    ok = tau > 0
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(tau[ok], y[ok], ".", ms=2, label="data")
    if fit is not None and "beta" in fit:
        lo, hi = fit["window"]
        xx = np.geomspace(lo, hi, 50)
        ax.loglog(xx, np.exp(fit["log_prefactor"]) * xx ** (-fit["beta"]), "r-",
                  label=f"beta = {fit['beta']:.3f}")
        ax.axvspan(lo, hi, color="0.9")
    ax.set_xlabel("T_hat - t")
    ax.set_ylabel("int |kappa|^2 ds")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_loop_separation(times, sep, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(times[: len(sep)], sep, "o-", ms=3)
    ax.set_xlabel("t")
    ax.set_ylabel("loop separation")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_run(traj, run_dir, report=None):
    """Write the standard figures of a run into ``run_dir``; returns their paths."""
    run_dir = Path(run_dir)
    out = []
    if traj.snapshots and traj.snapshots[0].dim >= 2:
        p = run_dir / "snapshots.png"
        plot_snapshots(traj.snapshots, traj.snapshot_times, p)
        out.append(p)
    p = run_dir / "series.png"
    plot_series(traj.series, p)
    out.append(p)
    diags = (report or {}).get("diagnostics", {})
    fit = diags.get("blowup_fit")
    if fit and "beta" in fit:
        p = run_dir / "blowup.png"
        plot_blowup(traj.series, fit["T_hat"], fit, p)
        out.append(p)
    loops = diags.get("loops")
    if loops and loops["separation"]:
        p = run_dir / "loops.png"
        plot_loop_separation(loops["times"], loops["separation"], p)
        out.append(p)
    return out


def plot_interp_summary(summary, path):
    """Bar chart of the largest ratio per lemma variant."""
    keys = sorted(summary)
    vals = [summary[k]["max_ratio"] for k in keys]
    fig, ax = plt.subplots(figsize=(8, 0.3 * len(keys) + 1.5))
    ax.barh(range(len(keys)), vals)
    ax.set_yticks(range(len(keys)))
    ax.set_yticklabels(keys, fontsize=7)
    ax.set_xlabel("max lhs / rhs (C = 1)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
