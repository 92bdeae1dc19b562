"""Figure rendering for the report path.

CSV and JSON remain the machine-readable contract; these figures are
written next to them so a run can be eyeballed without extra tooling.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def rate_figure(report: dict, path: Path) -> None:
    """Log-log D vs M with the fitted slope and the target rate."""
    points = report["points"]
    ms = np.array([pt["M"] for pt in points], dtype=float)
    ds = np.array([pt["D"] for pt in points], dtype=float)
    ses = np.array([pt["se"] for pt in points], dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.errorbar(ms, ds, yerr=ses, fmt="o", ms=4, lw=1, capsize=2, label="D estimate")
    grid = np.array([ms.min(), ms.max()])
    fit_line = np.exp(report["intercept"]) * grid ** report["slope"]
    ax.plot(grid, fit_line, "-", lw=1.2,
            label=f"fit slope {report['slope']:+.3f}")
    ref = ds[0] * (grid / grid[0]) ** -0.5
    ax.plot(grid, ref, "--", lw=1.0, color="gray", label="slope -1/2")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("ensemble size M")
    ax.set_ylabel("D")
    ax.set_title(f"{report['experiment']} / {report.get('model', '')}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def series_figure(series_map: dict, path: Path) -> None:
    """Coupled residual size over the run for each ensemble size (rep 0)."""
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for (m, rep) in sorted(series_map):
        if rep != 0:
            continue
        s = series_map[(m, rep)]
        ax.plot(s.grid, s.delta2, lw=1.0, label=f"M={m}")
    ax.set_yscale("log")
    ax.set_xlabel("step / time")
    ax.set_ylabel(r"$\Delta^{M,2}$")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def consistency_figure(report: dict, path: Path) -> None:
    """Mean/covariance gaps against their 5-SE envelopes per variant."""
    checks = report["checks"]
    variants = sorted({c["variant"] for c in checks})
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.4), sharex=True)
    for variant in variants:
        rows = [c for c in checks if c["variant"] == variant]
        ks = [c["k"] for c in rows]
        axes[0].plot(ks, [c["mean_gap"] for c in rows], lw=1.0, label=variant)
        axes[1].plot(ks, [c["cov_gap"] for c in rows], lw=1.0, label=variant)
    rows = [c for c in checks if c["variant"] == variants[0]]
    ks = [c["k"] for c in rows]
    axes[0].plot(ks, [5 * c["mean_se"] for c in rows], "k--", lw=0.8, label="5 SE")
    axes[1].plot(ks, [5 * c["cov_se"] for c in rows], "k--", lw=0.8, label="5 SE")
    axes[0].set_ylabel("|mean - KF mean|")
    axes[1].set_ylabel("|P - KF P|")
    for ax in axes:
        ax.set_xlabel("step k")
        ax.set_yscale("log")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def audit_figure(report: dict, detail: dict, path: Path) -> None:
    """Histogram of audit residuals (zeros shown at the floor)."""
    header = detail["header"]
    rows = detail["rows"]
    res_idx = header.index("residual") if "residual" in header else header.index("cancellation")
    residuals = np.array([max(float(r[res_idx]), 1e-18) for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.hist(np.log10(residuals), bins=40)
    ax.set_xlabel("log10 residual")
    ax.set_ylabel("count")
    ax.set_title(f"{report['experiment']}: {report['violations']} violations")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
