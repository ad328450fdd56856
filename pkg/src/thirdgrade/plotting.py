"""PNG figures for experiment reports (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def audit_figure(report, path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for led, label in ((report.coarse, "dt"), (report.fine, "dt/2")):
        t = led.column("t")
        ax1.semilogy(t, np.abs(led.column("audit_residual")) + 1e-300, lw=0.8, label=label)
        ax2.plot(t, led.audit_ratio(), lw=0.8, label=label)
    ax2.axhline(report.constant, color="k", ls="--", lw=1, label="audit constant")
    ax1.set(xlabel="t", ylabel="|residual|", title="energy identity residual")
    ax2.set(xlabel="t", ylabel="|residual| / (dt Q)", title="audit ratio")
    ax1.legend()
    ax2.legend()
    return _save(fig, path)


def stability_figure(reports, sigma: float, threshold: float, path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for rep in reports[:8]:
        if np.all(np.isfinite(rep.log_dist)):
            ax1.plot(rep.times, rep.log_dist - rep.log_dist[0], lw=0.7)
    if reports:
        t = reports[0].times
        ax1.plot(t, -0.25 * sigma**2 * t, "k--", lw=1, label="-sigma^2 t / 4")
        ax1.legend()
    ax1.set(xlabel="t", ylabel="log |Y1 - Y2|^2 (shifted)", title="difference decay")
    slopes = [r.slope for r in reports if np.isfinite(r.slope)]
    if slopes:
        ax2.hist(slopes, bins=20)
    ax2.axvline(threshold, color="k", ls="--", lw=1, label="threshold")
    ax2.set(xlabel="fitted slope", ylabel="seeds", title="tail slopes")
    ax2.legend()
    return _save(fig, path)


def pullback_figure(absorption, diameters, path: Path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.semilogy(absorption.depths, absorption.arrival_max + 1e-300, "o-", label="max |Y(r)|^2")
    if absorption.radius.value > 0:
        ax1.axhline(absorption.radius.value, color="k", ls="--", lw=1, label="K(r)")
    ax1.set(xlabel="pull depth", title="arrival norms")
    ax1.legend()
    d = np.array([v for _, v in diameters.diameters])
    t = np.array([k for k, _ in diameters.diameters])
    ax2.semilogy(t, d + 1e-300, "o-")
    ax2.set(xlabel="pull depth", ylabel="diameter", title="ensemble diameter")
    return _save(fig, path)


def tail_figure(report, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for masses, total in zip(report.masses, report.totals):
        ax.semilogy(report.radii, masses / total + 1e-300, "o-", lw=0.7)
    ax.axhline(report.epsilon, color="k", ls="--", lw=1, label="epsilon")
    ax.set(xlabel="cutoff radius", ylabel="tail mass / |z|^2", title="tail masses")
    ax.legend()
    return _save(fig, path)


def invariant_figure(summary, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogy(summary.checkpoints, summary.concentration + 1e-300, "o-")
    ax.set(xlabel="horizon", ylabel="mean |Y| / |Y0|", title="concentration")
    return _save(fig, path)


def hypothesis_figure(report, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 4))
    for c, lv in sorted(report.log_values.items()):
        ax.plot(report.s_grid, lv, label=f"c = {c:g}")
    ax.set(xlabel="s", ylabel="log v_c(s)", title="forcing growth")
    ax.legend()
    return _save(fig, path)
