"""Figures for sweeps and the non-convexity reproduction (headless Agg backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    # fixed metadata keeps PNG output reproducible
    "svg.hashsalt": "semistatic",
}


def plot_sweep(report, path: Union[str, Path], title: str = "") -> Path:
    """u~ and q~ against p, with the flat interval shaded."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, (ax_u, ax_q) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 5.0))
        ax_u.plot(report.p, report.u, "-o", ms=2.5, lw=1.0, color="tab:blue")
        ax_u.set_ylabel(r"$\tilde u(x,p)$")
        for j in range(report.q.shape[1]):
            ax_q.plot(report.p, report.q[:, j], "-o", ms=2.5, lw=1.0, label=rf"$\tilde q_{j + 1}$")
        ax_q.axhline(0.0, color="0.6", lw=0.7)
        ax_q.set_ylabel(r"$\tilde q(x,p)$")
        ax_q.set_xlabel("p")
        a, b = report.flat
        for ax in (ax_u, ax_q):
            if b > a:
                ax.axvspan(a, b, color="0.85", lw=0)
            else:
                ax.axvline(a, color="0.5", ls="--", lw=0.7)
        ax_q.set_yscale("symlog", linthresh=1.0)
        if title:
            ax_u.set_title(title)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path


def plot_nonconvexity(ps, values, path: Union[str, Path]) -> Path:
    """u~(2, p) near p = 0 with the two one-sided tangent lines."""
    path = Path(path)
    ps = np.asarray(ps, dtype=float)
    values = np.asarray(values, dtype=float)
    u0 = 4.0 / 3.0
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        ax.plot(ps, values, color="tab:blue", lw=1.2, label=r"$\tilde u(2,p)$")
        left, right = ps[ps <= 0], ps[ps >= 0]
        ax.plot(left, u0 - 2.0 / 3.0 * left, "--", color="tab:orange", lw=0.9, label="slope -2/3")
        ax.plot(right, u0 - 4.0 / 3.0 * right, "--", color="tab:green", lw=0.9, label="slope -4/3")
        ax.set_xlabel("p")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
