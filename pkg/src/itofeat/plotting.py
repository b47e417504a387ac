"""Figure output for CLI reports. Figures are written as self-contained SVG."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (8.0, 4.5),
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "lines.linewidth": 0.8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "itofeat",
    "svg.fonttype": "none",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_predictions(report, path, title: str = "one-step predictions", last: int | None = 2000):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        sl = slice(-last, None) if last else slice(None)
        ax.plot(report.indices[sl], report.targets[sl], color="0.3", label="observed")
        ax.plot(report.indices[sl], report.predictions[sl], color="tab:red", label="predicted")
        ax.set_xlabel("index")
        ax.set_title(f"{title}  MAE={report.mae:.4g}  RMSE={report.rmse:.4g}  DIR={report.dir:.2f}%")
        ax.legend(loc="best")
        _save(fig, path)


def plot_coefficients(coeffs, path, title: str = "reconstructed coefficients"):
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True)
        ax1.plot(coeffs.indices, coeffs.a_bar, color="tab:blue")
        ax1.set_ylabel("drift")
        ax2.plot(coeffs.indices, coeffs.b_bar, color="tab:green")
        ax2.set_ylabel("diffusion")
        ax2.set_xlabel("window end")
        ax1.set_title(f"{title} ({coeffs.estimator})")
        _save(fig, path)


def plot_nonuniform(estimates, path, title: str = "state-dependent drift"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([e.index for e in estimates], [e.selected_drift for e in estimates], color="tab:purple")
        ax.set_xlabel("window end")
        ax.set_ylabel("selected drift")
        ax.set_title(title)
        _save(fig, path)


def plot_trajectories(estimates, path, title: str = "mixture parameters"):
    idx = np.array([e.index for e in estimates])
    p = np.array([e.model.weights for e in estimates])
    a = np.array([e.model.locs for e in estimates])
    b = np.array([e.model.scales for e in estimates])
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, sharex=True, figsize=(8.0, 6.0))
        for ax, vals, name in zip(axes, (p, a, b), ("weight", "location", "scale")):
            ax.plot(idx, vals, marker=".", markersize=1.5, linestyle="none")
            ax.set_ylabel(name)
        axes[-1].set_xlabel("window end")
        axes[0].set_title(title)
        _save(fig, path)


def plot_features(fm, path, title: str | None = None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(fm.indices, fm.rows)
        ax.set_xlabel("window end")
        ax.set_title(title or f"{fm.kind} features (M={fm.M})")
        _save(fig, path)
