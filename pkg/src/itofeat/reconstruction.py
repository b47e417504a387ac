"""Drift and diffusion reconstruction from window estimates.

Uniform reconstruction collapses each window's mixture into a point
estimate ``(a_bar, b_bar)``. Non-uniform reconstruction splits the window's
range into state bins and estimates the drift separately in each bin from
the one-step differences of observations that fall in it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .separation import SeparationConfig, WindowEstimate, em_fit
from .series import WindowView, as_array, windows

UNIFORM_ESTIMATORS = ("mean", "median", "mode")
NONUNIFORM_ESTIMATORS = ("avg", "med", "mode")


class ReconstructionError(ValueError):
    pass


@dataclass(frozen=True)
class CoefficientSeries:
    indices: np.ndarray
    a_bar: np.ndarray
    b_bar: np.ndarray
    estimator: str


def _discrete_median(values: np.ndarray, probs: np.ndarray) -> float:
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(probs[order])
    k = int(np.searchsorted(cum, 0.5 - 1e-12, side="left"))
    return float(values[order][min(k, values.size - 1)])


def uniform_point(model: kernels.MixtureModel, estimator: str = "mean") -> tuple[float, float]:
    """Point estimate of the discrete law putting mass ``p_k`` on ``(a_k, b_k)``."""
    p, a, b = model.weights, model.locs, model.scales
    if estimator == "mean":
        return float(p @ a), float(p @ b)
    if estimator == "median":
        return _discrete_median(a, p), _discrete_median(b, p)
    if estimator == "mode":
        k = int(np.argmax(p))
        return float(a[k]), float(b[k])
    raise ValueError(f"unknown uniform estimator {estimator!r}")


def uniform_reconstruct(estimates: Sequence[WindowEstimate], estimator: str = "mean") -> CoefficientSeries:
    if not estimates:
        raise ReconstructionError("no window estimates to reconstruct from")
    pts = np.array([uniform_point(e.model, estimator) for e in estimates])
    idx = np.array([e.index if e.index is not None else k for k, e in enumerate(estimates)])
    return CoefficientSeries(idx, pts[:, 0], pts[:, 1], estimator)


# ---------------------------------------------------------------------------
# state bins


@dataclass(frozen=True)
class BinLayout:
    mode: str
    J: int
    boundaries: np.ndarray

    def assign(self, x) -> np.ndarray:
        """0-based bin of each value; bins are ``[left, right)`` except the last, which is closed."""
        return np.searchsorted(self.boundaries[1:-1], np.asarray(x, dtype=float), side="right")


def bin_layout(window, mode: str, J: int) -> BinLayout:
    x = np.asarray(window.values if isinstance(window, WindowView) else window, dtype=float)
    mode = mode.upper()
    if J < 2:
        raise ReconstructionError("need at least two bins")
    lo, hi = float(x.min()), float(x.max())
    if not hi > lo:
        raise ReconstructionError("window range is degenerate (min == max)")
    if mode == "U":
        bounds = np.linspace(lo, hi, J + 1)
    elif mode == "Q":
        n = x.size
        xs = np.sort(x)
        ranks = np.ceil(1 + np.arange(J + 1) * (n - 1) / J - 1e-9).astype(int)
        bounds = xs[ranks - 1]
        if np.any(np.diff(bounds) <= 0):
            distinct = np.unique(xs)
            d = distinct.size
            if d < J:
                raise ReconstructionError(f"window has {d} distinct values; cannot form {J} bins")
            if d == J:
                # one bin per distinct value, split halfway between neighbours
                bounds = np.concatenate([[lo], 0.5 * (distinct[:-1] + distinct[1:]), [hi]])
            else:
                # tied order statistics: equidistant ranks among the distinct values instead
                ranks = np.ceil(1 + np.arange(J + 1) * (d - 1) / J - 1e-9).astype(int)
                bounds = distinct[ranks - 1]
    else:
        raise ReconstructionError(f"bin mode must be 'U' or 'Q', got {mode!r}")
    bounds = bounds.astype(float)
    bounds.setflags(write=False)
    return BinLayout(mode, J, bounds)


# ---------------------------------------------------------------------------
# non-uniform reconstruction


@dataclass(frozen=True)
class NonUniformEstimate:
    index: int
    counts: np.ndarray
    alpha: np.ndarray
    beta2: np.ndarray
    empty: np.ndarray
    selected_bin: int
    selected_drift: float
    estimator: str

    @property
    def nu_min(self) -> int:
        return int(self.counts.min())


def _lower_median(d: np.ndarray) -> float:
    s = np.sort(d)
    return float(s[(s.size - 1) // 2])


def histogram_mode(d: np.ndarray) -> float:
    """Centre of the most populated Freedman-Diaconis histogram bin."""
    if d.size == 1 or np.ptp(d) == 0:
        return float(d[0])
    edges = np.histogram_bin_edges(d, bins="fd")
    if edges.size < 3:
        # zero interquartile range collapses the Freedman-Diaconis width
        edges = np.histogram_bin_edges(d, bins="sturges")
    counts, edges = np.histogram(d, bins=edges)
    k = int(np.argmax(counts))
    return float(0.5 * (edges[k] + edges[k + 1]))


def mixture_mode(model: kernels.MixtureModel, points: int = 2001) -> float:
    """Argmax of the mixture density: dense grid search, then golden refinement."""
    from scipy import optimize

    half = 6.0 * model.scales
    grid = np.linspace(np.min(model.locs - half), np.max(model.locs + half), points)
    dens = kernels.mixture_pdf(model, grid)
    k = int(np.argmax(dens))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, points - 1)]
    res = optimize.minimize_scalar(lambda t: -kernels.mixture_pdf(model, t), bounds=(lo, hi),
                                   method="bounded", options={"xatol": 1e-12})
    return float(res.x) if -res.fun >= dens[k] else float(grid[k])


def _bin_statistic(d: np.ndarray, estimator: str, fit: SeparationConfig | None):
    if fit is not None and d.size >= 3 * fit.K and np.ptp(d) > 0:
        model = em_fit(d, fit).model
        mean, var = kernels.mixture_moments(model)
        if estimator == "avg":
            return mean, var
        if estimator == "med":
            return kernels.mixture_quantile(model, 0.5), var
        return mixture_mode(model), var
    var = float(d.var())
    if estimator == "avg":
        return float(d.mean()), var
    if estimator == "med":
        return _lower_median(d), var
    return histogram_mode(d), var


def nonuniform_reconstruct(window, layout: BinLayout, estimator: str = "avg",
                           fit: SeparationConfig | None = None) -> NonUniformEstimate:
    """State-binned drift estimate on one window of levels.

    Each observation except the last is paired with its successor inside the
    window; the last observation has no successor and only selects the bin
    whose drift is reported. Empty bins get drift 0 and are flagged.
    """
    if estimator not in NONUNIFORM_ESTIMATORS:
        raise ValueError(f"unknown non-uniform estimator {estimator!r}")
    x = np.asarray(window.values if isinstance(window, WindowView) else window, dtype=float)
    index = window.index if isinstance(window, WindowView) else x.size
    if x.size < 3:
        raise ReconstructionError("window must hold at least three observations")
    J = layout.J
    members = layout.assign(x[:-1])
    d = np.diff(x)
    counts = np.bincount(members, minlength=J)
    if counts.sum() == 0:
        raise ReconstructionError("all bins are empty")
    alpha = np.zeros(J)
    beta2 = np.zeros(J)
    for j in np.flatnonzero(counts):
        alpha[j], beta2[j] = _bin_statistic(d[members == j], estimator, fit)
    sel = int(layout.assign(x[-1]))
    return NonUniformEstimate(index, counts, alpha, beta2, counts == 0, sel, float(alpha[sel]), estimator)


def flat_estimate(window, J: int, estimator: str) -> NonUniformEstimate:
    """Estimate for a constant window: every successor difference is zero."""
    x = np.asarray(window.values if isinstance(window, WindowView) else window, dtype=float)
    index = window.index if isinstance(window, WindowView) else x.size
    counts = np.zeros(J, dtype=int)
    counts[0] = x.size - 1
    empty = counts == 0
    return NonUniformEstimate(index, counts, np.zeros(J), np.zeros(J), empty, 0, 0.0, estimator)


def nonuniform_series(series, n: int, mode: str, J: int, estimator: str = "avg",
                      fit: SeparationConfig | None = None, stride: int = 1) -> list[NonUniformEstimate]:
    """Non-uniform reconstruction on every window of ``series`` (levels, not increments)."""
    out = []
    for view in windows(series, n, stride):
        if np.ptp(view.values) == 0:
            out.append(flat_estimate(view, J, estimator))
            continue
        layout = bin_layout(view, mode, J)
        out.append(nonuniform_reconstruct(view, layout, estimator, fit))
    return out


def second_level(series, first_level: Sequence[NonUniformEstimate], n: int, mode: str, J: int,
                 estimator: str = "avg", fit: SeparationConfig | None = None) -> list[NonUniformEstimate]:
    """Reconstruct the drift of the first-level drift series.

    The selected drifts of ``first_level`` (indexed by their window ends) are
    treated as a new series and reconstructed with windows of the same width;
    the estimate for position ``i`` uses first-level values at ``i-n+1..i``.
    """
    if not first_level:
        raise ReconstructionError("first-level reconstruction is empty")
    x = as_array(series)
    drift = np.array([e.selected_drift for e in first_level])
    if drift.size < n or x.size < 2 * n - 1:
        raise ReconstructionError("series too short for a second-level reconstruction")
    offset = first_level[0].index - 1
    out = []
    for est in nonuniform_series(drift, n, mode, J, estimator, fit):
        out.append(NonUniformEstimate(est.index + offset, est.counts, est.alpha, est.beta2, est.empty,
                                      est.selected_bin, est.selected_drift, est.estimator))
    return out


def coefficient_rows(cs: CoefficientSeries) -> list[list[str]]:
    return [[str(int(i)), repr(float(a)), repr(float(b))] for i, a, b in zip(cs.indices, cs.a_bar, cs.b_bar)]


def nonuniform_rows(ests: Sequence[NonUniformEstimate]) -> list[list[str]]:
    return [[str(int(e.index)), str(e.selected_bin + 1), repr(float(e.selected_drift)), str(e.nu_min)]
            for e in ests]
