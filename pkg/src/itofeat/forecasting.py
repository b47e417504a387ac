"""Rolling one-step-ahead autoregressive forecasting with reconstructed
coefficient features, and MAE / RMSE / DIR scoring.

Every feature channel is aligned to the 0-based time ``t`` at which it
becomes known, so the regressors used to predict ``X[t+1]`` depend on
``X[0..t]`` only.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import reconstruction as rec
from .separation import SeparationConfig, iter_msm
from .series import as_array
from .weighting import UNIFORM, WeightScheme, weights

log = logging.getLogger(__name__)

SCHEMES = ("ar", "var", "taylor1", "taylor2")
ESTIMATOR_ALIASES = {"avg": "avg", "mean": "avg", "med": "med", "median": "med", "mode": "mode"}
_UNIFORM_NAME = {"avg": "mean", "med": "median", "mode": "mode"}


class ForecastError(ValueError):
    pass


@dataclass(frozen=True)
class PredictorSpec:
    scheme: str = "ar"
    p: int = 1
    fit_window: int = 50
    ls_weights: WeightScheme = UNIFORM
    intercept: bool = True
    refit_every: int = 1

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.p < 1:
            raise ValueError("autoregression order must be at least 1")
        if self.refit_every < 1:
            raise ValueError("refit_every must be positive")
        if self.fit_window < self.n_coefficients + 2:
            raise ValueError(f"fit window {self.fit_window} too short for {self.n_coefficients} coefficients")

    @property
    def channels(self) -> int:
        return {"ar": 1, "var": 3, "taylor1": 2, "taylor2": 3}[self.scheme]

    @property
    def n_coefficients(self) -> int:
        return self.channels * self.p + int(self.intercept)

    def label(self) -> str:
        if self.scheme in ("ar", "var"):
            return f"{self.scheme.upper()}({self.p})"
        order = self.scheme[-1]
        return f"Taylor({order})" if self.p == 1 else f"Taylor({order})[p={self.p}]"


@dataclass(frozen=True)
class PipelineConfig:
    """How feature channels are extracted for ``var`` and ``taylor`` schemes."""

    n: int = 50
    stride: int = 1
    separation: SeparationConfig = field(default_factory=SeparationConfig)
    estimator: str = "avg"
    bin_mode: str = "Q"
    J: int = 9
    bin_fit: SeparationConfig | None = None

    def __post_init__(self):
        key = ESTIMATOR_ALIASES.get(str(self.estimator).lower())
        if key is None:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        object.__setattr__(self, "estimator", key)
        object.__setattr__(self, "bin_mode", self.bin_mode.upper())


@dataclass(frozen=True)
class PredictionReport:
    predictions: np.ndarray
    targets: np.ndarray
    previous: np.ndarray
    indices: np.ndarray
    mae: float
    rmse: float
    dir: float
    n_predictions: int


# ---------------------------------------------------------------------------
# scoring


def score(y_true, y_pred, y_prev) -> tuple[float, float, float]:
    """MAE, RMSE and DIR (percent of predictions whose change sign matches)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    y_prev = np.asarray(y_prev, dtype=float)
    if not (y_true.shape == y_pred.shape == y_prev.shape) or y_true.size == 0:
        raise ForecastError("score needs three nonempty vectors of equal length")
    err = y_pred - y_true
    mae = float(np.mean(np.abs(err)))
    top = float(np.max(np.abs(err)))
    # scale before squaring so tiny errors do not underflow below the MAE
    rmse = top * math.sqrt(float(np.mean((err / top) ** 2))) if top > 0 else 0.0
    hits = np.sign(y_pred - y_prev) == np.sign(y_true - y_prev)
    return mae, rmse, 100.0 * float(np.count_nonzero(hits)) / y_true.size


# ---------------------------------------------------------------------------
# least squares


def solve_least_squares(A, y, w=None, rcond: float = 1e-10):
    """(Weighted) least squares via SVD; rank-deficient systems get the minimum-norm solution."""
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    if A.shape[0] < 1:
        raise ForecastError("no rows to fit")
    if w is not None:
        sw = np.sqrt(np.asarray(w, dtype=float))
        A = A * sw[:, None]
        y = y * (sw if y.ndim == 1 else sw[:, None])
    coef, *_ = np.linalg.lstsq(A, y, rcond=rcond)
    return coef


def _design(regressors, intercept: bool):
    A = np.atleast_2d(np.asarray(regressors, dtype=float))
    if intercept:
        A = np.column_stack([A, np.ones(A.shape[0])])
    return A


def fit_predict_step(regressors, target, new_row, w=None, intercept: bool = True) -> float:
    """Fit ``target ~ regressors`` on the history and predict from ``new_row``.

    ``target`` may be a matrix (one column per equation); the prediction of
    the first column is returned.
    """
    if not np.any(regressors):
        raise ForecastError("all regressors are zero")
    A = _design(regressors, intercept)
    if A.shape[0] < A.shape[1]:
        raise ForecastError(f"{A.shape[0]} rows cannot identify {A.shape[1]} coefficients")
    coef = solve_least_squares(A, target, w)
    row = _design(np.asarray(new_row, dtype=float).reshape(1, -1), intercept)[0]
    pred = row @ coef
    return float(np.ravel(pred)[0])


# ---------------------------------------------------------------------------
# feature channels


def _forward_fill(N: int, times, values) -> np.ndarray:
    out = np.full(N, np.nan)
    times = np.asarray(times, dtype=int)
    values = np.asarray(values, dtype=float)
    if times.size == 0:
        return out
    out[times] = values
    filled = np.maximum.accumulate(np.where(np.isnan(out), -1, np.arange(N)))
    ok = filled >= 0
    out[ok] = out[filled[ok]]
    return out


def uniform_channels(x: np.ndarray, pipe: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """``a_bar``/``b_bar`` from moving separation on increments, aligned to time of availability."""
    d = np.diff(x)
    if d.size < pipe.n:
        raise ForecastError("series too short for the separation window")
    est = list(iter_msm(d, pipe.n, pipe.stride, pipe.separation))
    cs = rec.uniform_reconstruct(est, _UNIFORM_NAME[pipe.estimator])
    # increment window ending at 1-based i uses x[0..i]
    return _forward_fill(x.size, cs.indices, cs.a_bar), _forward_fill(x.size, cs.indices, cs.b_bar)


def taylor_channels(x: np.ndarray, pipe: PipelineConfig, second: bool):
    first = rec.nonuniform_series(x, pipe.n, pipe.bin_mode, pipe.J, pipe.estimator, pipe.bin_fit, pipe.stride)
    t1 = np.array([e.index for e in first]) - 1
    a1 = _forward_fill(x.size, t1, [e.selected_drift for e in first])
    if not second:
        return (a1,)
    if pipe.stride > 1:
        # second level needs the first-level drift at every step; hold values between refits
        held = np.searchsorted(t1, np.arange(t1[0], x.size), side="right") - 1
        first = [replace(first[k], index=t + 1) for t, k in zip(range(t1[0], x.size), held)]
    lvl2 = rec.second_level(x, first, pipe.n, pipe.bin_mode, pipe.J, pipe.estimator, pipe.bin_fit)
    t2 = np.array([e.index for e in lvl2]) - 1
    return a1, _forward_fill(x.size, t2, [e.selected_drift for e in lvl2])


def build_channels(series, spec: PredictorSpec, pipe: PipelineConfig | None = None) -> np.ndarray:
    """Matrix of shape ``(N, channels)``; NaN where a channel is not yet available."""
    x = as_array(series)
    if spec.scheme == "ar":
        return x[:, None].copy()
    if pipe is None:
        raise ForecastError(f"scheme {spec.scheme!r} needs a pipeline configuration")
    if spec.scheme == "var":
        a, b = uniform_channels(x, pipe)
        return np.column_stack([x, a, b])
    extra = taylor_channels(x, pipe, second=spec.scheme == "taylor2")
    return np.column_stack([x, *extra])


def lagged(channels: np.ndarray, p: int) -> np.ndarray:
    """Row ``t`` holds channels at ``t, t-1, ..., t-p+1`` (NaN before enough lags)."""
    N, c = channels.shape
    out = np.full((N, c * p), np.nan)
    for k in range(p):
        out[k:, k * c:(k + 1) * c] = channels[: N - k]
    return out


def rolling_forecast(series, spec: PredictorSpec, pipe: PipelineConfig | None = None,
                     channels: np.ndarray | None = None) -> PredictionReport:
    """Predict ``X[t+1]`` for every admissible ``t`` from data up to ``t`` and score."""
    x = as_array(series)
    if channels is None:
        channels = build_channels(x, spec, pipe)
    R = lagged(channels, spec.p)
    valid = np.all(np.isfinite(R), axis=1)
    if not valid.any():
        raise ForecastError("warm-up is longer than the series")
    t0 = int(np.argmax(valid))
    if not valid[t0:].all():
        raise ForecastError("feature channels have gaps after warm-up")
    first = t0 + spec.fit_window
    if first > x.size - 2:
        raise ForecastError(f"series of {x.size} points too short: need more than {first + 1}")
    targets_all = channels if spec.scheme == "var" else x[:, None]
    w = None if spec.ls_weights.is_uniform else weights(spec.ls_weights, spec.fit_window)
    ts = np.arange(first, x.size - 1)
    preds = np.empty(ts.size)
    coef = None
    for k, t in enumerate(ts):
        if coef is None or k % spec.refit_every == 0:
            rows = slice(t - spec.fit_window, t)
            if not np.any(R[rows]):
                raise ForecastError("all regressors are zero")
            A = _design(R[rows], spec.intercept)
            coef = solve_least_squares(A, targets_all[t - spec.fit_window + 1:t + 1], w)
        row = _design(R[t:t + 1], spec.intercept)[0]
        preds[k] = (row @ coef)[0]
    targets = x[ts + 1]
    prev = x[ts]
    mae, rmse, dir_ = score(targets, preds, prev)
    return PredictionReport(preds, targets, prev, ts + 1, mae, rmse, dir_, int(ts.size))


REPORT_HEADER = ["scheme", "window", "kernel", "K", "weighting", "estimator", "mae", "rmse", "dir",
                 "n_predictions"]


def report_row(report: PredictionReport, spec: PredictorSpec, pipe: PipelineConfig | None) -> list[str]:
    scheme = spec.label()
    kernel, K, weighting, estimator = "-", "-", "-", "-"
    window = spec.fit_window
    if spec.scheme == "var" and pipe is not None:
        sep = pipe.separation
        kernel, K = sep.family.value, str(sep.K)
        weighting = f"{sep.method}/{sep.weight_scheme.label()}"
        estimator, window = pipe.estimator, pipe.n
    elif spec.scheme.startswith("taylor") and pipe is not None:
        scheme = f"{scheme} {pipe.bin_mode} J={pipe.J}"
        estimator, window = pipe.estimator, pipe.n
    if not spec.ls_weights.is_uniform:
        weighting = f"{weighting};ls={spec.ls_weights.label()}"
    return [scheme, str(window), kernel, K, weighting, estimator, repr(report.mae), repr(report.rmse),
            repr(report.dir), str(report.n_predictions)]
