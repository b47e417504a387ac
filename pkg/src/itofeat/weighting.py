"""Chronological window weights and the power-law calibration of squared
increments.

Index ``j = 1`` is the oldest observation of a window and ``j = n`` the
newest; every scheme produces nondecreasing weights.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .series import TimeSeries, as_array


KINDS = ("uniform", "exponential", "linear", "calibrated")


@dataclass(frozen=True)
class WeightScheme:
    """Weighting rule.

    ``param`` is the decay ``p`` in ``[0, 1)`` for ``exponential`` and the
    fitted exponent ``alpha_hat`` for ``calibrated``; other kinds ignore it.
    """

    kind: str = "uniform"
    param: float = 0.0
    normalize: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown weighting kind {self.kind!r}")
        if self.kind == "exponential" and not 0.0 <= self.param < 1.0:
            raise ValueError(f"exponential weighting needs p in [0, 1), got {self.param}")
        if not math.isfinite(self.param):
            raise ValueError("weighting parameter must be finite")

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform" or (self.kind == "exponential" and self.param == 0.0) \
            or (self.kind == "calibrated" and self.param == 0.0)

    def label(self) -> str:
        if self.kind == "exponential":
            return f"exp:{self.param:g}"
        if self.kind == "calibrated":
            return f"calibrated[alpha={self.param:.4g}]"
        return self.kind


UNIFORM = WeightScheme()


def weights(scheme: WeightScheme, n: int) -> np.ndarray:
    """Weights ``w_1..w_n`` for a window of width ``n``.

    Normalized exponential weights equal
    ``(1-p)(1-p^j) / (n - p(n+1-p^n))``; they are computed as ``1 - p^j``
    divided by its sum, which is the same quantity without the cancellation
    the closed form suffers for ``p`` near 1.
    """
    if n < 1:
        raise ValueError("window width must be at least 1")
    j = np.arange(1, n + 1, dtype=float)
    kind = scheme.kind
    if scheme.is_uniform:
        raw = np.ones(n)
    elif kind == "exponential":
        raw = -np.expm1(j * math.log(scheme.param))
    elif kind == "linear":
        raw = j
    else:
        distance = n - j + 1.0
        raw = distance ** (-scheme.param)
    if not scheme.normalize:
        return raw
    if scheme.is_uniform:
        return np.full(n, 1.0 / n)
    return raw / raw.sum()


def exponential_closed_form(p: float, n: int) -> np.ndarray:
    j = np.arange(1, n + 1, dtype=float)
    return (1 - p) * (1 - p ** j) / (n - p * (n + 1 - p ** n))


@dataclass(frozen=True)
class CalibrationResult:
    alpha_hat: float
    c_hat: float
    s_squared: np.ndarray

    def scheme(self, normalize: bool = True) -> WeightScheme:
        return WeightScheme("calibrated", self.alpha_hat, normalize)


def mean_squared_increments(values, m: int) -> np.ndarray:
    """``s^2_i``: mean of squared ``i``-step increments over all start points."""
    x = as_array(values)
    return np.array([np.mean((x[i:] - x[:-i]) ** 2) for i in range(1, m + 1)])


def fit_power_law(s_squared) -> CalibrationResult:
    """Least-squares fit of ``log s^2_i = log c + alpha log i``."""
    s2 = np.asarray(s_squared, dtype=float)
    m = s2.size
    if m < 2:
        raise ValueError("calibration needs at least two lags")
    if np.any(s2 <= 0):
        raise ValueError("squared increments must be positive for the log-log fit")
    log_i = np.log(np.arange(1, m + 1))
    y = np.log(s2)
    xc = log_i - log_i.mean()
    alpha = float(xc @ (y - y.mean()) / (xc @ xc))
    c = math.exp(float(y.mean() - alpha * log_i.mean()))
    s2 = s2.copy()
    s2.setflags(write=False)
    return CalibrationResult(alpha, c, s2)


def calibrate(series: TimeSeries, m: int) -> CalibrationResult:
    x = as_array(series)
    if m < 2 or m > x.size // 2:
        raise ValueError(f"calibration lag count m={m} must satisfy 2 <= m <= length/2")
    return fit_power_law(mean_squared_increments(x, m))


def parse_scheme(text: str, series: TimeSeries | None = None, normalize: bool = True) -> WeightScheme:
    """Parse ``uniform``, ``exp:<p>``, ``linear`` or ``calibrated:<m>``.

    ``calibrated:<m>`` fits the exponent on ``series``, which is then required.
    """
    text = text.strip().lower()
    kind, _, arg = text.partition(":")
    if kind in ("uniform", "none"):
        return WeightScheme("uniform", normalize=normalize)
    if kind in ("exp", "exponential"):
        return WeightScheme("exponential", float(arg or 0.0), normalize)
    if kind == "linear":
        return WeightScheme("linear", normalize=normalize)
    if kind == "calibrated":
        if series is None:
            raise ValueError("calibrated weighting needs the series to calibrate on")
        m = int(arg) if arg else 50
        return calibrate(series, m).scheme(normalize)
    raise ValueError(f"cannot parse weighting {text!r}")
