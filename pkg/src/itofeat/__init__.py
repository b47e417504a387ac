"""Feature extraction for Ito-type time series.

Windowed mixture separation of increments, drift/diffusion reconstruction,
distribution-function features, and rolling autoregressive forecasts built
on top of them.
"""
from .kernels import KernelFamily, MixtureModel
from .series import SeriesError, SyntheticSpec, TimeSeries, load_csv, simulate
from .separation import SeparationConfig, WindowEstimate, em_fit, fit_window, l2_fit, msm_run
from .weighting import WeightScheme, calibrate, weights

__version__ = "0.1.0"

__all__ = [
    "KernelFamily", "MixtureModel", "SeriesError", "SyntheticSpec", "TimeSeries", "load_csv", "simulate",
    "SeparationConfig", "WindowEstimate", "em_fit", "fit_window", "l2_fit", "msm_run", "WeightScheme",
    "calibrate", "weights",
]
