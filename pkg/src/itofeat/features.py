"""Component-free feature vectors built per window.

Mixture components are identifiable only up to permutation, so instead of
carrying ``(p_k, a_k, b_k)`` across windows these features carry the fitted
distribution function itself: its values on a fixed grid, its quantiles at
fixed levels, or (without any fitting) sample order statistics.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .separation import WindowEstimate, grid_ranks
from .series import as_array, windows

DECILES = np.arange(1, 10) / 10.0


@dataclass(frozen=True)
class FeatureMatrix:
    indices: np.ndarray
    rows: np.ndarray
    kind: str
    levels: np.ndarray

    @property
    def M(self) -> int:
        return self.levels.size

    def header(self) -> list[str]:
        return ["i"] + [f"f_{j}" for j in range(1, self.M + 1)]

    def csv_rows(self) -> list[list[str]]:
        return [[str(int(i))] + [repr(float(v)) for v in row] for i, row in zip(self.indices, self.rows)]


def default_grid(increments, M: int = 10) -> np.ndarray:
    """Global min and max increments plus ``M-2`` order statistics of equidistant ranks."""
    d = np.sort(as_array(increments))
    grid = d[grid_ranks(d.size, M) - 1]
    return np.unique(grid)


def _indices(estimates: Sequence[WindowEstimate]) -> np.ndarray:
    return np.array([e.index if e.index is not None else k for k, e in enumerate(estimates)])


def cdf_grid_features(estimates: Sequence[WindowEstimate], grid) -> FeatureMatrix:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("feature grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("feature grid must be strictly increasing")
    rows = np.array([kernels.mixture_cdf(e.model, grid) for e in estimates]).reshape(-1, grid.size)
    return FeatureMatrix(_indices(estimates), rows, "cdf_grid", grid)


def quantile_features(estimates: Sequence[WindowEstimate], levels=DECILES) -> FeatureMatrix:
    levels = np.asarray(levels, dtype=float)
    if levels.size == 0 or np.any((levels <= 0) | (levels >= 1)):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    if np.any(np.diff(levels) <= 0):
        raise ValueError("quantile levels must be strictly increasing")
    rows = np.array([kernels.mixture_quantile(e.model, levels) for e in estimates]).reshape(-1, levels.size)
    return FeatureMatrix(_indices(estimates), rows, "quantile", levels)


def decile_ranks(n: int, M: int = 9) -> np.ndarray:
    """Arithmetic rank sequence approximating levels ``j/(M+1)`` in a window of ``n``."""
    step = max(n // (M + 1), 1)
    ranks = step * np.arange(1, M + 1)
    return ranks[ranks <= n]


def order_stat_features(series, n: int, ranks, stride: int = 1) -> FeatureMatrix:
    ranks = np.asarray(ranks, dtype=int)
    if ranks.size == 0 or ranks.min() < 1 or ranks.max() > n:
        raise ValueError(f"ranks must lie in [1, {n}]")
    if ranks.size > 2 and np.unique(np.diff(ranks)).size != 1:
        raise ValueError("ranks must form an arithmetic sequence")
    idx, rows = [], []
    for view in windows(series, n, stride):
        s = np.partition(view.values, ranks - 1)
        idx.append(view.index)
        rows.append(s[ranks - 1])
    return FeatureMatrix(np.array(idx), np.array(rows).reshape(-1, ranks.size), "order_stat",
                         ranks.astype(float))
