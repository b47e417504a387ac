"""Time-series containers, CSV ingestion, smoothing, differencing, windowing
and synthetic path generators.

Positions follow the 1-based convention used throughout the package: the
window ending at position ``i`` holds observations ``i-n+1 .. i``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np


class SeriesError(ValueError):
    """Raised for malformed input series or invalid series operations."""


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    timestamps: np.ndarray | None = None
    name: str = "x"

    def __post_init__(self):
        values = _frozen(np.ravel(self.values))
        if values.size == 0:
            raise SeriesError("time series must be nonempty")
        if not np.all(np.isfinite(values)):
            raise SeriesError("time series contains NaN or Inf values")
        object.__setattr__(self, "values", values)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=np.int64).ravel()
            if ts.size != values.size:
                raise SeriesError("timestamps and values differ in length")
            if ts.size > 1 and np.any(np.diff(ts) <= 0):
                raise SeriesError("timestamps must be strictly increasing")
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class WindowView:
    """``n`` consecutive observations ending at 1-based position ``index``."""

    index: int
    width: int
    values: np.ndarray

    @property
    def start(self) -> int:
        return self.index - self.width + 1


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic path.

    ``kind`` is one of ``brownian``, ``ou``, ``gbm``, ``mixture_iid`` and
    ``piecewise_ito``; ``parameters`` holds the kind-specific values
    (see :func:`simulate`).
    """

    kind: str
    length: int
    seed: int = 0
    parameters: Mapping[str, object] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# ingestion


def _resolve_column(header: list[str] | None, ncols: int, column) -> int:
    if isinstance(column, int) or (isinstance(column, str) and column.isdigit()):
        idx = int(column)
        if not 0 <= idx < ncols:
            raise SeriesError(f"column index {idx} out of range (0..{ncols - 1})")
        return idx
    if header is None or column not in header:
        raise SeriesError(f"column {column!r} not found")
    return header.index(column)


def _parse_float(text: str) -> float:
    text = text.strip()
    if not text:
        return math.nan
    return float(text)


def load_csv(path, column=0, sentinel: float | None = None, delimiter: str = ",",
             timestamp_column=None, name: str | None = None) -> TimeSeries:
    """Read one numeric column of a delimited text file.

    A header row is detected when the first row does not parse as numbers in
    the requested column. Values equal to ``sentinel`` (and empty cells) are
    treated as missing: interior gaps are filled by linear interpolation
    between the nearest valid neighbours, leading and trailing gaps dropped.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise SeriesError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise SeriesError(f"{path} contains no rows")

    header = None
    ncols = len(rows[0])
    by_index = isinstance(column, int) or str(column).isdigit()
    has_header = not by_index
    if by_index:
        try:
            _parse_float(rows[0][int(column)])
        except (ValueError, IndexError):
            has_header = True
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise SeriesError(f"{path} has a header but no data rows")
    col = _resolve_column(header, ncols, column)
    tcol = None
    if timestamp_column is not None:
        tcol = _resolve_column(header, ncols, timestamp_column)

    raw = np.empty(len(rows))
    stamps = np.empty(len(rows), dtype=np.int64) if tcol is not None else None
    for k, row in enumerate(rows):
        try:
            raw[k] = _parse_float(row[col])
            if stamps is not None:
                stamps[k] = int(float(row[tcol]))
        except (ValueError, IndexError) as exc:
            raise SeriesError(f"{path}: bad value on data row {k + 1}: {exc}") from exc

    missing = ~np.isfinite(raw)
    if sentinel is not None:
        missing |= raw == sentinel
    if missing.all():
        raise SeriesError(f"{path}: all values in column {column!r} are missing")
    valid = np.flatnonzero(~missing)
    lo, hi = valid[0], valid[-1] + 1
    raw, missing = raw[lo:hi], missing[lo:hi]
    if missing.any():
        pos = np.arange(raw.size)
        raw[missing] = np.interp(pos[missing], pos[~missing], raw[~missing])
    if stamps is not None:
        stamps = stamps[lo:hi]
    label = name or (header[col] if header else f"col{col}")
    return TimeSeries(raw, stamps, label)


def write_csv(series: TimeSeries, path, delimiter: str = ",") -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if series.timestamps is not None:
            writer.writerow(["t", series.name])
            for t, v in zip(series.timestamps, series.values):
                writer.writerow([int(t), repr(float(v))])
        else:
            writer.writerow([series.name])
            for v in series.values:
                writer.writerow([repr(float(v))])


# ---------------------------------------------------------------------------
# transforms


def smooth(series: TimeSeries, block: int) -> TimeSeries:
    """Non-overlapping block means (``block`` 2 or 4); the remainder is dropped."""
    if block not in (2, 4):
        raise SeriesError(f"smoothing block must be 2 or 4, got {block}")
    m = len(series) // block
    if m == 0:
        raise SeriesError("series shorter than the smoothing block")
    vals = series.values[: m * block].reshape(m, block).mean(axis=1)
    ts = None
    if series.timestamps is not None:
        ts = series.timestamps[: m * block : block]
    return TimeSeries(vals, ts, series.name)


def increments(series: TimeSeries) -> TimeSeries:
    if len(series) < 2:
        raise SeriesError("increments need at least two observations")
    ts = series.timestamps[1:] if series.timestamps is not None else None
    return TimeSeries(np.diff(series.values), ts, f"d{series.name}")


def windows(series: TimeSeries | np.ndarray, n: int, stride: int = 1) -> Iterator[WindowView]:
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, float)
    if n < 2:
        raise SeriesError("window width must be at least 2")
    if stride < 1:
        raise SeriesError("stride must be positive")
    if n > values.size:
        raise SeriesError(f"window width {n} exceeds series length {values.size}")
    for i in range(n, values.size + 1, stride):
        yield WindowView(i, n, values[i - n:i])


def window_count(length: int, n: int, stride: int = 1) -> int:
    return 0 if n > length else (length - n) // stride + 1


# ---------------------------------------------------------------------------
# synthetic paths


def _positive(params, key, default=None):
    value = float(params.get(key, default))
    if not value > 0:
        raise SeriesError(f"parameter {key!r} must be positive, got {value}")
    return value


def simulate(spec: SyntheticSpec) -> TimeSeries:
    """Generate a deterministic synthetic series from ``spec``.

    Parameters by kind (defaults in brackets):

    - ``brownian``: ``mu`` [0], ``sigma`` [1], ``dt`` [1], ``x0`` [0].
      ``sigma`` may be 0 (constant path when ``mu`` is 0).
    - ``ou``: ``theta`` [0.5], ``sigma`` [1], ``dt`` [0.01], ``mu`` [0],
      ``x0`` [mu]. Euler step ``X + theta (mu - X) dt + sigma sqrt(dt) xi``.
    - ``gbm``: ``mu`` [0], ``sigma`` [0.2], ``dt`` [1/252], ``x0`` [1].
    - ``mixture_iid``: ``weights``, ``locs``, ``scales`` (sequences).
    - ``piecewise_ito``: ``drifts``, ``sigmas`` (equal-length sequences),
      ``segment`` [250], ``dt`` [1], ``x0`` [0]; the regime is redrawn
      uniformly at random every ``segment`` steps.
    """
    params = dict(spec.parameters)
    n = int(spec.length)
    if n < 2:
        raise SeriesError("synthetic length must be at least 2")
    rng = np.random.default_rng(spec.seed)
    kind = spec.kind

    if kind == "brownian":
        mu = float(params.get("mu", 0.0))
        sigma = float(params.get("sigma", 1.0))
        if sigma < 0:
            raise SeriesError("sigma must be nonnegative")
        dt = _positive(params, "dt", 1.0)
        steps = mu * dt + sigma * math.sqrt(dt) * rng.standard_normal(n - 1)
        x = float(params.get("x0", 0.0)) + np.concatenate([[0.0], np.cumsum(steps)])
    elif kind == "ou":
        theta = _positive(params, "theta", 0.5)
        sigma = _positive(params, "sigma", 1.0)
        dt = _positive(params, "dt", 0.01)
        mu = float(params.get("mu", 0.0))
        noise = sigma * math.sqrt(dt) * rng.standard_normal(n - 1)
        x = np.empty(n)
        x[0] = float(params.get("x0", mu))
        decay = 1.0 - theta * dt
        for k in range(n - 1):
            x[k + 1] = mu + (x[k] - mu) * decay + noise[k]
    elif kind == "gbm":
        mu = float(params.get("mu", 0.0))
        sigma = _positive(params, "sigma", 0.2)
        dt = _positive(params, "dt", 1.0 / 252)
        factors = 1.0 + mu * dt + sigma * math.sqrt(dt) * rng.standard_normal(n - 1)
        x = _positive(params, "x0", 1.0) * np.concatenate([[1.0], np.cumprod(factors)])
    elif kind == "mixture_iid":
        weights = np.asarray(params["weights"], float)
        locs = np.asarray(params["locs"], float)
        scales = np.asarray(params["scales"], float)
        if not (weights.size == locs.size == scales.size) or weights.size == 0:
            raise SeriesError("mixture weights/locs/scales must have equal nonzero length")
        if np.any(scales <= 0) or np.any(weights < 0) or not math.isclose(weights.sum(), 1.0, abs_tol=1e-9):
            raise SeriesError("invalid mixture parameters")
        labels = rng.choice(weights.size, size=n, p=weights / weights.sum())
        x = locs[labels] + scales[labels] * rng.standard_normal(n)
    elif kind == "piecewise_ito":
        drifts = np.asarray(params.get("drifts", [0.0]), float)
        sigmas = np.asarray(params.get("sigmas", [1.0]), float)
        if drifts.size != sigmas.size or np.any(sigmas <= 0):
            raise SeriesError("piecewise_ito needs equal-length drifts and positive sigmas")
        segment = int(params.get("segment", 250))
        if segment < 1:
            raise SeriesError("segment must be positive")
        dt = _positive(params, "dt", 1.0)
        nseg = -(-(n - 1) // segment)
        regime = np.repeat(rng.integers(drifts.size, size=nseg), segment)[: n - 1]
        steps = drifts[regime] * dt + sigmas[regime] * math.sqrt(dt) * rng.standard_normal(n - 1)
        x = float(params.get("x0", 0.0)) + np.concatenate([[0.0], np.cumsum(steps)])
    else:
        raise SeriesError(f"unknown synthetic kind {kind!r}")
    return TimeSeries(x, None, kind)


def as_array(series: TimeSeries | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=float)
