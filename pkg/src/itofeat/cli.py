"""Command-line interface.

Every option can also come from an INI-style config file (``--config``)
whose sections mirror the option groups below; command-line flags override
file values, which override built-in defaults.

Exit status: 0 success, 2 usage or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import itertools
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import features as feat
from . import forecasting as fc
from . import reconstruction as rec
from .kernels import KernelFamily
from .separation import SeparationConfig, SeparationError, estimate_header, estimate_row, msm_run
from .series import SeriesError, SyntheticSpec, TimeSeries, increments, load_csv, simulate, smooth, write_csv
from .weighting import parse_scheme

log = logging.getLogger("itofeat")

EXIT_USAGE = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text):
    return None if text in (None, "", "none") else float(text)


def _optional_int(text):
    return None if text in (None, "", "none") else int(text)


@dataclass(frozen=True)
class Opt:
    name: str
    section: str
    type: object
    default: object
    help: str


INPUT = [
    Opt("input", "input", str, None, "input CSV file"),
    Opt("column", "input", str, "0", "value column (name or 0-based index)"),
    Opt("sentinel", "input", _optional_float, None, "fill value marking missing rows"),
    Opt("delimiter", "input", str, ",", "field delimiter"),
    Opt("smooth", "input", int, 1, "block-average the series over 1, 2 or 4 points"),
]
SEPARATION = [
    Opt("window", "separation", int, 50, "window width n"),
    Opt("stride", "separation", int, 1, "window stride"),
    Opt("kernel", "separation", str, "normal", "normal | student | logistic"),
    Opt("K", "separation", int, 3, "number of mixture components"),
    Opt("method", "separation", str, "em", "em | l2 | hybrid"),
    Opt("lam", "separation", float, 0.0, "log-likelihood penalty weight for hybrid"),
    Opt("weighting", "separation", str, "uniform", "uniform | exp:<p> | linear | calibrated:<m>"),
    Opt("l2_weighting", "separation", str, "edf", "edf | terms | both"),
    Opt("M", "separation", _optional_int, None, "l2 grid size (default max(20, 3K-1))"),
    Opt("max_iter", "separation", int, 500, "iteration cap per window"),
    Opt("tol", "separation", float, 1e-8, "relative objective tolerance"),
    Opt("revive", "separation", _bool, False, "re-seed collapsed components of the warm start"),
    Opt("diff", "separation", _bool, True, "fit increments of the input (false: input already holds increments)"),
]
RECON = [
    Opt("estimator", "reconstruction", str, "avg", "avg | med | mode"),
    Opt("bins", "reconstruction", str, "Q", "Q (equiprobable) | U (equal length)"),
    Opt("J", "reconstruction", int, 9, "number of state bins"),
]
PREDICT = [
    Opt("scheme", "predict", str, "ar", "ar | var | taylor1 | taylor2"),
    Opt("p", "predict", int, 1, "autoregression order"),
    Opt("fit_window", "predict", _optional_int, None, "regression window (default: --window)"),
    Opt("ls_weighting", "predict", str, "uniform", "least-squares row weights"),
    Opt("intercept", "predict", _bool, True, "include an intercept column"),
    Opt("refit_every", "predict", int, 1, "refit regression coefficients every k steps"),
]
OUTPUT = [
    Opt("out", "output", str, None, "output file"),
    Opt("plot", "output", str, None, "also write an SVG figure to this path"),
    Opt("seed", "output", int, 0, "random seed"),
]


def _add(parser, opts, multi: bool = False):
    for o in opts:
        parser.add_argument(f"--{o.name}", dest=o.name, default=None,
                            help=o.help + (" (comma-separated list)" if multi else ""))


def resolve(args, opts, config: configparser.ConfigParser | None, multi: frozenset = frozenset()):
    """Merge flags > config file > defaults, converting types."""
    out = {}
    for o in opts:
        raw = getattr(args, o.name, None)
        if raw is None and config is not None and config.has_option(o.section, o.name):
            raw = config.get(o.section, o.name)
        if raw is None:
            out[o.name] = [o.default] if o.name in multi else o.default
            continue
        try:
            if o.name in multi:
                out[o.name] = [o.type(v.strip()) for v in str(raw).split(",") if v.strip()]
            else:
                out[o.name] = o.type(raw) if not isinstance(raw, bool) else raw
        except ValueError as exc:
            raise UsageError(f"bad value for --{o.name}: {raw!r} ({exc})") from exc
    return out


def _read_config(path):
    cp = configparser.ConfigParser()
    cp.optionxform = str
    if path:
        if not Path(path).is_file():
            raise UsageError(f"config file not found: {path}")
        cp.read(path)
    return cp


# ---------------------------------------------------------------------------
# building blocks


def load_input(o) -> TimeSeries:
    if not o["input"]:
        raise UsageError("--input is required")
    column = o["column"]
    series = load_csv(o["input"], int(column) if str(column).isdigit() else column, o["sentinel"],
                      o["delimiter"])
    if o["smooth"] not in (1, 2, 4):
        raise UsageError("--smooth must be 1, 2 or 4")
    if o["smooth"] > 1:
        series = smooth(series, o["smooth"])
    return series


def separation_config(o, series: TimeSeries) -> SeparationConfig:
    try:
        return SeparationConfig(
            family=KernelFamily.parse(o["kernel"]), K=o["K"], method=o["method"], lam=o["lam"],
            weight_scheme=parse_scheme(o["weighting"], series), l2_weighting=o["l2_weighting"],
            grid_size=o["M"], max_iter=o["max_iter"], tol=o["tol"], seed=o["seed"], revive=o["revive"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


class AtomicWriter:
    """Write to ``<path>.partial`` and rename into place only on success."""

    def __init__(self, path):
        self.path = Path(path)
        self.partial = self.path.with_name(self.path.name + ".partial")

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.fh = self.partial.open("w", newline="")
        return csv.writer(self.fh, lineterminator="\n")

    def __exit__(self, exc_type, exc, tb):
        self.fh.close()
        if exc_type is None:
            os.replace(self.partial, self.path)
        return False


def _out_path(o, default_name: str) -> Path:
    return Path(o["out"] or default_name)


def _increments_of(series: TimeSeries, o) -> TimeSeries:
    return increments(series) if o["diff"] else series


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args) -> int:
    params = {}
    for key in ("mu", "sigma", "theta", "dt", "x0"):
        value = getattr(args, key)
        if value is not None:
            params[key] = float(value)
    for key in ("weights", "locs", "scales", "drifts", "sigmas"):
        value = getattr(args, key)
        if value is not None:
            params[key] = [float(v) for v in value.split(",")]
    if args.segment is not None:
        params["segment"] = int(args.segment)
    try:
        series = simulate(SyntheticSpec(args.kind, args.length, args.seed, params))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid simulation parameters: {exc}") from exc
    out = Path(args.out or f"{args.kind}.csv")
    partial = out.with_name(out.name + ".partial")
    write_csv(series, partial)
    os.replace(partial, out)
    log.info("wrote %d points to %s", len(series), out)
    return 0


def cmd_fit(o) -> int:
    series = load_input(o)
    data = _increments_of(series, o)
    config = separation_config(o, series)
    estimates = msm_run(data, o["window"], o["stride"], config)
    with AtomicWriter(_out_path(o, "estimates.csv")) as w:
        w.writerow(estimate_header(config))
        for est in estimates:
            w.writerow(estimate_row(est))
    if o["plot"]:
        from .plotting import plot_trajectories
        plot_trajectories(estimates, o["plot"])
    bad = sum(not e.converged for e in estimates)
    if bad:
        log.warning("%d of %d windows did not converge", bad, len(estimates))
    return 0


def _estimator(o) -> str:
    key = fc.ESTIMATOR_ALIASES.get(o["estimator"].lower())
    if key is None:
        raise UsageError(f"unknown estimator {o['estimator']!r}")
    return key


def cmd_reconstruct(o, kind: str) -> int:
    series = load_input(o)
    estimator = _estimator(o)
    out = _out_path(o, f"{kind}.csv")
    if kind == "uniform":
        config = separation_config(o, series)
        estimates = msm_run(_increments_of(series, o), o["window"], o["stride"], config)
        cs = rec.uniform_reconstruct(estimates, fc._UNIFORM_NAME[estimator])
        with AtomicWriter(out) as w:
            w.writerow(["i", "a_bar", "b_bar"])
            w.writerows(rec.coefficient_rows(cs))
        if o["plot"]:
            from .plotting import plot_coefficients
            plot_coefficients(cs, o["plot"])
        return 0
    if kind == "second" and o["stride"] != 1:
        raise UsageError("second-level reconstruction needs --stride 1")
    ests = rec.nonuniform_series(series, o["window"], o["bins"], o["J"], estimator, stride=o["stride"])
    if kind == "second":
        ests = rec.second_level(series, ests, o["window"], o["bins"], o["J"], estimator)
    with AtomicWriter(out) as w:
        w.writerow(["i", "selected_bin", "alpha_selected", "nu_min"])
        w.writerows(rec.nonuniform_rows(ests))
    if o["plot"]:
        from .plotting import plot_nonuniform
        plot_nonuniform(ests, o["plot"])
    return 0


def cmd_features(o, kind: str, levels: str | None) -> int:
    series = load_input(o)
    data = _increments_of(series, o)
    M = o["M"] or 10
    if kind == "order_stat":
        ranks = feat.decile_ranks(o["window"], M - 1)
        fm = feat.order_stat_features(data, o["window"], ranks, o["stride"])
    else:
        config = separation_config(o, series)
        estimates = msm_run(data, o["window"], o["stride"], config)
        if kind == "cdf_grid":
            fm = feat.cdf_grid_features(estimates, feat.default_grid(data, M))
        else:
            lv = [float(v) for v in levels.split(",")] if levels else feat.DECILES
            fm = feat.quantile_features(estimates, lv)
    with AtomicWriter(_out_path(o, f"{kind}.csv")) as w:
        w.writerow(fm.header())
        w.writerows(fm.csv_rows())
    if o["plot"]:
        from .plotting import plot_features
        plot_features(fm, o["plot"])
    return 0


def _predict_one(series: TimeSeries, o):
    fit_window = o["fit_window"] or o["window"]
    try:
        spec = fc.PredictorSpec(o["scheme"], o["p"], fit_window, parse_scheme(o["ls_weighting"], series),
                                o["intercept"], o["refit_every"])
        pipe = None
        if spec.scheme != "ar":
            pipe = fc.PipelineConfig(o["window"], o["stride"], separation_config(o, series), o["estimator"],
                                     o["bins"], o["J"])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return spec, pipe, fc.rolling_forecast(series, spec, pipe)


def cmd_predict(o, predictions_path: str | None) -> int:
    series = load_input(o)
    spec, pipe, report = _predict_one(series, o)
    with AtomicWriter(_out_path(o, "report.csv")) as w:
        w.writerow(fc.REPORT_HEADER)
        w.writerow(fc.report_row(report, spec, pipe))
    if predictions_path:
        with AtomicWriter(predictions_path) as w:
            w.writerow(["i", "observed", "predicted", "previous"])
            for i, y, yhat, prev in zip(report.indices, report.targets, report.predictions, report.previous):
                w.writerow([int(i) + 1, repr(float(y)), repr(float(yhat)), repr(float(prev))])
    if o["plot"]:
        from .plotting import plot_predictions
        plot_predictions(report, o["plot"], title=spec.label())
    log.info("%s: MAE=%.6g RMSE=%.6g DIR=%.3f over %d predictions", spec.label(), report.mae, report.rmse,
             report.dir, report.n_predictions)
    return 0


SWEEP_KEYS = ("scheme", "p", "window", "kernel", "K", "method", "weighting", "estimator", "bins", "J")


def cmd_sweep(o) -> int:
    series = load_input(o)
    grids = [o[k] for k in SWEEP_KEYS]
    seen, rows = set(), []
    for combo in itertools.product(*grids):
        run = {**o, **dict(zip(SWEEP_KEYS, combo))}
        scheme = run["scheme"]
        # drop axes that do not affect the scheme so each distinct run happens once
        key_fields = ["scheme", "p"]
        if scheme == "var":
            key_fields += ["window", "kernel", "K", "method", "weighting", "estimator"]
        elif scheme.startswith("taylor"):
            key_fields += ["window", "estimator", "bins", "J"]
        key = tuple(run[k] for k in key_fields) + (run["fit_window"] or run["window"],)
        if key in seen:
            continue
        seen.add(key)
        spec, pipe, report = _predict_one(series, run)
        rows.append(fc.report_row(report, spec, pipe))
        log.info("%s", ",".join(rows[-1]))
    with AtomicWriter(_out_path(o, "sweep.csv")) as w:
        w.writerow(fc.REPORT_HEADER)
        w.writerows(rows)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="itofeat", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic series")
    p.add_argument("--kind", required=True, choices=["brownian", "ou", "gbm", "mixture_iid", "piecewise_ito"])
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    for key in ("mu", "sigma", "theta", "dt", "x0", "weights", "locs", "scales", "drifts", "sigmas", "segment"):
        p.add_argument(f"--{key}", default=None)
    p.add_argument("--out", default=None)

    def common(name, help_, groups, multi=False):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", default=None, help="INI config file")
        for g in groups:
            _add(sp, g, multi=multi and g is not INPUT and g is not OUTPUT)
        return sp

    common("fit", "moving separation of mixtures; per-window estimates", [INPUT, SEPARATION, OUTPUT])
    sp = common("reconstruct", "uniform or state-dependent coefficient reconstruction",
                [INPUT, SEPARATION, RECON, OUTPUT])
    sp.add_argument("--kind", choices=["uniform", "nonuniform", "second"], default="uniform")
    sp = common("features", "cdf-grid, quantile or order-statistic features", [INPUT, SEPARATION, OUTPUT])
    sp.add_argument("--kind", choices=["cdf_grid", "quantile", "order_stat"], default="cdf_grid")
    sp.add_argument("--levels", default=None, help="comma-separated quantile levels")
    sp = common("predict", "rolling one-step forecast report", [INPUT, SEPARATION, RECON, PREDICT, OUTPUT])
    sp.add_argument("--predictions", default=None, help="also write per-step predictions here")
    common("sweep", "Cartesian product of predict configurations", [INPUT, SEPARATION, RECON, PREDICT, OUTPUT],
           multi=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        config = _read_config(args.config)
        if args.command == "fit":
            return cmd_fit(resolve(args, INPUT + SEPARATION + OUTPUT, config))
        if args.command == "reconstruct":
            return cmd_reconstruct(resolve(args, INPUT + SEPARATION + RECON + OUTPUT, config), args.kind)
        if args.command == "features":
            return cmd_features(resolve(args, INPUT + SEPARATION + OUTPUT, config), args.kind, args.levels)
        opts = INPUT + SEPARATION + RECON + PREDICT + OUTPUT
        if args.command == "predict":
            return cmd_predict(resolve(args, opts, config), args.predictions)
        multi = frozenset(SWEEP_KEYS)
        return cmd_sweep(resolve(args, opts, config, multi))
    except (UsageError, SeriesError, FileNotFoundError) as exc:
        print(f"itofeat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SeparationError, fc.ForecastError, rec.ReconstructionError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"itofeat: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"itofeat: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
