"""Separation of finite mixtures on a single window and along a moving window.

Three estimators are provided:

* :func:`em_fit` maximizes the (chronologically weighted) log-likelihood,
  with exact EM steps for normal kernels, latent-scale EM for Student
  kernels and direct quasi-Newton maximization for logistic kernels;
* :func:`l2_fit` minimizes the squared discrepancy between a (weighted)
  empirical distribution function and the mixture CDF on a grid of order
  statistics;
* :func:`hybrid_fit` minimizes the discrepancy penalized by the mean
  log-likelihood.

:func:`msm_run` applies one of them window by window, warm-starting every
window from the previous solution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy import optimize, special

from . import kernels
from .kernels import KernelFamily, MixtureModel
from .series import WindowView, as_array, windows
from .weighting import UNIFORM, WeightScheme, weights

log = logging.getLogger(__name__)

METHODS = ("em", "l2", "hybrid")
L2_WEIGHTINGS = ("edf", "terms", "both")
SHAPE_BOUNDS = (0.5, 200.0)
REVIVE_SCALE = 0.01  # warm-start components narrower than this fraction of the window std are re-seeded


class SeparationError(ValueError):
    """Window data cannot support the requested mixture fit."""


class DegenerateWindowError(SeparationError):
    """All observations in the window are identical."""


@dataclass(frozen=True)
class SeparationConfig:
    family: KernelFamily = KernelFamily.NORMAL
    K: int = 3
    method: str = "em"
    lam: float = 0.0
    weight_scheme: WeightScheme = UNIFORM
    l2_weighting: str = "edf"
    grid_size: int | None = None
    max_iter: int = 500
    tol: float = 1e-8
    seed: int = 0
    scale_floor: float = 1e-6
    shape_init: float = 10.0
    revive: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily.parse(self.family))
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.lam < 0:
            raise ValueError("hybrid penalty weight must be nonnegative")
        if self.l2_weighting not in L2_WEIGHTINGS:
            raise ValueError(f"l2_weighting must be one of {L2_WEIGHTINGS}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.grid_size is not None and self.grid_size < 3 * self.K - 1:
            raise ValueError(f"grid size must be at least 3K-1 = {3 * self.K - 1}")

    @property
    def M(self) -> int:
        return self.grid_size if self.grid_size is not None else max(20, 3 * self.K - 1)


@dataclass(frozen=True)
class WindowEstimate:
    index: int
    model: MixtureModel
    loglik: float
    l2: float
    iterations: int
    converged: bool
    floored: tuple = ()
    trace: tuple = ()
    notes: tuple = ()


# ---------------------------------------------------------------------------
# empirical distribution functions


@dataclass(frozen=True)
class EmpiricalCDF:
    """Left-continuous step function ``F(x) = sum of weights of points < x``."""

    points: np.ndarray
    cumulative: np.ndarray

    def __call__(self, x):
        idx = np.searchsorted(self.points, np.asarray(x, dtype=float), side="left")
        return self.cumulative[idx]

    @property
    def total(self) -> float:
        return float(self.cumulative[-1])


def _values(window) -> np.ndarray:
    if isinstance(window, WindowView):
        return np.asarray(window.values, dtype=float)
    return as_array(window)


def empirical_cdf(window, scheme: WeightScheme = UNIFORM, w=None) -> EmpiricalCDF:
    """(Weighted) EDF of a window; weights attach to observations in time order."""
    x = _values(window)
    n = x.size
    order = np.argsort(x, kind="stable")
    points = x[order]
    if w is None and scheme.is_uniform and scheme.normalize:
        cumulative = np.arange(n + 1) / n
    else:
        w = weights(scheme, n) if w is None else np.asarray(w, dtype=float)
        if w.size != n:
            raise ValueError("weight vector length differs from window width")
        cumulative = np.concatenate([[0.0], np.cumsum(w[order])])
    points.setflags(write=False)
    cumulative.setflags(write=False)
    return EmpiricalCDF(points, cumulative)


def grid_ranks(n: int, M: int) -> np.ndarray:
    """1-based ranks ``1, 1+h, ..., n`` with ``h = (n-1)/(M-1)``, rounded half up."""
    if M < 2:
        return np.array([n])
    return np.floor(1.0 + np.arange(M) * (n - 1) / (M - 1) + 0.5).astype(int)


# ---------------------------------------------------------------------------
# per-window objective


def _cold_start(x: np.ndarray, config: SeparationConfig) -> MixtureModel:
    K = config.K
    locs = np.quantile(x, (np.arange(1, K + 1) - 0.5) / K)
    scales = np.full(K, x.std() / K)
    shapes = np.full(K, config.shape_init) if config.family is KernelFamily.STUDENT else None
    return MixtureModel(config.family, np.full(K, 1.0 / K), locs, scales, shapes)


class WindowProblem:
    """Data, weights and objectives of one window fit."""

    def __init__(self, window, config: SeparationConfig, w=None):
        self.index = window.index if isinstance(window, WindowView) else None
        x = _values(window)
        n = x.size
        if n < 3 * config.K:
            raise SeparationError(f"window of {n} points too small for K={config.K} (need {3 * config.K})")
        std = float(x.std())
        if not std > 0:
            raise DegenerateWindowError("all observations in the window are identical")
        self.x, self.n, self.config, self.std = x, n, config, std
        self.init_notes: tuple = ()
        self.family = config.family
        self.floor = config.scale_floor * std
        if w is None:
            raw = weights(replace(config.weight_scheme, normalize=False), n)
        else:
            raw = np.asarray(w, dtype=float)
            if raw.shape != (n,) or np.any(raw < 0) or not raw.sum() > 0:
                raise SeparationError("explicit weights must be n nonnegative values with a positive sum")
        self.v = raw * (n / raw.sum())  # likelihood weights, sum n
        on_edf = config.l2_weighting in ("edf", "both")
        if w is None:
            self.edf = empirical_cdf(x, config.weight_scheme if on_edf else UNIFORM)
        else:
            self.edf = empirical_cdf(x, w=raw / raw.sum()) if on_edf else empirical_cdf(x)
        order = np.argsort(x, kind="stable")
        ranks = grid_ranks(n, config.M)
        self.grid = x[order[ranks - 1]]
        self.target = self.edf(self.grid)
        if config.l2_weighting in ("terms", "both"):
            self.omega = raw[order[ranks - 1]]
        else:
            self.omega = np.ones(ranks.size)

    # -- plain evaluations ------------------------------------------------
    def loglik(self, model: MixtureModel) -> float:
        return float(self.v @ kernels.mixture_logpdf(model, self.x))

    def l2(self, model: MixtureModel) -> float:
        e = kernels.mixture_cdf(model, self.grid) - self.target
        return float(self.omega @ (e * e))

    def cold_start(self) -> MixtureModel:
        return _cold_start(self.x, self.config)

    def prepare_init(self, init: MixtureModel | None) -> MixtureModel:
        if init is None:
            return self.cold_start()
        if init.family is not self.family or init.K != self.config.K:
            raise SeparationError("initial model family/K differs from the configuration")
        weights = np.array(init.weights)
        locs = np.array(init.locs)
        scales = np.maximum(init.scales, self.floor * (1 + 1e-9))
        shapes = init.shapes
        if shapes is not None:
            shapes = np.clip(shapes, *SHAPE_BOUNDS)
        # a component that collapsed onto a few points in the previous window would stay dead
        dead = (weights * self.n < 1.0) | (scales < REVIVE_SCALE * self.std)
        if self.config.revive and self.config.K > 1 and dead.any() and not dead.all():
            cold = self.cold_start()
            weights[dead] = 1.0 / self.config.K
            weights[~dead] *= (1.0 - weights[dead].sum()) / weights[~dead].sum()
            locs[dead] = cold.locs[dead]
            scales[dead] = cold.scales[dead]
            self.init_notes = tuple(f"revived collapsed component {k}" for k in np.flatnonzero(dead))
        return MixtureModel(init.family, weights, locs, scales, shapes)

    def floored(self, model: MixtureModel) -> tuple:
        return tuple(bool(b <= self.floor * (1 + 1e-6)) for b in model.scales)

    # -- reparameterization ---------------------------------------------
    def pack(self, model: MixtureModel) -> np.ndarray:
        with np.errstate(divide="ignore"):
            eta = np.log(np.maximum(model.weights, 1e-300))
        eta = eta - eta.max()
        s = np.log(np.maximum(model.scales - self.floor, 1e-300 + 1e-12 * self.std))
        parts = [eta, model.locs, s]
        if self.family is KernelFamily.STUDENT:
            parts.append(np.log(model.shapes))
        return np.concatenate(parts)

    def unpack(self, theta: np.ndarray) -> MixtureModel:
        K = self.config.K
        p = special.softmax(theta[:K])
        a = theta[K:2 * K]
        b = self.floor + np.exp(np.minimum(theta[2 * K:3 * K], 700.0))
        r = np.exp(theta[3 * K:4 * K]) if self.family is KernelFamily.STUDENT else None
        return MixtureModel(self.family, p / p.sum(), a, b, r)

    def _bounds(self):
        K = self.config.K
        bounds = [(None, None)] * (3 * K)
        if self.family is KernelFamily.STUDENT:
            bounds += [(math.log(SHAPE_BOUNDS[0]), math.log(SHAPE_BOUNDS[1]))] * K
        return bounds

    def _l2_and_grad(self, theta):
        K = self.config.K
        m = self.unpack(theta)
        p, b = m.weights, m.scales
        z = (self.grid[:, None] - m.locs) / b
        C = kernels.kernel_cdf(self.family, z, m.shapes)
        f = kernels.kernel_pdf(self.family, z, m.shapes)
        F = C @ p
        e = F - self.target
        val = float(self.omega @ (e * e))
        g = 2.0 * self.omega * e
        grad = np.empty_like(theta)
        grad[:K] = p * ((C - F[:, None]).T @ g)
        grad[K:2 * K] = -p / b * (f.T @ g)
        grad[2 * K:3 * K] = -p * (b - self.floor) / b * ((f * z).T @ g)
        return val, grad

    def _ll_and_grad(self, theta):
        K = self.config.K
        m = self.unpack(theta)
        p, b = m.weights, m.scales
        z = (self.x[:, None] - m.locs) / b
        with np.errstate(divide="ignore"):
            lc = np.log(p) + kernels.kernel_logpdf(self.family, z, m.shapes) - np.log(b)
        lse = special.logsumexp(lc, axis=1)
        R = np.exp(lc - lse[:, None])
        val = float(self.v @ lse)
        vR = self.v[:, None] * R
        dlog = kernels.kernel_dlogpdf(self.family, z, m.shapes)
        grad = np.empty_like(theta)
        grad[:K] = vR.sum(axis=0) - self.v.sum() * p
        grad[K:2 * K] = (vR * (-dlog)).sum(axis=0) / b
        grad[2 * K:3 * K] = -(vR * (1.0 + z * dlog)).sum(axis=0) / b * (b - self.floor)
        return val, grad

    def objective(self, lam_l2: float, lam_ll: float, scale: float):
        """``scale * (lam_l2 * l2 - lam_ll * loglik / n)`` and its gradient."""
        K = self.config.K
        student = self.family is KernelFamily.STUDENT

        def smooth_part(theta):
            val, grad = 0.0, np.zeros_like(theta)
            if lam_l2:
                v, g = self._l2_and_grad(theta)
                val += lam_l2 * v
                grad += lam_l2 * g
            if lam_ll:
                v, g = self._ll_and_grad(theta)
                val -= lam_ll * v / self.n
                grad -= lam_ll * g / self.n
            return val, grad

        def fun(theta):
            val, grad = smooth_part(theta)
            if student:
                # no closed form for d/dr of the t CDF; central differences on log r
                for k in range(3 * K, 4 * K):
                    h = 1e-6 * max(1.0, abs(theta[k]))
                    tp, tm = theta.copy(), theta.copy()
                    tp[k] += h
                    tm[k] -= h
                    grad[k] = (smooth_part(tp)[0] - smooth_part(tm)[0]) / (2 * h)
            if not np.isfinite(val):
                return 1e300, np.zeros_like(theta)
            return scale * val, scale * grad

        return fun

    def minimize(self, start: MixtureModel, lam_l2: float, lam_ll: float):
        """Quasi-Newton descent from ``start``; returns (model, iterations, converged)."""
        theta0 = self.pack(start)
        if lam_ll == 0:
            ref = self.l2(start)
            scale = 1.0 / ref if ref > 0 else 1.0
        else:
            scale = 1.0 / max(1.0, lam_ll)
        fun = self.objective(lam_l2, lam_ll, scale)
        f0 = fun(theta0)[0]
        try:
            res = optimize.minimize(fun, theta0, jac=True, method="L-BFGS-B", bounds=self._bounds(),
                                    options={"maxiter": self.config.max_iter, "ftol": 1e-15,
                                             "gtol": 1e-10, "maxcor": 20})
        except (FloatingPointError, ValueError) as exc:  # pragma: no cover - defensive
            log.warning("optimizer failed on window %s: %s", self.index, exc)
            return start, 0, False
        # L-BFGS-B reports an abnormal line search once it sits at machine precision
        converged = bool(res.success or res.status == 2)
        if not np.isfinite(res.fun) or res.fun > f0:
            return start, int(res.nit), False
        return self.unpack(res.x), int(res.nit), converged


# ---------------------------------------------------------------------------
# EM variants


def _merge_collapsed(p, a, b, r, x, notes):
    """Merge coinciding components and re-seed the freed one at the widest data gap."""
    K = p.size
    for j in range(K):
        for k in range(j + 1, K):
            if abs(a[j] - a[k]) < 1e-9 and abs(b[j] - b[k]) < 1e-9:
                xs = np.sort(x)
                gaps = np.diff(xs)
                g = int(np.argmax(gaps))
                total = p[j] + p[k]
                p[j] = p[k] = 0.5 * total
                a[k] = 0.5 * (xs[g] + xs[g + 1])
                b[k] = max(gaps[g], b[j])
                if r is not None:
                    r[k] = r[j]
                notes.append(f"merged collapsed components {j} and {k}")
                log.info("merged collapsed components %d and %d; refilled at %.6g", j, k, a[k])
                return True
    return False


def _em_steps(problem: WindowProblem, start: MixtureModel):
    """Weighted EM for normal and Student kernels."""
    x, v, floor = problem.x, problem.v, problem.floor
    cfg = problem.config
    student = problem.family is KernelFamily.STUDENT
    p = np.array(start.weights)
    a = np.array(start.locs)
    b = np.array(start.scales)
    r = np.array(start.shapes) if student else None
    notes: list[str] = []

    def model():
        return MixtureModel(problem.family, p / p.sum(), a, b, r)

    prev = problem.loglik(model())
    trace = [prev]
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        z = (x[:, None] - a) / b
        with np.errstate(divide="ignore"):
            lc = np.log(p) + kernels.kernel_logpdf(problem.family, z, r) - np.log(b)
        R = np.exp(lc - special.logsumexp(lc, axis=1)[:, None])
        vR = v[:, None] * R
        Nk = vR.sum(axis=0)
        alive = Nk > 1e-12 * v.sum()
        p = Nk / Nk.sum()
        if student:
            u = (r + 1.0) / (r + z * z)
            wu = vR * u
            a_new = (wu * x[:, None]).sum(axis=0) / np.where(alive, wu.sum(axis=0), 1.0)
            a = np.where(alive, a_new, a)
            var = (wu * (x[:, None] - a) ** 2).sum(axis=0) / np.where(alive, Nk, 1.0)
        else:
            a_new = (vR * x[:, None]).sum(axis=0) / np.where(alive, Nk, 1.0)
            a = np.where(alive, a_new, a)
            var = (vR * (x[:, None] - a) ** 2).sum(axis=0) / np.where(alive, Nk, 1.0)
        b = np.where(alive, np.maximum(np.sqrt(var), floor), b)
        if student:
            for k in np.flatnonzero(alive):
                zk = (x - a[k]) / b[k]
                wk = vR[:, k]

                def neg(rk, zk=zk, wk=wk):
                    return -float(wk @ kernels.kernel_logpdf(KernelFamily.STUDENT, zk, rk))

                r[k] = optimize.minimize_scalar(neg, bounds=SHAPE_BOUNDS, method="bounded",
                                                options={"xatol": 1e-6}).x
        if problem.config.K > 1 and _merge_collapsed(p, a, b, r, x, notes):
            prev = problem.loglik(model())
            trace.append(prev)
            continue
        cur = problem.loglik(model())
        trace.append(cur)
        if abs(cur - prev) <= cfg.tol * max(abs(prev), 1.0):
            converged = True
            break
        prev = cur
    return model(), it, converged, tuple(trace), tuple(notes)


def em_fit(window, config: SeparationConfig, init: MixtureModel | None = None, w=None) -> WindowEstimate:
    """Maximize the weighted log-likelihood ``sum_j v_j log f(x_j)`` on one window.

    The window holds increments. ``v`` are the configured chronological
    weights (or the explicit vector ``w``, oldest first) rescaled to sum to
    the window width, so uniform weights give the classical likelihood.
    """
    problem = WindowProblem(window, config, w)
    start = problem.prepare_init(init)
    if config.family is KernelFamily.LOGISTIC:
        model, iterations, converged = problem.minimize(start, 0.0, 1.0)
        trace, notes = (), ()
    else:
        model, iterations, converged, trace, notes = _em_steps(problem, start)
    notes = problem.init_notes + tuple(notes)
    return WindowEstimate(problem.index, model, problem.loglik(model), problem.l2(model),
                          iterations, converged, problem.floored(model), trace, notes)


def _discrepancy_fit(window, config: SeparationConfig, init, lam: float, w=None) -> WindowEstimate:
    problem = WindowProblem(window, config, w)
    # descend from the likelihood solution and, when given, from the warm start; keep the better end point
    first = em_fit(window, replace(config, method="em"), init, w)
    starts = [first.model]
    if init is not None:
        starts.append(problem.prepare_init(init))
    best, total_iter = None, first.iterations
    for start in starts:
        model, iterations, converged = problem.minimize(start, 1.0, lam)
        total_iter += iterations
        value = problem.l2(model) - lam * problem.loglik(model) / problem.n
        if best is None or value < best[0]:
            best = (value, model, converged)
    _, model, converged = best
    notes = ("seeded from em_fit",) if init is None else ()
    return WindowEstimate(problem.index, model, problem.loglik(model), problem.l2(model),
                          total_iter, converged, problem.floored(model), (), notes)


def l2_fit(window, config: SeparationConfig, init: MixtureModel | None = None, w=None) -> WindowEstimate:
    """Minimize ``sum_j omega_j (F*(x_j) - F(x_j))^2`` over order-statistic grid points."""
    return _discrepancy_fit(window, config, init, 0.0, w)


def hybrid_fit(window, config: SeparationConfig, init: MixtureModel | None = None, w=None) -> WindowEstimate:
    """Minimize ``l2 - lam * loglik / n``; ``lam = 0`` is exactly :func:`l2_fit`."""
    return _discrepancy_fit(window, config, init, config.lam, w)


_FITTERS = {"em": em_fit, "l2": l2_fit, "hybrid": hybrid_fit}


def fit_window(window, config: SeparationConfig, init: MixtureModel | None = None) -> WindowEstimate:
    return _FITTERS[config.method](window, config, init)


def msm_run(series, n: int, stride: int, config: SeparationConfig,
            init: MixtureModel | None = None) -> list[WindowEstimate]:
    """Moving separation of mixtures over an increment series.

    Each window after the first is initialized from the previous window's
    fitted model. A window whose data are degenerate repeats the previous
    model with ``converged=False`` so the chain continues.
    """
    return list(iter_msm(series, n, stride, config, init))


def iter_msm(series, n: int, stride: int, config: SeparationConfig,
             init: MixtureModel | None = None) -> Iterable[WindowEstimate]:
    prev = init
    for view in windows(series, n, stride):
        try:
            est = fit_window(view, config, prev)
        except DegenerateWindowError:
            if prev is None:
                raise
            est = WindowEstimate(view.index, prev, math.nan, math.nan, 0, False,
                                 notes=("degenerate window; previous model carried",))
        prev = est.model
        yield est


def estimate_row(est: WindowEstimate) -> list[str]:
    """CSV row ``i,family,K,loglik,l2,converged,p_1,a_1,b_1[,r_1],...``."""
    fields = kernels.model_fields(est.model)
    return [str(est.index), fields[0], fields[1], repr(float(est.loglik)), repr(float(est.l2)),
            str(int(est.converged))] + fields[2:]


def estimate_header(config: SeparationConfig) -> list[str]:
    cols = ["i", "family", "K", "loglik", "l2", "converged"]
    for k in range(1, config.K + 1):
        cols += [f"p_{k}", f"a_{k}", f"b_{k}"]
        if config.family is KernelFamily.STUDENT:
            cols.append(f"r_{k}")
    return cols


def match_by_location(model: MixtureModel, locs) -> MixtureModel:
    """Greedy matching of components to reference locations (closest pairs first)."""
    locs = np.asarray(locs, dtype=float)
    dist = np.abs(model.locs[:, None] - locs[None, :])
    order = np.empty(locs.size, dtype=int)
    used_m, used_r = set(), set()
    for flat in np.argsort(dist, axis=None, kind="stable"):
        i, j = divmod(int(flat), locs.size)
        if i in used_m or j in used_r:
            continue
        order[j] = i
        used_m.add(i)
        used_r.add(j)
    return model.permuted(order)
