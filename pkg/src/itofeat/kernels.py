"""Kernel distribution functions and finite location-scale mixtures.

Three kernel families are supported: standard normal, Student t with
(possibly non-integer) degrees of freedom ``r`` and the standard logistic
law. A mixture evaluates ``sum_k p_k K((x - a_k) / b_k)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import special


class KernelFamily(str, Enum):
    NORMAL = "normal"
    STUDENT = "student"
    LOGISTIC = "logistic"

    @classmethod
    def parse(cls, value) -> "KernelFamily":
        if isinstance(value, cls):
            return value
        aliases = {"norm": "normal", "stud": "student", "t": "student", "log": "logistic"}
        key = str(value).strip().lower()
        return cls(aliases.get(key, key))


_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _check_shape(family: KernelFamily, shape):
    if family is KernelFamily.STUDENT:
        if shape is None or not np.all(np.asarray(shape) > 0):
            raise ValueError("Student kernel needs a positive shape parameter")


def kernel_cdf(family, z, shape=None):
    """Standard kernel distribution function evaluated at ``z``."""
    family = KernelFamily.parse(family)
    z = np.asarray(z, dtype=float)
    if family is KernelFamily.NORMAL:
        return special.ndtr(z)
    if family is KernelFamily.LOGISTIC:
        return special.expit(z)
    _check_shape(family, shape)
    return special.stdtr(shape, z)


def kernel_pdf(family, z, shape=None):
    """Standard kernel density evaluated at ``z``."""
    family = KernelFamily.parse(family)
    z = np.asarray(z, dtype=float)
    if family is KernelFamily.NORMAL:
        return np.exp(-0.5 * z * z) / _SQRT_2PI
    if family is KernelFamily.LOGISTIC:
        e = np.exp(-np.abs(z))
        return e / (1.0 + e) ** 2
    _check_shape(family, shape)
    return np.exp(kernel_logpdf(family, z, shape))


def kernel_logpdf(family, z, shape=None):
    family = KernelFamily.parse(family)
    z = np.asarray(z, dtype=float)
    if family is KernelFamily.NORMAL:
        return -0.5 * z * z - math.log(_SQRT_2PI)
    if family is KernelFamily.LOGISTIC:
        a = np.abs(z)
        return -a - 2.0 * np.log1p(np.exp(-a))
    _check_shape(family, shape)
    r = np.asarray(shape, dtype=float)
    return (special.gammaln(0.5 * (r + 1)) - special.gammaln(0.5 * r)
            - 0.5 * np.log(np.pi * r) - 0.5 * (r + 1) * np.log1p(z * z / r))


def kernel_dlogpdf(family, z, shape=None):
    """Derivative of the log density with respect to ``z``."""
    family = KernelFamily.parse(family)
    z = np.asarray(z, dtype=float)
    if family is KernelFamily.NORMAL:
        return -z
    if family is KernelFamily.LOGISTIC:
        return -np.tanh(0.5 * z)
    r = np.asarray(shape, dtype=float)
    return -(r + 1) * z / (r + z * z)


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    loc: float
    scale: float
    shape: float | None = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"component scale must be positive, got {self.scale}")
        if not -1e-12 <= self.weight <= 1 + 1e-12:
            raise ValueError(f"component weight outside [0, 1]: {self.weight}")
        if self.shape is not None and not self.shape > 0:
            raise ValueError(f"component shape must be positive, got {self.shape}")


@dataclass(frozen=True)
class MixtureModel:
    """Finite mixture of one kernel family, stored as parallel arrays."""

    family: KernelFamily
    weights: np.ndarray
    locs: np.ndarray
    scales: np.ndarray
    shapes: np.ndarray | None = None

    def __post_init__(self):
        family = KernelFamily.parse(self.family)
        object.__setattr__(self, "family", family)
        arrays = {}
        for name in ("weights", "locs", "scales"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            if name == "weights" and np.all(arr >= -1e-12):
                arr = np.maximum(arr, 0.0)
            arr.setflags(write=False)
            arrays[name] = arr
            object.__setattr__(self, name, arr)
        k = arrays["weights"].size
        if k < 1 or arrays["locs"].size != k or arrays["scales"].size != k:
            raise ValueError("mixture needs K >= 1 components with matching parameter lengths")
        if np.any(arrays["weights"] < -1e-12) or abs(arrays["weights"].sum() - 1.0) > 1e-10:
            raise ValueError(f"mixture weights must be nonnegative and sum to 1, got {arrays['weights']}")
        if not np.all(arrays["scales"] > 0) or not np.all(np.isfinite(arrays["locs"])):
            raise ValueError("mixture scales must be positive and locations finite")
        if family is KernelFamily.STUDENT:
            shapes = np.array(self.shapes if self.shapes is not None else [], dtype=float).ravel()
            if shapes.size != k or not np.all(shapes > 0):
                raise ValueError("Student mixture needs one positive shape per component")
            shapes.setflags(write=False)
            object.__setattr__(self, "shapes", shapes)
        elif self.shapes is not None:
            raise ValueError(f"{family.value} mixture takes no shape parameters")

    @classmethod
    def from_components(cls, family, components: Sequence[MixtureComponent]) -> "MixtureModel":
        family = KernelFamily.parse(family)
        shapes = None
        if family is KernelFamily.STUDENT:
            shapes = [c.shape for c in components]
        return cls(family, [c.weight for c in components], [c.loc for c in components],
                   [c.scale for c in components], shapes)

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def components(self) -> list[MixtureComponent]:
        shapes = self.shapes if self.shapes is not None else [None] * self.K
        return [MixtureComponent(float(p), float(a), float(b), None if r is None else float(r))
                for p, a, b, r in zip(self.weights, self.locs, self.scales, shapes)]

    def permuted(self, order) -> "MixtureModel":
        order = np.asarray(order)
        shapes = None if self.shapes is None else self.shapes[order]
        return MixtureModel(self.family, self.weights[order], self.locs[order],
                            self.scales[order], shapes)

    def _standardized(self, x):
        x = np.asarray(x, dtype=float)
        return (x[..., None] - self.locs) / self.scales

    def component_cdf(self, x):
        return kernel_cdf(self.family, self._standardized(x), self.shapes)

    def component_logpdf(self, x):
        """Per-component ``log(f((x - a_k) / b_k) / b_k)``, shape ``x.shape + (K,)``."""
        return kernel_logpdf(self.family, self._standardized(x), self.shapes) - np.log(self.scales)

    def to_record(self) -> str:
        return format_model(self)


def mixture_cdf(model: MixtureModel, x):
    return model.component_cdf(x) @ model.weights


def mixture_pdf(model: MixtureModel, x):
    return np.exp(model.component_logpdf(x)) @ model.weights


def mixture_logpdf(model: MixtureModel, x):
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    return special.logsumexp(model.component_logpdf(x) + logw, axis=-1)


def _bracket(model: MixtureModel) -> tuple[float, float]:
    widen = 1.0
    if model.family is KernelFamily.STUDENT:
        widen = 1.0 + 10.0 / float(np.min(model.shapes))
    half = 12.0 * widen * model.scales
    return float(np.min(model.locs - half)), float(np.max(model.locs + half))


def mixture_quantile(model: MixtureModel, q, tol: float = 1e-10):
    """Inverse of :func:`mixture_cdf` by bisection.

    ``q`` may be a scalar or an array of probabilities in ``(0, 1)``. The
    starting bracket is doubled until it straddles every requested level.
    """
    q_arr = np.asarray(q, dtype=float)
    if np.any(~((q_arr > 0) & (q_arr < 1))):
        raise ValueError("quantile levels must lie strictly inside (0, 1)")
    flat = q_arr.ravel()
    lo_edge, hi_edge = _bracket(model)
    while mixture_cdf(model, lo_edge) > flat.min():
        lo_edge -= hi_edge - lo_edge
    while mixture_cdf(model, hi_edge) < flat.max():
        hi_edge += hi_edge - lo_edge
    lo = np.full(flat.shape, lo_edge)
    hi = np.full(flat.shape, hi_edge)
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        fm = mixture_cdf(model, mid)
        hit = np.abs(fm - flat) <= 0.01 * tol
        below = fm < flat
        lo = np.where(hit | below, mid, lo)
        hi = np.where(hit | ~below, mid, hi)
        if np.all(hi - lo <= 2 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))):
            break
    root = 0.5 * (lo + hi)
    return root.reshape(q_arr.shape) if q_arr.ndim else float(root[0])


def component_variances(model: MixtureModel) -> np.ndarray:
    b2 = model.scales ** 2
    if model.family is KernelFamily.NORMAL:
        return b2
    if model.family is KernelFamily.LOGISTIC:
        return b2 * math.pi ** 2 / 3.0
    r = model.shapes
    if np.any(r <= 2):
        raise ValueError("Student mixture variance is undefined for shape <= 2")
    return b2 * r / (r - 2.0)


def mixture_moments(model: MixtureModel) -> tuple[float, float]:
    """Mean and variance of the mixture law."""
    if model.family is KernelFamily.STUDENT and np.any(model.shapes <= 1):
        raise ValueError("Student mixture mean is undefined for shape <= 1")
    mean = float(model.weights @ model.locs)
    second = float(model.weights @ (model.locs ** 2 + component_variances(model)))
    return mean, max(second - mean * mean, 0.0)


def mixture_sample(model: MixtureModel, size: int, rng: np.random.Generator) -> np.ndarray:
    labels = rng.choice(model.K, size=size, p=model.weights / model.weights.sum())
    if model.family is KernelFamily.NORMAL:
        z = rng.standard_normal(size)
    elif model.family is KernelFamily.LOGISTIC:
        z = rng.logistic(size=size)
    else:
        z = rng.standard_t(model.shapes[labels])
    return model.locs[labels] + model.scales[labels] * z


# ---------------------------------------------------------------------------
# flat text records: family,K,p_1,a_1,b_1[,r_1],...


def format_model(model: MixtureModel) -> str:
    return ",".join(model_fields(model))


def model_fields(model: MixtureModel) -> list[str]:
    out = [model.family.value, str(model.K)]
    for k in range(model.K):
        out += [repr(float(model.weights[k])), repr(float(model.locs[k])), repr(float(model.scales[k]))]
        if model.shapes is not None:
            out.append(repr(float(model.shapes[k])))
    return out


def parse_model(record: str | Sequence[str]) -> MixtureModel:
    fields = record.split(",") if isinstance(record, str) else list(record)
    family = KernelFamily.parse(fields[0])
    K = int(fields[1])
    width = 4 if family is KernelFamily.STUDENT else 3
    nums = [float(f) for f in fields[2:]]
    if len(nums) != K * width:
        raise ValueError(f"expected {K * width} parameters for {family.value} K={K}, got {len(nums)}")
    block = np.array(nums).reshape(K, width)
    shapes = block[:, 3] if width == 4 else None
    return MixtureModel(family, block[:, 0], block[:, 1], block[:, 2], shapes)
