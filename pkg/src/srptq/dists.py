"""Parametric positive continuous distributions for service and patience times.

Four families: exponential, Weibull, Pareto, and a deterministic point mass
that exists only so engine hand-trace tests can script exact timings.  Each
spec exposes the full analytic surface the fluid formulas need (CDF, survival,
density, hazard rate, quantile function, truncated first moment) plus
inverse-CDF sampling from an explicitly seeded uniform stream.

Parameterization:
  exponential(mean m):   F(x) = 1 - exp(-x/m)
  Weibull(shape a, scale m):  F(x) = 1 - exp(-(x/m)^a)
  Pareto(shape a, scale m):   F(x) = 1 - (m/x)^a for x >= m, 0 below m
  deterministic(v):      point mass at v

Pareto requires shape > 1 so the mean a*m/(a-1) is finite; the waiting-time
formulas are meaningless otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np
from scipy.special import gammainc


class Family(str, Enum):
    EXPONENTIAL = "exponential"
    WEIBULL = "weibull"
    PARETO = "pareto"
    DETERMINISTIC = "deterministic"


class DegenerateTailError(ValueError):
    """Survival function underflowed; the hazard rate is not representable."""


_SF_FLOOR = 1e-300


class RandomStream:
    """Uniform(0,1) stream seeded from an integer key tuple.

    Single-owner: a stream must not be shared across threads.  Parallel
    replications derive independent streams from (base seed, replication
    index, role index), so draws are reproducible given (key, draw index).
    """

    __slots__ = ("key", "_gen")

    def __init__(self, *key: int):
        self.key = tuple(int(k) for k in key)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.key)))

    def uniform(self) -> float:
        return float(self._gen.random())

    def uniforms(self, n: int) -> np.ndarray:
        return self._gen.random(int(n))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RandomStream{self.key}"


def _as_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _maybe_scalar(arr, scalar: bool):
    return float(arr) if scalar else arr


@dataclass(frozen=True)
class DistributionSpec:
    """Immutable description of one distribution: family, shape, scale.

    ``shape`` is None for the exponential and deterministic families.  For
    the deterministic family ``scale`` is the point mass (= the mean).
    """

    family: Family
    shape: float | None
    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if self.family in (Family.EXPONENTIAL, Family.DETERMINISTIC):
            if self.shape is not None:
                raise ValueError(f"{self.family.value} takes no shape parameter")
        else:
            if self.shape is None or not math.isfinite(self.shape):
                raise ValueError(f"{self.family.value} requires a finite shape parameter")
            if self.family is Family.WEIBULL and self.shape <= 0:
                raise ValueError(f"Weibull shape must be positive, got {self.shape}")
            if self.family is Family.PARETO and self.shape <= 1:
                raise ValueError(
                    f"Pareto shape must exceed 1 for a finite mean, got {self.shape}"
                )

    # ------------------------------------------------------------------ #
    # analytic surface
    # ------------------------------------------------------------------ #

    def mean(self) -> float:
        f, a, m = self.family, self.shape, self.scale
        if f is Family.EXPONENTIAL or f is Family.DETERMINISTIC:
            return m
        if f is Family.WEIBULL:
            return m * math.gamma(1.0 + 1.0 / a)
        return a * m / (a - 1.0)  # Pareto

    def cdf(self, x):
        """F(x); 0 below the support, accepts scalars or arrays."""
        xv, scalar = _as_array(x)
        xv = np.maximum(xv, 0.0)
        f, a, m = self.family, self.shape, self.scale
        if f is Family.EXPONENTIAL:
            out = -np.expm1(-xv / m)
        elif f is Family.WEIBULL:
            out = -np.expm1(-((xv / m) ** a))
        elif f is Family.PARETO:
            safe = np.maximum(xv, m)
            out = np.where(xv < m, 0.0, 1.0 - (m / safe) ** a)
        else:
            out = np.where(xv < m, 0.0, 1.0)
        return _maybe_scalar(out, scalar)

    def sf(self, x):
        """Survival function 1 - F(x), computed without cancellation."""
        xv, scalar = _as_array(x)
        xv = np.maximum(xv, 0.0)
        f, a, m = self.family, self.shape, self.scale
        if f is Family.EXPONENTIAL:
            out = np.exp(-xv / m)
        elif f is Family.WEIBULL:
            out = np.exp(-((xv / m) ** a))
        elif f is Family.PARETO:
            safe = np.maximum(xv, m)
            out = np.where(xv < m, 1.0, (m / safe) ** a)
        else:
            out = np.where(xv < m, 1.0, 0.0)
        return _maybe_scalar(out, scalar)

    def pdf(self, x):
        """Density g(x).  The deterministic family has none and raises."""
        f, a, m = self.family, self.shape, self.scale
        if f is Family.DETERMINISTIC:
            raise ValueError("deterministic distribution has no density")
        xv, scalar = _as_array(x)
        if f is Family.EXPONENTIAL:
            out = np.where(xv < 0, 0.0, np.exp(-np.maximum(xv, 0.0) / m) / m)
            return _maybe_scalar(out, scalar)
        if f is Family.WEIBULL:
            pos = xv > 0
            safe = np.where(pos, xv, m)
            body = (a / m) * (safe / m) ** (a - 1.0) * np.exp(-((safe / m) ** a))
            if a < 1.0:
                at0 = np.inf
            elif a == 1.0:
                at0 = 1.0 / m
            else:
                at0 = 0.0
            out = np.where(pos, body, np.where(xv == 0, at0, 0.0))
            return _maybe_scalar(out, scalar)
        # Pareto
        safe = np.maximum(xv, m)
        out = np.where(xv < m, 0.0, a * m**a / safe ** (a + 1.0))
        return _maybe_scalar(out, scalar)

    def hazard(self, x):
        """Hazard rate g(x) / (1 - F(x)) on the region where F(x) < 1."""
        f, a, m = self.family, self.shape, self.scale
        if f is Family.DETERMINISTIC:
            raise ValueError("deterministic distribution has no hazard rate")
        xv, scalar = _as_array(x)
        sf = np.asarray(self.sf(xv))
        if np.any(sf < _SF_FLOOR):
            raise DegenerateTailError(
                f"degenerate tail: survival below {_SF_FLOOR:g} at x={x!r}"
            )
        if f is Family.EXPONENTIAL:
            out = np.full_like(xv, 1.0 / m)
        elif f is Family.WEIBULL:
            pos = xv > 0
            safe = np.where(pos, xv, m)
            body = (a / m) * (safe / m) ** (a - 1.0)
            if a < 1.0:
                at0 = np.inf
            elif a == 1.0:
                at0 = 1.0 / m
            else:
                at0 = 0.0
            out = np.where(pos, body, at0)
        else:  # Pareto: 0 below the scale, a/x above (decreasing)
            safe = np.maximum(xv, m)
            out = np.where(xv < m, 0.0, a / safe)
        return _maybe_scalar(out, scalar)

    def ppf(self, u):
        """Quantile function F^{-1}(u) for u in [0, 1)."""
        uv, scalar = _as_array(u)
        if np.any((uv < 0.0) | (uv >= 1.0)):
            raise ValueError("quantile argument must lie in [0, 1)")
        f, a, m = self.family, self.shape, self.scale
        if f is Family.EXPONENTIAL:
            out = -m * np.log1p(-uv)
        elif f is Family.WEIBULL:
            out = m * (-np.log1p(-uv)) ** (1.0 / a)
        elif f is Family.PARETO:
            out = m * (1.0 - uv) ** (-1.0 / a)
        else:
            out = np.full_like(uv, m)
        return _maybe_scalar(out, scalar)

    def truncated_first_moment(self, tau):
        """E[X * 1(X <= tau)], the mass of work carried by values up to tau.

        Closed forms: exponential m*(1 - e^{-t/m}(1 + t/m)); Weibull via the
        regularized lower incomplete gamma; Pareto piecewise.  Nondecreasing
        in tau and converging to the mean.
        """
        tv, scalar = _as_array(tau)
        if np.any(tv < 0):
            raise ValueError("truncation point must be nonnegative")
        f, a, m = self.family, self.shape, self.scale
        if f is Family.EXPONENTIAL:
            z = tv / m
            out = m * (1.0 - np.exp(-z) * (1.0 + z))
        elif f is Family.WEIBULL:
            out = self.mean() * gammainc(1.0 + 1.0 / a, (tv / m) ** a)
        elif f is Family.PARETO:
            safe = np.maximum(tv, m)
            body = (a / (a - 1.0)) * (m - m**a * safe ** (1.0 - a))
            out = np.where(tv <= m, 0.0, body)
        else:
            out = np.where(tv >= m, m, 0.0)
        return _maybe_scalar(out, scalar)

    # ------------------------------------------------------------------ #
    # sampling
    # ------------------------------------------------------------------ #

    def sample(self, stream: RandomStream) -> float:
        """One inverse-CDF draw; deterministic given (stream key, draw index)."""
        return float(self.ppf(stream.uniform()))

    def sample_array(self, stream: RandomStream, n: int) -> np.ndarray:
        return np.asarray(self.ppf(stream.uniforms(n)), dtype=float)

    def label(self) -> str:
        if self.shape is None:
            return f"{self.family.value}(scale={self.scale:g})"
        return f"{self.family.value}(shape={self.shape:g}, scale={self.scale:g})"


# ---------------------------------------------------------------------- #
# constructors
# ---------------------------------------------------------------------- #


def scale_for_mean(family: Family, shape: float | None, mean: float) -> float:
    """Solve for the scale parameter that yields the requested mean."""
    if not (math.isfinite(mean) and mean > 0):
        raise ValueError(f"mean must be positive and finite, got {mean}")
    if family in (Family.EXPONENTIAL, Family.DETERMINISTIC):
        return mean
    if family is Family.WEIBULL:
        return mean / math.gamma(1.0 + 1.0 / shape)
    if family is Family.PARETO:
        if shape <= 1:
            raise ValueError("Pareto shape must exceed 1 for a finite mean")
        return mean * (shape - 1.0) / shape
    raise ValueError(f"unknown family {family!r}")


def exponential(mean: float) -> DistributionSpec:
    return DistributionSpec(Family.EXPONENTIAL, None, mean)


def weibull(shape: float, *, scale: float | None = None, mean: float | None = None) -> DistributionSpec:
    scale = _resolve_scale(Family.WEIBULL, shape, scale, mean)
    return DistributionSpec(Family.WEIBULL, float(shape), scale)


def pareto(shape: float, *, scale: float | None = None, mean: float | None = None) -> DistributionSpec:
    scale = _resolve_scale(Family.PARETO, shape, scale, mean)
    return DistributionSpec(Family.PARETO, float(shape), scale)


def deterministic(value: float) -> DistributionSpec:
    return DistributionSpec(Family.DETERMINISTIC, None, value)


def _resolve_scale(family, shape, scale, mean):
    if (scale is None) == (mean is None):
        raise ValueError("specify exactly one of scale or mean")
    if scale is not None:
        return float(scale)
    return scale_for_mean(family, shape, float(mean))


def from_config(obj: Mapping, field: str = "distribution") -> DistributionSpec:
    """Parse a distribution from config, e.g. {"family": "weibull", "shape": 0.4, "mean": 1.0}.

    Either "mean" (scale solved for) or an explicit "scale" must be given.
    Errors name the offending config field.
    """
    if not isinstance(obj, Mapping):
        raise ValueError(f"{field}: expected a mapping, got {type(obj).__name__}")
    try:
        family = Family(str(obj["family"]).lower())
    except KeyError:
        raise ValueError(f"{field}.family: missing") from None
    except ValueError:
        raise ValueError(
            f"{field}.family: unknown family {obj['family']!r} "
            f"(expected one of {[f.value for f in Family]})"
        ) from None
    has_mean = "mean" in obj
    has_scale = "scale" in obj
    if has_mean == has_scale:
        raise ValueError(f"{field}: give exactly one of 'mean' or 'scale'")
    shape = obj.get("shape")
    if family in (Family.WEIBULL, Family.PARETO):
        if shape is None:
            raise ValueError(f"{field}.shape: missing (required for {family.value})")
        shape = float(shape)
    else:
        shape = None
    value = float(obj["mean"] if has_mean else obj["scale"])
    try:
        if has_mean:
            return DistributionSpec(family, shape, scale_for_mean(family, shape, value))
        return DistributionSpec(family, shape, value)
    except ValueError as exc:
        raise ValueError(f"{field}: {exc}") from None
