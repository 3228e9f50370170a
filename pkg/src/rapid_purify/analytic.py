"""Reference curves for a measured qubit started completely mixed.

Without feedback the state stays on the z axis with a_z(t) = tanh(sqrt(8k) W(t)),
where W(t) is distributed as an equal mixture of N(+sqrt(8k) t, t) and
N(-sqrt(8k) t, t). The ensemble-mean impurity is therefore

    p(t) = exp(-4kt) / sqrt(8 pi t) * integral exp(-x^2 / 2t) sech(sqrt(8k) x) dx,

which has no closed form. With unbounded feedback the mean impurity decays as
0.5 exp(-8kt).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

QUAD_EPSABS = 1e-12
QUAD_TOLERANCE = 1e-10
# integrand cutoff, relative to its peak value of 1
TRUNCATION = 1e-16


class QuadratureError(ArithmeticError):
    pass


class RootBracketError(ArithmeticError):
    pass


class AsymptoticFitError(ArithmeticError):
    pass


@dataclass(frozen=True)
class WienerSample:
    w: np.ndarray | float
    t: float

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError("t must be positive")


@dataclass(frozen=True)
class AsymptoticFit:
    c_const: float
    k: float
    residual: float = 0.0

    def __post_init__(self):
        if not self.c_const > 0:
            raise ValueError("asymptotic constant must be positive")


def _check_t(t):
    if not t > 0:
        raise ValueError(f"t must be positive, got {t!r}")


def _sech(x):
    e = np.exp(-np.abs(x))
    return 2.0 * e / (1.0 + e * e)


def _log_cosh(x):
    x = np.abs(x)
    return x + np.log1p(np.exp(-2.0 * x)) - math.log(2.0)


def density_w(w, t: float, k: float):
    """Density of W(t) as the equal-weight mixture of N(-sqrt(8k) t, t) and N(+sqrt(8k) t, t)."""
    _check_t(t)
    w = np.asarray(w, dtype=float)
    m = math.sqrt(8.0 * k) * t
    norm = 0.5 / math.sqrt(2.0 * math.pi * t)
    return norm * (np.exp(-((w + m) ** 2) / (2 * t)) + np.exp(-((w - m) ** 2) / (2 * t)))


def density_w_cosh(w, t: float, k: float):
    """Same density written as exp(-4kt) cosh(sqrt(8k) w) exp(-w^2/2t) / sqrt(2 pi t)."""
    _check_t(t)
    w = np.asarray(w, dtype=float)
    log_p = -4.0 * k * t + _log_cosh(math.sqrt(8.0 * k) * w) - w * w / (2 * t)
    return np.exp(log_p) / math.sqrt(2.0 * math.pi * t)


def sample_w(rng: np.random.Generator, t: float, k: float, size=None) -> WienerSample:
    """Exact draw of W(t): fair coin for the branch, then a Gaussian of variance t."""
    _check_t(t)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    w = sign * math.sqrt(8.0 * k) * t + math.sqrt(t) * rng.standard_normal(size)
    if size is None:
        w = float(w)
    return WienerSample(w, t)


def _sech_gauss_mean(t: float, k: float) -> float:
    """E[sech(sqrt(8k) X)] for X ~ N(0, t), by adaptive quadrature in x/sqrt(t)."""
    b = math.sqrt(8.0 * k * t)
    # beyond u_max the integrand is below TRUNCATION of its peak
    cut = -math.log(TRUNCATION)
    u_max = min(math.sqrt(2.0 * cut), (cut + math.log(2.0)) / b if b > 0 else math.inf)
    f = lambda u: math.exp(-0.5 * u * u) * _sech(b * u)
    # the sech factor has width ~1/b; hand the knot to quad so it resolves it
    knot = min(u_max, 1.0 / b) if b > 0 else None
    pts = [knot] if knot is not None and 0 < knot < u_max else None
    val, err = integrate.quad(f, 0.0, u_max, epsabs=QUAD_EPSABS, epsrel=1e-13, limit=200, points=pts)
    if not err <= QUAD_TOLERANCE:
        raise QuadratureError(f"quadrature reached only {err:.3g} absolute error at t={t!r}")
    return 2.0 * val / math.sqrt(2.0 * math.pi)


def raw_impurity(t: float, k: float) -> float:
    """Mean impurity without feedback, from a completely mixed start."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.5
    return 0.5 * math.exp(-4.0 * k * t) * _sech_gauss_mean(t, k)


def optimal_impurity(t: float, k: float) -> float:
    if t < 0:
        raise ValueError("t must be nonnegative")
    return 0.5 * math.exp(-8.0 * k * t)


def optimal_time(target: float, k: float) -> float:
    _check_target(target)
    return math.log(1.0 / (2.0 * target)) / (8.0 * k)


def _check_target(target):
    if not 0 < target < 0.5:
        raise ValueError(f"target impurity must lie in (0, 0.5), got {target!r}")


def gauss_sech_integral(t: float, k: float) -> float:
    """integral exp(-x^2/2t) sech(sqrt(8k) x) dx; tends to pi/sqrt(8k) as t grows."""
    _check_t(t)
    return math.sqrt(2.0 * math.pi * t) * _sech_gauss_mean(t, k)


def fit_asymptotic_c(k: float, kt_range=(5.0, 10.0), n_points: int = 21, degree: int = 4) -> AsymptoticFit:
    """Constant C in p(t) ~ exp(-4kt) / (sqrt(8 pi t) C) at large t.

    p(t) sqrt(8 pi t) exp(4kt) approaches 1/C with corrections in powers of
    1/t, so the samples over ``kt_range`` are fitted by a polynomial in 1/(kt)
    and C is read off the intercept.
    """
    if not k > 0:
        raise ValueError("k must be positive")
    kt = np.linspace(*kt_range, n_points)
    g = np.array([gauss_sech_integral(x / k, k) for x in kt])
    # scale out the known sqrt(k) dependence so the fit is well conditioned
    y = g * math.sqrt(k)
    coef = np.polynomial.polynomial.polyfit(1.0 / kt, y, degree)
    resid = y - np.polynomial.polynomial.polyval(1.0 / kt, coef)
    rms = float(np.sqrt(np.mean(resid**2)))
    if rms > 1e-9:
        raise AsymptoticFitError(f"asymptotic fit residual {rms:.3g} too large")
    return AsymptoticFit(math.sqrt(k) / coef[0], k, rms)


def classical_time(target: float, k: float) -> float:
    """Time at which the no-feedback mean impurity falls to ``target``."""
    _check_target(target)
    if raw_impurity(0.0, k) - target < 1e-10:
        raise RootBracketError(f"target {target!r} is too close to 0.5 to bracket")
    f = lambda t: raw_impurity(t, k) - target
    hi = 1.0 / k
    while f(hi) > 0:
        hi *= 2.0
        if hi > 1e4 / k:
            raise RootBracketError(f"no crossing found for target {target!r}")
    return optimize.brentq(f, 0.0, hi, xtol=1e-10 / k, rtol=4 * np.finfo(float).eps, maxiter=500)


def speedup_bound(target: float, k: float = 1.0) -> float:
    """Ratio of the no-feedback to the ideal-feedback time to bring the mean impurity to ``target``."""
    return classical_time(target, k) / optimal_time(target, k)
