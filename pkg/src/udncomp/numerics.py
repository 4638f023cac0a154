"""Special functions and generic numerical kernels.

Everything here is a pure function of its arguments. Tolerances live in
:class:`QuadSpec` and :class:`TruncationBudget` so callers can tighten or
relax a whole pipeline in one place.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
from scipy import integrate, optimize, special

from .errors import (BracketError, ConvergenceError, NumericError,
                     ParameterError, TruncationError)

__all__ = [
    "QuadSpec", "TruncationBudget", "erf", "gamma_fn",
    "lower_incomplete_gamma", "regularized_upper_gamma", "hyp2f1",
    "integrate_1d", "find_root_monotone", "poisson_truncation",
    "gauss_legendre_unit",
    "OUTER_DROP_MASS", "quantile_level_nodes",
]


@dataclass(frozen=True)
class QuadSpec:
    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    max_subdivisions: int = 200
    infinite_tail_cutoff_policy: Literal["transform", "truncate_at_negligible"] = "transform"

    def __post_init__(self):
        if not self.abs_tol > 0 or not self.rel_tol > 0:
            raise ParameterError("QuadSpec tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ParameterError("max_subdivisions must be >= 1")
        if self.infinite_tail_cutoff_policy not in ("transform", "truncate_at_negligible"):
            raise ParameterError(f"unknown cutoff policy {self.infinite_tail_cutoff_policy!r}")


@dataclass(frozen=True)
class TruncationBudget:
    tail_mass: float = 1e-4
    max_terms_per_sum: int = 200

    def __post_init__(self):
        if not 0.0 < self.tail_mass < 1.0:
            raise ParameterError("tail_mass must lie in (0, 1)")
        if self.max_terms_per_sum < 1:
            raise ParameterError("max_terms_per_sum must be >= 1")


DEFAULT_QUAD = QuadSpec()
DEFAULT_BUDGET = TruncationBudget()


# -- special functions -----------------------------------------------------

def erf(x):
    """Error function, ``(1/sqrt(pi)) * int_{-x}^{x} exp(-t^2) dt``."""
    return special.erf(x)


def gamma_fn(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ParameterError("gamma_fn is defined here for x > 0 only")
    out = special.gamma(x)
    return out.item() if out.ndim == 0 else out


def lower_incomplete_gamma(a, x):
    """Unregularized lower incomplete gamma ``int_0^x t^(a-1) e^-t dt``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0) or np.any(x < 0):
        raise ParameterError("lower_incomplete_gamma needs a > 0 and x >= 0")
    out = special.gammainc(a, x) * special.gamma(a)
    return out.item() if out.ndim == 0 else out


def regularized_upper_gamma(a, x):
    """``Gamma(a, x) / Gamma(a)``."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(a <= 0) or np.any(x < 0):
        raise ParameterError("regularized_upper_gamma needs a > 0 and x >= 0")
    out = special.gammaincc(a, x)
    return out.item() if out.ndim == 0 else out


def _is_nonpos_int(v: float) -> bool:
    return v <= 0 and float(v).is_integer()


def _series_2f1(a, b, c, w, tol=1e-15, max_terms=200_000):
    """Plain power series of 2F1 for 0 <= w < 1, vectorized over w."""
    w = np.asarray(w, dtype=float)
    total = np.ones_like(w)
    term = np.ones_like(w)
    active = np.ones(w.shape, dtype=bool)
    n = 0
    while active.any():
        if n >= max_terms:
            raise NumericError(f"2F1 series did not converge in {max_terms} terms")
        term = term * ((a + n) * (b + n) / ((c + n) * (n + 1.0))) * w
        total = total + np.where(active, term, 0.0)
        n += 1
        # tail of a series whose term ratio tends to w
        tail = np.abs(term) * w / np.maximum(1.0 - w, 1e-300)
        active = tail > tol * np.abs(total)
        if n < 4:
            active |= w > 0
    return total


def hyp2f1(a: float, b: float, c: float, z):
    """Gauss hypergeometric function on the half-line ``z <= 0``.

    For ``-1 <= z <= 0`` the Pfaff transformation maps the argument into
    ``[0, 1/2]``. For ``z < -1`` the ``1/z`` connection formula is applied
    first and each resulting series is Pfaff-mapped again, so every series
    argument stays in ``[0, 1/2]``.
    """
    if _is_nonpos_int(c):
        raise ParameterError("c must not be a non-positive integer")
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr > 0) or not np.all(np.isfinite(z_arr)):
        raise ParameterError("hyp2f1 is implemented for finite z <= 0 only")
    out = np.empty_like(z_arr)
    near = z_arr >= -1.0
    if near.any():
        zn = z_arr[near]
        out[near] = (1.0 - zn) ** (-a) * _series_2f1(a, c - b, c, zn / (zn - 1.0))
    far = ~near
    if far.any():
        zf = z_arr[far]
        if _is_nonpos_int(b - a) or _is_nonpos_int(a - b) or any(
                _is_nonpos_int(v) for v in (a, b, c - a, c - b)):
            # connection coefficients are singular; fall back to the slow Pfaff series
            out[far] = (1.0 - zf) ** (-a) * _series_2f1(a, c - b, c, zf / (zf - 1.0))
        else:
            out[far] = _hyp2f1_far(a, b, c, zf)
    return out.item() if out.ndim == 0 else out


def _hyp2f1_far(a, b, c, z):
    # DLMF 15.8.2, then Pfaff on the 1/z series: argument 1/(1 - z) in (0, 1/2)
    u = 1.0 / z
    lg = special.gammaln
    sg = special.gammasgn
    c1 = sg(c) * sg(b - a) / (sg(b) * sg(c - a)) * np.exp(lg(c) + lg(b - a) - lg(b) - lg(c - a))
    c2 = sg(c) * sg(a - b) / (sg(a) * sg(c - b)) * np.exp(lg(c) + lg(a - b) - lg(a) - lg(c - b))
    w = u / (u - 1.0)
    # 2F1(a, a-c+1; a-b+1; u) via Pfaff: (1-u)^-a 2F1(a, (a-b+1)-(a-c+1); a-b+1; w)
    f1 = (1.0 - u) ** (-a) * _series_2f1(a, c - b, a - b + 1.0, w)
    f2 = (1.0 - u) ** (-b) * _series_2f1(b, c - a, b - a + 1.0, w)
    return c1 * (-z) ** (-a) * f1 + c2 * (-z) ** (-b) * f2


# -- quadrature ------------------------------------------------------------

def integrate_1d(f: Callable[[float], float], lo: float, hi: float,
                 spec: QuadSpec = DEFAULT_QUAD, scale: float | None = None,
                 points=None) -> float:
    """Adaptive integral of ``f`` over ``[lo, hi]``; ``hi`` may be ``inf``.

    Infinite ranges use ``t = lo + scale * u / (1 - u)`` on ``u in [0, 1)``
    (policy ``transform``) or a doubling search for a negligible-integrand
    cutoff (policy ``truncate_at_negligible``). ``scale`` should be the
    length scale over which ``f`` decays; it defaults to ``max(1, |lo|)``.

    Raises ConvergenceError (carrying the best estimate and error bound) when
    the subdivision budget runs out before the tolerance is met.
    """
    if scale is None:
        scale = max(1.0, abs(lo))
    if hi < lo:
        raise ParameterError("integrate_1d needs hi >= lo")
    if hi == lo:
        return 0.0
    if math.isinf(hi):
        if spec.infinite_tail_cutoff_policy == "transform":
            def g(u):
                if u >= 1.0:
                    return 0.0
                d = 1.0 - u
                return f(lo + scale * u / d) * scale / (d * d)
            return _quad(g, 0.0, 1.0, spec, None)
        hi = _negligible_cutoff(f, lo, scale, spec)
    return _quad(f, lo, hi, spec, points)


def _negligible_cutoff(f, lo, scale, spec):
    peak = max(abs(f(lo + scale * t)) for t in (0.0, 0.5, 1.0, 2.0))
    step = scale
    for _ in range(200):
        if abs(f(lo + step)) <= 1e-3 * spec.abs_tol * max(peak, 1e-300) / scale:
            return lo + step
        step *= 2.0
    raise ConvergenceError("integrand never became negligible", None, None)


def _quad(f, lo, hi, spec, points):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(f, lo, hi, epsabs=spec.abs_tol, epsrel=spec.rel_tol,
                             limit=spec.max_subdivisions, full_output=1, points=points)
    value, err = res[0], res[1]
    # quad appends a message only when QUADPACK reports ier > 0
    failed = len(res) > 3
    if failed and err > max(spec.abs_tol, spec.rel_tol * abs(value)) * 10:
        raise ConvergenceError(f"quadrature did not converge on [{lo}, {hi}]: "
                               f"estimate {value:g} +- {err:g}", value, err)
    return value


def gauss_legendre_unit(n: int):
    """Gauss-Legendre nodes and weights on the unit interval."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


OUTER_DROP_MASS = 1e-9


def quantile_level_nodes(n: int, drop_mass: float = OUTER_DROP_MASS):
    """Nodes ``v`` in (0, 1) and weights for ``int_0^1 f(v) dv`` when ``f`` varies in ``-log(1-v)``.

    Substitutes ``v = 1 - exp(-t)`` and applies ``n``-point Gauss-Laguerre in
    ``t``. Integrands of a distance quantile ``r(v)`` are smooth in ``t`` but
    not in ``v`` near 1, and constants integrate exactly. Trailing nodes whose
    weights sum to at most ``drop_mass`` are removed, so the returned weights
    sum to ``1 - dropped``; callers account for the dropped mass explicitly.
    """
    if n < 1:
        raise ParameterError("need at least one quantile node")
    t, w = np.polynomial.laguerre.laggauss(n)
    tail = np.cumsum(w[::-1])[::-1]
    keep = max(1, int(np.count_nonzero(tail > drop_mass)))
    return -np.expm1(-t[:keep]), w[:keep]


# -- root finding ----------------------------------------------------------

def find_root_monotone(f: Callable[[float], float], bracket, tol: float = 1e-12) -> float:
    lo, hi = bracket
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo:g}, {fhi:g}")
    return optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)


# -- truncated sums --------------------------------------------------------

def poisson_truncation(mean: float, budget: TruncationBudget = DEFAULT_BUDGET) -> int:
    """Smallest ``n`` with ``P(Poisson(mean) <= n) >= 1 - tail_mass``."""
    if not (mean >= 0 and math.isfinite(mean)):
        raise ParameterError("Poisson mean must be finite and non-negative")
    if mean == 0:
        return 0
    target = 1.0 - budget.tail_mass
    log_pmf = -mean
    cdf = math.exp(log_pmf)
    n = 0
    while cdf < target:
        n += 1
        if n > budget.max_terms_per_sum:
            raise TruncationError(
                f"Poisson({mean:g}) needs more than {budget.max_terms_per_sum} terms",
                achieved_mass=cdf)
        log_pmf += math.log(mean) - math.log(n)
        cdf += math.exp(log_pmf)
    return n
