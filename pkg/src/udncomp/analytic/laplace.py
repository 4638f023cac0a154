"""Laplace transform of the interference and its derivatives.

Interferers of tier j and class c form a PPP at link distances beyond
``z0 = max(lower[j, c], h_j)``. With ``X = P_j g z^{-alpha_c}`` and
``L(s) = E[exp(-s I)] = exp(-A(s))``,

    A(s)  = sum 2 pi lambda_j int (1 - E[exp(-s X)]) z p_c(z) dz
    e_n(s) = sum 2 pi lambda_j int E[(sX)^n / n! exp(-s X)] z p_c(z) dz,  n >= 1

and the scaled derivatives ``b_m = (-s)^m L^{(m)}(s) / m!`` obey
``b_0 = exp(-A)``, ``b_m = (1/m) sum_{n=1}^{m} n e_n b_{m-n}``. Every term is
non-negative, so ``(-1)^m L^{(m)} >= 0`` holds by construction, and
``sum_{m<k} b_m`` is the coverage of a Gamma(k, 1/s) signal.

For Gamma(M, 1/M) fading ``E[(tg)^n / n! e^{-tg}]`` is the negative-binomial
pmf ``phi_n(t) = C(M+n-1, n) (t/M)^n (1 + t/M)^{-(M+n)}``.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import interpolate, special

from ..config import CLASSES, LOS, NetworkModel
from ..errors import ParameterError
from ..geometry import los_decay

PANELS = 48
NODES_PER_PANEL = 12
LOG_SPAN = math.log(1e5)

_GL = np.polynomial.legendre.leggauss(NODES_PER_PANEL)


def _y_nodes(y0, h):
    """Quadrature nodes/weights in horizontal distance on ``[y0, (y0 + h) e^span - h]``.

    Panels are uniform in ``u = log(y + h)``, which resolves both the
    height-offset scale and the algebraic far tail.
    """
    u0 = math.log(y0 + h)
    edges = np.linspace(u0, u0 + LOG_SPAN, PANELS + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * _GL[0][None, :]).ravel()
    w = (half[:, None] * _GL[1][None, :]).ravel()
    e = np.exp(u)
    return e - h, w * e, math.exp(edges[-1]) - h


def _field_nodes(model: NetworkModel, lower):
    """Per (tier, class): nodes (link distance), weights for ``int . z p_c dz``, and the tail start."""
    a = los_decay(model)
    out = []
    for j in range(model.K):
        lam = model.densities[j]
        if lam == 0:
            continue
        h = model.height_diffs[j]
        for c in CLASSES:
            if c == LOS and math.isinf(a[j]):
                continue
            z0 = max(float(lower[j, c]), h)
            y0 = math.sqrt(max(z0 * z0 - h * h, 0.0))
            y, w, y_end = _y_nodes(y0, h)
            pl = np.exp(-a[j] * y) if not math.isinf(a[j]) else np.zeros_like(y)
            p = pl if c == LOS else 1.0 - pl
            # z dz = y dy
            out.append((j, c, np.sqrt(y * y + h * h), 2 * math.pi * lam * w * y * p,
                        math.sqrt(y_end * y_end + h * h)))
    return out


def cumulant_terms(s, n_max: int, lower, model: NetworkModel) -> np.ndarray:
    """``[A(s), e_1(s), ..., e_{n_max}(s)]`` for each ``s``; shape ``(len(s), n_max + 1)``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(s <= 0):
        raise ParameterError("Laplace argument must be > 0 (use interference_moments at 0)")
    ch = model.channel
    out = np.zeros((s.size, n_max + 1))
    for j, c, z, wz, z_end in _field_nodes(model, lower):
        m = float(ch.m(c))
        alpha = ch.alpha(c)
        pw = model.powers[j]
        t = s[:, None] * pw * z[None, :] ** (-alpha)                   # (S, Q)
        l1 = np.log1p(t / m)
        out[:, 0] += -np.expm1(-m * l1) @ wz                           # 1 - phi_0
        phi = np.exp(-m * l1)
        q = (t / m) / (1.0 + t / m)
        for n in range(1, n_max + 1):
            phi = phi * q * ((m + n - 1.0) / n)
            out[:, n] += phi @ wz
        if c != LOS:
            # far tail, p_N -> 1 and phi_n ~ C(M+n-1, n) (t/M)^n
            lam = model.densities[j]
            n = np.arange(n_max + 1)
            nn = np.maximum(n, 1)
            log_coef = special.gammaln(m + nn) - special.gammaln(m) - special.gammaln(nn + 1)
            expo = nn * alpha - 2.0
            log_tail = (math.log(2 * math.pi * lam) + log_coef + nn * np.log(s[:, None] * pw / m)
                        - expo * math.log(z_end) - np.log(expo))
            with np.errstate(over="ignore"):
                out += np.exp(log_tail)  # inf only where b_0 underflows, zeroed later
    return out


def scaled_derivatives(s, m_max: int, lower, model: NetworkModel) -> np.ndarray:
    """``b_m(s) = (-s)^m L^{(m)}(s) / m!`` for ``m = 0..m_max``; shape ``(len(s), m_max + 1)``."""
    e = cumulant_terms(s, max(m_max, 1), lower, model)
    b = np.zeros((e.shape[0], m_max + 1))
    b[:, 0] = np.exp(-e[:, 0])
    dead = b[:, 0] == 0.0          # exp(-A) underflowed: every low-order term is ~0
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(1, m_max + 1):
            n = np.arange(1, m + 1)
            b[:, m] = (e[:, 1:m + 1] * n * b[:, m - n]).sum(axis=1) / m
    b[dead] = 0.0
    return b


def interference_moments(m_max: int, lower, model: NetworkModel) -> np.ndarray:
    """Raw moments ``E[I^m]``, ``m = 0..m_max`` (so ``L^{(m)}(0) = (-1)^m E[I^m]``).

    Cumulants come from Campbell's theorem; raw moments follow from the
    standard cumulant-to-moment recursion.
    """
    ch = model.channel
    kappa = np.zeros(m_max + 1)
    n = np.arange(1, m_max + 1)
    for j, c, z, wz, z_end in _field_nodes(model, lower):
        m = float(ch.m(c))
        alpha = ch.alpha(c)
        pw = model.powers[j]
        eg = np.exp(special.gammaln(m + n) - special.gammaln(m) - n * math.log(m))
        kappa[1:] += eg * pw ** n * (z[None, :] ** (-alpha * n[:, None]) @ wz)
        if c != LOS:
            expo = n * alpha - 2.0
            if np.any(expo <= 0):
                raise ParameterError("interference moment diverges")
            kappa[1:] += 2 * math.pi * model.densities[j] * eg * pw ** n * z_end ** (-expo) / expo
    mom = np.zeros(m_max + 1)
    mom[0] = 1.0
    for k in range(1, m_max + 1):
        i = np.arange(k)
        mom[k] = np.sum(special.comb(k - 1, i) * kappa[k - i] * mom[i])
    return mom


def interference_laplace_derivs(s, m_max: int, lower, model: NetworkModel) -> np.ndarray:
    """``L_I^{(m)}(s)`` for ``m = 0..m_max``.

    ``lower`` is the ``(K, 2)`` array of link distances beyond which tier-j
    class-c BSs interfere (the RRLP boundaries). ``s = 0`` is allowed and
    returns signed raw moments.
    """
    s = float(s)
    if s < 0:
        raise ParameterError("Laplace argument must be >= 0")
    m = np.arange(m_max + 1)
    if s == 0:
        return (-1.0) ** m * interference_moments(m_max, lower, model)
    b = scaled_derivatives(np.array([s]), m_max, lower, model)[0]
    return b * np.exp(special.gammaln(m + 1)) / (-s) ** m


class CoverageTable:
    """``F_k(s) = sum_{m<k} b_m(s)`` tabulated on a log-s grid and spline-interpolated.

    One table serves every sampled cooperator configuration for a fixed
    main link, since the interference field only depends on the RRLP
    boundaries.
    """

    def __init__(self, lower, model: NetworkModel, points_per_decade: int = 24):
        self.lower = np.array(lower, dtype=float)
        self.model = model
        self.ppd = points_per_decade
        self._range = None
        self._kmax = 0
        self._splines = None

    def _build(self, lo, hi, kmax):
        n = max(16, int(math.ceil((hi - lo) / math.log(10) * self.ppd)) + 1)
        ls = np.linspace(lo, hi, n)
        b = scaled_derivatives(np.exp(ls), max(kmax - 1, 0), self.lower, self.model)
        F = np.cumsum(b, axis=1)            # F[:, k-1] = sum_{m<k} b_m
        self._range = (lo, hi)
        self._kmax = kmax
        self._splines = interpolate.CubicSpline(ls, F, axis=0)

    def __call__(self, s, k):
        """``F_k(s)`` for arrays ``s > 0`` and integer ``k >= 0`` (``F_0 = 0``)."""
        s = np.asarray(s, dtype=float)
        k = np.asarray(k, dtype=int)
        ls = np.log(s)
        kmax = int(k.max(initial=1))
        lo, hi = float(ls.min()), float(ls.max())
        if (self._range is None or lo < self._range[0] or hi > self._range[1]
                or kmax > self._kmax):
            # generous padding so later samples rarely force a rebuild
            pad = 3.0 * math.log(10.0)
            old = self._range or (lo, hi)
            self._build(min(lo, old[0]) - pad, max(hi, old[1]) + pad,
                        2 * max(kmax, self._kmax, 4))
        F = self._splines(ls)                       # (..., kmax_built)
        kk = np.clip(k, 1, self._kmax)
        val = np.take_along_axis(F, (kk - 1)[..., None], axis=-1)[..., 0]
        return np.clip(np.where(k <= 0, 0.0, val), 0.0, 1.0)
