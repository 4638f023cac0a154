"""Moment-matched Gamma law for the received CoMP signal power.

Each serving link contributes an amplitude ``A_i = a_i sqrt(g_i)`` with
``a_i = sqrt(P_i) x_i^{-alpha_i/2}``. Under coherent combining the signal
power is ``(sum A_i)^2``; under non-coherent (random-phase) combining it is
``|sum A_i e^{j phi_i}|^2``. The first two power moments are matched by a
Gamma(zeta, beta) law.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..channel import nakagami_amp_moment
from ..config import LOS, NLOS, ChannelParams
from ..errors import DegenerateApproximationError

SHAPE_SNAP = 1e-9
BINOM4 = np.array([[special.comb(n, w) for w in range(5)] for n in range(5)])


@dataclass(frozen=True)
class GammaApprox:
    mu: float       # E[sum of amplitudes]
    omega: float    # Var[sum of amplitudes]
    xi: float       # E[signal power ^ 2]
    omega1: float   # Var[signal power]
    shape: float
    scale: float

    # shapes within 1e-9 of an integer are that integer (rounding in the moments)
    @property
    def k0_floor(self) -> int:
        return int(math.floor(self.shape + SHAPE_SNAP))

    @property
    def k0_ceil(self) -> int:
        return int(math.ceil(self.shape - SHAPE_SNAP))

    @property
    def mean_power(self) -> float:
        return self.mu ** 2 + self.omega


def _amp_moments(c, channel):
    """Rows ``tau_{c,w}``, ``w = 0..4``, for LoS and NLoS."""
    return np.array([[nakagami_amp_moment(cc, w, channel) for w in range(5)] for cc in c])


@functools.lru_cache(maxsize=64)
def _class_moments(channel):
    return _amp_moments((LOS, NLOS), channel)


def link_weights(powers, distances, classes, channel: ChannelParams):
    """Amplitude weights ``sqrt(P) x^{-alpha/2}``."""
    powers = np.asarray(powers, dtype=float)
    distances = np.asarray(distances, dtype=float)
    classes = np.asarray(classes)
    alpha = np.where(classes == LOS, channel.alpha_los, channel.alpha_nlos)
    return np.sqrt(powers) * distances ** (-alpha / 2.0)


def coherent_fourth_moment(a, tau):
    """``E[(sum_i a_i sqrt(g_i))^4]`` by folding one link at a time.

    ``tau[i, w] = E[g_i^{w/2}]``. Adding a link ``A`` to a running sum ``S``
    uses ``E[(S + A)^n] = sum_w C(n, w) E[S^{n-w}] E[A^w]``, which is the
    multinomial expansion evaluated one factor at a time.
    """
    a = np.asarray(a, dtype=float)
    mom = np.zeros(5)
    mom[0] = 1.0
    for ai, ti in zip(a, tau):
        link = ti * ai ** np.arange(5)
        new = np.zeros(5)
        for n in range(5):
            new[n] = np.dot(BINOM4[n, :n + 1], mom[n::-1] * link[:n + 1])
        mom = new
    return mom


def brute_force_fourth_moment(a, tau):
    """``E[(sum A_i)^4]`` by enumerating every ordered 4-tuple of link indices."""
    a = np.asarray(a, dtype=float)
    n = a.size
    total = 0.0
    for idx in itertools.product(range(n), repeat=4):
        counts = np.bincount(idx, minlength=n)
        term = 1.0
        for i, w in enumerate(counts):
            if w:
                term *= a[i] ** w * tau[i][w]
        total += term
    return total


def gamma_approx(powers, distances, classes, channel: ChannelParams,
                 combining: str | None = None) -> GammaApprox:
    """Gamma(shape, scale) matched to the mean and variance of the CoMP signal power.

    ``powers``, ``distances`` and ``classes`` list every serving link, main
    link included. Raises DegenerateApproximationError when the power variance
    is not positive (deterministic signal).
    """
    combining = combining or channel.combining
    classes = np.asarray(classes, dtype=int)
    a = link_weights(powers, distances, classes, channel)
    tau = _amp_moments(classes, channel)
    if combining == "coherent":
        mu = float(np.dot(a, tau[:, 1]))
        omega = float(np.dot(a * a, 1.0 - tau[:, 1] ** 2))
        xi = float(coherent_fourth_moment(a, tau)[4])
    else:
        # random phases: E|S|^2 = sum a^2, E|S|^4 = sum E A^4 + 2 sum_{i != k} a_i^2 a_k^2
        mu = 0.0
        p = a * a
        omega = float(p.sum())
        xi = float(np.dot(p * p, tau[:, 4]) + (p.sum() ** 2 - np.dot(p, p)) * 2.0)
    mean_p = mu * mu + omega
    omega1 = xi - mean_p ** 2
    if not omega1 > 1e-13 * mean_p ** 2:
        raise DegenerateApproximationError(
            f"non-positive signal power variance ({omega1:g}); Gamma matching undefined")
    return GammaApprox(mu, omega, xi, omega1, mean_p ** 2 / omega1, omega1 / mean_p)


def gamma_shape_scale_batch(a, classes, link_group, n_groups, channel: ChannelParams,
                             combining: str | None = None):
    """Vectorized Gamma shape/scale for many configurations at once.

    ``a`` holds amplitude weights of the links of all configurations,
    ``classes`` their link classes and ``link_group`` the configuration index
    of each link. The coherent branch sums per-link amplitude cumulants,
    which is algebraically identical to :func:`coherent_fourth_moment`.
    """
    combining = combining or channel.combining
    a = np.asarray(a, dtype=float)
    tau = _class_moments(channel)[np.asarray(classes, dtype=int)]
    p = a * a
    if combining == "coherent":
        m1, m2, m3, m4 = (tau[:, w] * a ** w for w in range(1, 5))
        k1 = m1
        k2 = m2 - m1 ** 2
        k3 = m3 - 3 * m2 * m1 + 2 * m1 ** 3
        k4 = m4 - 4 * m3 * m1 - 3 * m2 ** 2 + 12 * m2 * m1 ** 2 - 6 * m1 ** 4
        K1, K2, K3, K4 = (np.bincount(link_group, weights=k, minlength=n_groups)
                          for k in (k1, k2, k3, k4))
        mean_p = K2 + K1 ** 2
        xi = K4 + 4 * K3 * K1 + 3 * K2 ** 2 + 6 * K2 * K1 ** 2 + K1 ** 4
    else:
        S1 = np.bincount(link_group, weights=p, minlength=n_groups)
        S2 = np.bincount(link_group, weights=p * p, minlength=n_groups)
        S4 = np.bincount(link_group, weights=p * p * tau[:, 4], minlength=n_groups)
        mean_p = S1
        xi = S4 + 2.0 * (S1 * S1 - S2)
    omega1 = xi - mean_p ** 2
    if np.any(omega1 <= 1e-13 * mean_p ** 2):
        raise DegenerateApproximationError("non-positive signal power variance in batch")
    return mean_p ** 2 / omega1, omega1 / mean_p
