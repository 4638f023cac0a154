"""Pathloss, ARLP, Nakagami-m fading draws and closed-form fading moments.

The fading power ``g`` of a class-c link is Gamma(m_c, 1/m_c) (unit mean);
the amplitude is ``sqrt(g)``.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import special

from .config import LOS, ChannelParams, NetworkModel
from .errors import ParameterError


class LinkGain(NamedTuple):
    arlp: float
    fading_amplitude: float
    fading_power: float


def arlp(tier, x, c, model: NetworkModel):
    """Average received link power ``P_j x^-alpha_c`` in watts (vectorized)."""
    tier = np.asarray(tier)
    x = np.asarray(x, dtype=float)
    c = np.asarray(c)
    h = model.height_diffs[tier]
    if np.any(x < h * (1 - 1e-9)):
        raise ParameterError("link distance below the height offset")
    alpha = np.where(c == LOS, model.channel.alpha_los, model.channel.alpha_nlos)
    out = model.powers[tier] * x ** (-alpha)
    return out.item() if out.ndim == 0 else out


def draw_fading(c, channel: ChannelParams, rng: np.random.Generator, size=None):
    """Fading power draws ``g ~ Gamma(m_c, 1/m_c)`` for class array ``c``."""
    c = np.asarray(c)
    m = np.where(c == LOS, channel.m_los, channel.m_nlos).astype(float)
    if size is not None:
        m = np.broadcast_to(m, size)
    return rng.standard_gamma(m) / m


def draw_link_gain(tier, x, c, model: NetworkModel, rng: np.random.Generator) -> LinkGain:
    g = float(draw_fading(c, model.channel, rng))
    return LinkGain(arlp(tier, x, c, model), math.sqrt(g), g)


def nakagami_amp_moment(c: int, w, channel: ChannelParams):
    """``tau_{c,w} = E[g^{w/2}] = Gamma(m + w/2) / (Gamma(m) m^{w/2})``."""
    w = np.asarray(w, dtype=float)
    if np.any(w < 0):
        raise ParameterError("moment order must be >= 0")
    m = channel.m(c)
    out = np.exp(special.gammaln(m + w / 2.0) - special.gammaln(m) - (w / 2.0) * math.log(m))
    return out.item() if out.ndim == 0 else out


def amplitude_spread(c: int, channel: ChannelParams) -> float:
    """``chi_c = 1 - tau_{c,1}^2``: variance of a unit-mean-power amplitude."""
    return 1.0 - nakagami_amp_moment(c, 1, channel) ** 2


def exp_tilted_moment(c: int, w: int, t, channel: ChannelParams):
    """``E[g^w exp(-t g)] = Gamma(m + w) / (Gamma(m) m^w) (1 + t/m)^-(m + w)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or w < 0:
        raise ParameterError("exp_tilted_moment needs w >= 0 and t >= 0")
    m = channel.m(c)
    log_c = special.gammaln(m + w) - special.gammaln(m) - w * math.log(m)
    out = np.exp(log_c - (m + w) * np.log1p(t / m))
    return out.item() if out.ndim == 0 else out
