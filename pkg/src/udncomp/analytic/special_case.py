"""Coverage for all-NLoS links with Rayleigh fading and a common exponent.

With unit-mean exponential fading and random-phase combining the CoMP
signal power is exponential with mean ``beta = sum_i P_i x_i^-alpha``, so the
conditional coverage is the interference Laplace transform at
``threshold / beta``. Interferers of tier j lie beyond ``R_j``, giving

    L_I(s) = exp(-sum_j 2 pi lambda_j s P_j z0^{2-alpha} / (alpha - 2)
                  * 2F1(1, 1 - 2/alpha; 2 - 2/alpha; -s P_j z0^-alpha)),
    z0 = max(R_j, h_j).

Cooperators of tier j are uniform in squared link distance on
``[max(nu_j r, h_j)^2, R_j^2]`` with ``nu_j = (P_j/P_k)^{1/alpha}`` and
``R_j = eta_jk^{-1/alpha} nu_j r``.
"""
from __future__ import annotations

import math

import numpy as np

from ..config import LOS, NLOS, NetworkModel
from ..errors import ParameterError
from ..numerics import DEFAULT_BUDGET, TruncationBudget, quantile_level_nodes, hyp2f1
from .coverage import (ConditionalCoverage, CoverageBracket, _adaptive_config_mean,
                       enumerate_configurations)
from .mainlink import _eta_matrix, association_law


def _check_model(model: NetworkModel):
    ch = model.channel
    if not math.isinf(model.blockage.building_density):
        raise ParameterError("special case needs all-NLoS links (infinite building density)")
    if ch.m_nlos != 1:
        raise ParameterError("special case needs Rayleigh fading (m_nlos = 1)")
    if not ch.alpha_nlos > 2:
        raise ParameterError("special case needs alpha > 2")


def laplace_closed_form(s, outer, model: NetworkModel):
    """Interference Laplace transform with tier-j interferers beyond link distance ``outer[j]``."""
    alpha = model.channel.alpha_nlos
    s = np.asarray(s, dtype=float)
    expo = np.zeros_like(s)
    for j in range(model.K):
        lam = model.densities[j]
        if lam == 0:
            continue
        z0 = max(float(outer[j]), model.height_diffs[j])
        x = s * model.powers[j] * z0 ** (-alpha)
        expo += 2 * math.pi * lam * x * z0 * z0 / (alpha - 2) * hyp2f1(
            1.0, 1.0 - 2.0 / alpha, 2.0 - 2.0 / alpha, -x)
    return np.exp(-expo)


def special_case_bounds(r, k, model: NetworkModel, eta):
    """Per-tier inner radius, outer radius and mean cooperator count."""
    alpha = model.channel.alpha_nlos
    nu = (model.powers / model.powers[k]) ** (1.0 / alpha)
    inner = np.maximum(nu * r, model.height_diffs)
    outer = eta[:, k] ** (-1.0 / alpha) * nu * r
    means = math.pi * model.densities * np.maximum(outer ** 2 - inner ** 2, 0.0)
    return inner, outer, means


def conditional_coverage_special(r, k, thresholds, model: NetworkModel, eta,
                                 budget: TruncationBudget = DEFAULT_BUDGET,
                                 inner_mc_samples: int = 4096, rng=None,
                                 tol: float = 1e-3) -> ConditionalCoverage:
    _check_model(model)
    eta = _eta_matrix(model, eta)
    rng = rng if rng is not None else np.random.default_rng(0)
    g = np.atleast_1d(np.asarray(thresholds, dtype=float))
    alpha = model.channel.alpha_nlos
    inner, outer, means = special_case_bounds(r, k, model, eta)
    configs, weights, kept = enumerate_configurations(means, budget)
    main = model.powers[k] * r ** (-alpha)
    tot = np.zeros(g.size)
    var = np.zeros(g.size)
    widened = False
    for cfg, w in zip(configs, weights):
        def evaluate(n, rng, cfg=cfg):
            beta = np.full(n, main)
            for j, cnt in enumerate(cfg):
                if cnt:
                    x2 = inner[j] ** 2 + rng.random((n, cnt)) * (outer[j] ** 2 - inner[j] ** 2)
                    beta += model.powers[j] * (x2 ** (-alpha / 2)).sum(axis=1)
            val = laplace_closed_form(g[None, :] / beta[:, None], outer, model)
            return val, val
        m, _, se, _, wid = _adaptive_config_mean(evaluate, w, inner_mc_samples, rng,
                                                 cfg.sum() == 0, tol)
        widened |= wid
        tot += w * m
        var += (w * se) ** 2
    se = np.sqrt(var)
    return ConditionalCoverage(tot, tot + (1.0 - kept), se, se, kept, widened)


def _single_tier_quantile(model):
    lam = model.densities[0]
    h = model.height_diffs[0]
    return lambda v: np.sqrt(h * h - np.log1p(-np.asarray(v)) / (math.pi * lam))


def coverage_special_case(model: NetworkModel, eta, thresholds,
                          budget: TruncationBudget = DEFAULT_BUDGET, n_outer: int = 32,
                          inner_mc_samples: int = 4096, seed: int = 0,
                          tol: float = 1e-3) -> CoverageBracket:
    """All-NLoS Rayleigh coverage.

    The bracket only reflects truncated mass (Poisson configurations and the
    far outer quadrature nodes): ``lower`` drops it and ``upper`` counts it
    as covered.
    """
    _check_model(model)
    g = np.atleast_1d(np.asarray(thresholds, dtype=float))
    v, wv = quantile_level_nodes(n_outer)
    if model.K == 1:
        parts = [(0, 1.0, _single_tier_quantile(model))]
    else:
        parts = [(law.tier, law.assoc_prob, law.quantile)
                 for law in association_law(model) if law.link_class == NLOS
                 and law.assoc_prob > 0]
    lo = np.zeros(g.size)
    hi = np.zeros(g.size)
    var = np.zeros(g.size)
    trunc = 0.0
    widened = False
    for k, A, quantile in parts:
        for i, (r, w) in enumerate(zip(quantile(v), wv)):
            rng = np.random.default_rng([seed, k, LOS, i])
            cc = conditional_coverage_special(float(r), k, g, model, eta, budget,
                                              inner_mc_samples, rng, tol)
            lo += A * w * cc.lower
            hi += A * w * cc.upper
            var += (A * w * cc.se_lower) ** 2
            trunc += A * w * (1.0 - cc.kept_mass)
            widened |= cc.widened
    dropped = sum(A for _, A, _ in parts) * (1.0 - wv.sum())
    hi += dropped
    trunc += dropped
    se = np.sqrt(var)
    return CoverageBracket(g, np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0), se, se, widened,
                           trunc)
