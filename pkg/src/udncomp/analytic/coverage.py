"""Coverage probability from the Gamma-approximated CoMP signal.

Conditioned on the main link (tier k, class c_o, distance r), the tier-j
class-c cooperators form a PPP on ``(theta_j^c, R_j^c]`` with mean count
``Lambda_j^c``, and the interferers a PPP beyond ``R_j^c``. The coverage is
averaged over Poisson cooperator counts (truncated sums) and, for each count
configuration, over cooperator distances by Monte Carlo integration with the
conditional link-distance law as the sampling measure. For a sampled
configuration the signal is Gamma(zeta, beta) and, for integer shape k,

    P(S >= g I) = sum_{m<k} b_m(g / beta).

Evaluating at ``k = floor(zeta)`` and ``k = ceil(zeta)`` gives a lower and an
upper value (coverage grows with the shape at fixed scale).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..config import CLASSES, NetworkModel
from ..errors import ParameterError, TruncationError
from ..geometry import expected_count_within
from ..numerics import DEFAULT_BUDGET, TruncationBudget, quantile_level_nodes, poisson_truncation
from .gamma_approx import SHAPE_SNAP, gamma_shape_scale_batch, link_weights
from .laplace import CoverageTable
from .mainlink import _eta_matrix, association_law, cooperation_bounds

MAX_SAMPLES = 1 << 17


@dataclass(frozen=True)
class CompConfigCounts:
    """Cooperator counts and boundaries for one main link."""
    main_tier: int
    main_class: int
    r: float
    lower: np.ndarray      # (K, 2) theta_j^c
    upper: np.ndarray      # (K, 2) R_j^c
    means: np.ndarray      # (K, 2) Lambda_j^c
    counts: np.ndarray     # (K, 2) n_j^c


def main_link_conditioning(r, k, c_o, model: NetworkModel, eta) -> CompConfigCounts:
    eta = _eta_matrix(model, eta)
    lo, hi = cooperation_bounds(float(r), k, c_o, model, eta)
    lam = np.zeros((model.K, 2))
    for j in range(model.K):
        for c in CLASSES:
            lam[j, c] = max(expected_count_within(hi[j, c], j, c, model)
                            - expected_count_within(lo[j, c], j, c, model), 0.0)
    return CompConfigCounts(k, c_o, float(r), lo, hi, lam, np.zeros((model.K, 2), dtype=int))


def enumerate_configurations(means, budget: TruncationBudget = DEFAULT_BUDGET):
    """Count configurations of independent Poisson sums with their probabilities.

    The tail budget is split evenly across the sums with a positive mean.
    Returns ``(configs, weights, kept_mass)`` with configs shaped like ``means``.
    """
    means = np.asarray(means, dtype=float)
    flat = means.ravel()
    active = flat > 0
    n_active = max(int(active.sum()), 1)
    per_sum = TruncationBudget(budget.tail_mass / n_active, budget.max_terms_per_sum)
    ranges = []
    for mu in flat:
        if mu > 0:
            ranges.append(range(poisson_truncation(mu, per_sum) + 1))
        else:
            ranges.append(range(1))
    configs = np.array(list(itertools.product(*ranges)), dtype=int)
    logw = np.zeros(len(configs))
    for i, mu in enumerate(flat):
        if mu > 0:
            logw += stats.poisson.logpmf(configs[:, i], mu)
    w = np.exp(logw)
    return configs.reshape((-1,) + means.shape), w, float(w.sum())


class _DistanceSampler:
    """Inverse-cdf sampler of link distances with density ``~ z p_c(z)`` on ``[lo, hi]``."""

    def __init__(self, j, c, lo, hi, model, n_grid=2049):
        h = model.height_diffs[j]
        lo = max(lo, h)
        hi = max(hi, lo)
        y_lo = math.sqrt(max(lo * lo - h * h, 0.0))
        y_hi = math.sqrt(max(hi * hi - h * h, 0.0))
        # grid uniform in horizontal distance squared keeps the cdf near linear
        y = np.sqrt(np.linspace(y_lo ** 2, y_hi ** 2, n_grid))
        z = np.sqrt(y * y + h * h)
        G = expected_count_within(z, j, c, model)
        G = np.maximum.accumulate(G)
        self.z, self.G = z, G
        self.degenerate = G[-1] <= G[0]

    def sample(self, u):
        if self.degenerate:
            return np.full_like(u, self.z[0])
        g = self.G[0] + u * (self.G[-1] - self.G[0])
        return np.interp(g, self.G, self.z)


@dataclass
class ConditionalCoverage:
    lower: np.ndarray
    upper: np.ndarray
    se_lower: np.ndarray
    se_upper: np.ndarray
    kept_mass: float
    widened: bool = False


def _config_links(cfg_counts, samplers, n, rng, main_power, r, c_o, model):
    """Per-sample link arrays (powers, distances, classes, group index)."""
    pw, dist, cls, grp = [np.full(n, main_power)], [np.full(n, r)], [np.full(n, c_o)], [
        np.arange(n)]
    for (j, c), cnt in np.ndenumerate(cfg_counts):
        if cnt == 0:
            continue
        z = samplers[j, c].sample(rng.random((n, cnt))).ravel()
        pw.append(np.full(z.size, model.powers[j]))
        dist.append(z)
        cls.append(np.full(z.size, c))
        grp.append(np.repeat(np.arange(n), cnt))
    return (np.concatenate(pw), np.concatenate(dist), np.concatenate(cls),
            np.concatenate(grp))


def _adaptive_config_mean(evaluate, weight, base_samples, rng, deterministic, tol):
    """Monte Carlo mean of ``evaluate(n, rng) -> (lo, hi)`` arrays with sample doubling.

    Doubles until ``se <= tol / sqrt(weight)`` so the weighted errors of all
    configurations add up to about ``tol``.
    """
    if deterministic:
        lo, hi = evaluate(1, rng)
        z = np.zeros(lo.shape[1])
        return lo[0], hi[0], z, z, False
    n = max(64, int(base_samples * weight))
    lo, hi = evaluate(n, rng)
    target = tol / math.sqrt(max(weight, 1e-300))
    while True:
        m = lo.shape[0]
        se_lo = lo.std(axis=0, ddof=1) / math.sqrt(m)
        se_hi = hi.std(axis=0, ddof=1) / math.sqrt(m)
        if max(se_lo.max(), se_hi.max()) <= target:
            return lo.mean(axis=0), hi.mean(axis=0), se_lo, se_hi, False
        if m >= MAX_SAMPLES:
            return lo.mean(axis=0), hi.mean(axis=0), se_lo, se_hi, True
        lo2, hi2 = evaluate(m, rng)
        lo, hi = np.vstack([lo, lo2]), np.vstack([hi, hi2])


def conditional_coverage(r, k, c_o, thresholds, model: NetworkModel, eta,
                         budget: TruncationBudget = DEFAULT_BUDGET,
                         inner_mc_samples: int = 4096, rng=None, tol: float = 1e-3,
                         table: CoverageTable | None = None) -> ConditionalCoverage:
    """Coverage bracket for a main link of tier k, class c_o at link distance r.

    ``thresholds`` is an array of SIR thresholds (linear); all share the
    same sampled configurations.
    """
    if r < model.height_diffs[k] * (1 - 1e-12):
        raise ParameterError("main-link distance below the height offset")
    rng = rng if rng is not None else np.random.default_rng(0)
    g = np.atleast_1d(np.asarray(thresholds, dtype=float))
    cond = main_link_conditioning(r, k, c_o, model, eta)
    table = table or CoverageTable(cond.upper, model)
    samplers = np.empty((model.K, 2), dtype=object)
    for j in range(model.K):
        for c in CLASSES:
            samplers[j, c] = _DistanceSampler(j, c, cond.lower[j, c], cond.upper[j, c], model)
    configs, weights, kept = enumerate_configurations(cond.means, budget)
    if kept < 1.0 - budget.tail_mass * 1.0001:
        raise TruncationError("configuration enumeration lost too much mass", kept)
    ch = model.channel
    main_power = model.powers[k]
    lo_tot = np.zeros(g.size)
    hi_tot = np.zeros(g.size)
    var_lo = np.zeros(g.size)
    var_hi = np.zeros(g.size)
    widened = False
    for cfg, w in zip(configs, weights):
        def evaluate(n, rng, cfg=cfg):
            pw, dist, cls, grp = _config_links(cfg, samplers, n, rng, main_power, r, c_o, model)
            a = link_weights(pw, dist, cls, ch)
            shape, scale = gamma_shape_scale_batch(a, cls, grp, n, ch)
            k_lo = np.floor(shape + SHAPE_SNAP).astype(int)
            k_hi = np.ceil(shape - SHAPE_SNAP).astype(int)
            f_lo = np.ones((n, g.size))
            f_hi = np.ones((n, g.size))
            pos = g > 0                     # a zero threshold is always met
            if pos.any():
                s = g[None, pos] / scale[:, None]
                f_lo[:, pos] = table(s, np.broadcast_to(k_lo[:, None], s.shape))
                f_hi[:, pos] = table(s, np.broadcast_to(k_hi[:, None], s.shape))
            return f_lo, f_hi
        m_lo, m_hi, se_lo, se_hi, wid = _adaptive_config_mean(
            evaluate, w, inner_mc_samples, rng, cfg.sum() == 0, tol)
        widened |= wid
        lo_tot += w * m_lo
        hi_tot += w * m_hi
        var_lo += (w * se_lo) ** 2
        var_hi += (w * se_hi) ** 2
    # truncated configurations bound the sums on both sides
    return ConditionalCoverage(lo_tot, hi_tot + (1.0 - kept), np.sqrt(var_lo), np.sqrt(var_hi),
                               kept, widened)


@dataclass
class CoverageBracket:
    """Floor/ceil-shape coverage ends; ``upper`` also counts the truncated mass as covered."""
    thresholds: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    se_lower: np.ndarray
    se_upper: np.ndarray
    widened: bool = False
    truncated: float = 0.0

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def estimate(self):
        """Midpoint of the two shape ends, leaving out the truncated configurations."""
        return np.clip(0.5 * (self.lower + self.upper - self.truncated), 0.0, 1.0)


def _outer(laws, cond_fn, n_outer, n_thr):
    v, wv = quantile_level_nodes(n_outer)
    lo = np.zeros(n_thr)
    hi = np.zeros(n_thr)
    vl = np.zeros(n_thr)
    vh = np.zeros(n_thr)
    trunc = 0.0
    widened = False
    for law in laws:
        if law.assoc_prob == 0:
            continue
        radii = law.quantile(v)
        for i, (r, w) in enumerate(zip(radii, wv)):
            cc = cond_fn(law, i, float(r))
            f = law.assoc_prob * w
            lo += f * cc.lower
            hi += f * cc.upper
            vl += (f * cc.se_lower) ** 2
            vh += (f * cc.se_upper) ** 2
            trunc += f * (1.0 - cc.kept_mass)
            widened |= cc.widened
        dropped = law.assoc_prob * (1.0 - wv.sum())    # far outer nodes, counted as truncated
        hi += dropped
        trunc += dropped
    return lo, hi, np.sqrt(vl), np.sqrt(vh), widened, trunc


def coverage_analytic(model: NetworkModel, eta, thresholds,
                      budget: TruncationBudget = DEFAULT_BUDGET, n_outer: int = 24,
                      inner_mc_samples: int = 4096, seed: int = 0,
                      tol: float = 1e-3) -> CoverageBracket:
    """Coverage bracket averaged over the main-link law (RRLP CoMP)."""
    g = np.atleast_1d(np.asarray(thresholds, dtype=float))
    laws = association_law(model)

    def cond_fn(law, i, r):
        rng = np.random.default_rng([seed, law.tier, law.link_class, i])
        return conditional_coverage(r, law.tier, law.link_class, g, model, eta, budget,
                                    inner_mc_samples, rng, tol)

    lo, hi, sl, sh, wid, trunc = _outer(laws, cond_fn, n_outer, g.size)
    return CoverageBracket(g, np.clip(lo, 0, 1), np.clip(hi, 0, 1), sl, sh, wid, trunc)
