"""Main-link (strongest-ARLP BS) law and the mean CoMP set size.

Given the main link is a tier-k class-c_o BS at link distance r, a tier-j
class-c BS is stronger iff its link distance is below
``theta_j^c(r) = (P_j / P_k)^{1/alpha_c} r^{alpha_co / alpha_c}``, and it
passes the RRLP test iff it is below ``eta_jk^{-1/alpha_c} theta_j^c(r)``.
Expected counts inside a link distance come from
:func:`udncomp.geometry.expected_count_within` (closed form).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, interpolate

from ..config import CLASSES, LOS, NetworkModel
from ..errors import ConvergenceError, ParameterError
from ..geometry import class_probability, expected_count_within
from ..numerics import DEFAULT_QUAD, QuadSpec, integrate_1d


def tier_class_pairs(model: NetworkModel):
    return [(j, c) for j in range(model.K) for c in CLASSES]


def theta(r, j: int, c: int, k: int, c_o: int, model: NetworkModel):
    """Link distance at which a tier-j class-c BS matches the main ARLP."""
    ch = model.channel
    pw = model.powers
    return (pw[j] / pw[k]) ** (1.0 / ch.alpha(c)) * np.asarray(r, dtype=float) ** (
        ch.alpha(c_o) / ch.alpha(c))


def stronger_mass(r, k: int, c_o: int, model: NetworkModel):
    """Expected number of BSs with ARLP above the main ARLP (void mass)."""
    return sum(expected_count_within(theta(r, j, c, k, c_o, model), j, c, model)
               for j, c in tier_class_pairs(model))


def mainlink_density(r, k: int, c_o: int, model: NetworkModel):
    """Joint density of 'main link is tier k, class c_o, at distance r' (1/m)."""
    r = np.asarray(r, dtype=float)
    h = model.height_diffs[k]
    rr = np.maximum(r, h)
    p = class_probability(rr, k, c_o, model)
    out = 2 * math.pi * model.densities[k] * rr * p * np.exp(-stronger_mass(rr, k, c_o, model))
    out = np.where(r < h, 0.0, out)
    return out.item() if out.ndim == 0 else out


def _upper_radius(k, c_o, model, mass_cap=60.0):
    r = max(model.height_diffs[k] * 2.0, 1.0 / math.sqrt(model.total_density))
    for _ in range(200):
        if stronger_mass(r, k, c_o, model) >= mass_cap:
            return r
        r *= 1.5
    raise ConvergenceError("main-link tail never became negligible")


def _log_integral(f, lo, hi, spec):
    """``int_lo^hi f(r) dr`` computed in ``u = log r``."""
    return integrate_1d(lambda u: f(math.exp(u)) * math.exp(u), math.log(lo), math.log(hi),
                        spec)


@dataclass
class MainLinkLaw:
    tier: int
    link_class: int
    assoc_prob: float
    model: NetworkModel = field(repr=False)
    r_max: float = field(repr=False, default=math.inf)
    _grid: tuple | None = field(repr=False, default=None)

    def pdf(self, r):
        if self.assoc_prob == 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        return mainlink_density(r, self.tier, self.link_class, self.model) / self.assoc_prob

    def _ensure_grid(self, n=4001):
        if self._grid is None:
            h = self.model.height_diffs[self.tier]
            r = np.geomspace(h, self.r_max, n)
            dens = np.asarray(self.pdf(r))
            cdf = integrate.cumulative_trapezoid(dens, r, initial=0.0)
            cdf /= cdf[-1]
            keep = np.concatenate([[True], np.diff(cdf) > 0])
            self._grid = (r[keep], cdf[keep])
        return self._grid

    def cdf(self, r):
        rg, cg = self._ensure_grid()
        return np.interp(r, rg, cg)

    def quantile(self, v):
        """Inverse cdf on a fine log grid with monotone interpolation."""
        rg, cg = self._ensure_grid()
        f = interpolate.PchipInterpolator(cg, np.log(rg))
        return np.exp(f(np.clip(v, 0.0, 1.0)))


def association_law(model: NetworkModel, spec: QuadSpec = DEFAULT_QUAD) -> list[MainLinkLaw]:
    """Main-link laws for every (tier, class) pair, tier-major."""
    laws = []
    for k, c_o in tier_class_pairs(model):
        if _skip(k, c_o, model):
            laws.append(MainLinkLaw(k, c_o, 0.0, model, model.height_diffs[k]))
            continue
        h = model.height_diffs[k]
        r_max = _upper_radius(k, c_o, model)
        # relative accuracy only: rare (tier, class) pairs still normalize their pdf
        A = _log_integral(lambda r: mainlink_density(r, k, c_o, model), h, r_max,
                          replace(spec, abs_tol=1e-300))
        laws.append(MainLinkLaw(k, c_o, A, model, r_max))
    return laws


def cooperation_bounds(r, k: int, c_o: int, model: NetworkModel, eta: np.ndarray):
    """Lower (``theta``) and upper (``eta^{-1/alpha} theta``) cooperation radii.

    Returns two arrays of shape ``(K, 2) + shape(r)`` indexed ``[j, c]``.
    """
    r = np.asarray(r, dtype=float)
    lo = np.empty((model.K, 2) + r.shape)
    hi = np.empty_like(lo)
    for j, c in tier_class_pairs(model):
        t = theta(r, j, c, k, c_o, model)
        lo[j, c] = t
        hi[j, c] = eta[j, k] ** (-1.0 / model.channel.alpha(c)) * t
    return lo, hi


def _eta_matrix(model, eta):
    eta = np.asarray(eta, dtype=float)
    if eta.ndim == 0:
        eta = np.full((model.K, model.K), float(eta))
    if eta.shape != (model.K, model.K) or np.any(eta <= 0) or np.any(eta > 1):
        raise ParameterError("eta must be a scalar or KxK matrix with entries in (0, 1]")
    return eta


def _skip(k, c_o, model):
    return model.densities[k] == 0 or (
        c_o == LOS and math.isinf(model.blockage.building_density))


def mean_tier_counts_analytic(model: NetworkModel, eta, spec: QuadSpec = DEFAULT_QUAD):
    """Per-tier mean number of CoMP-set BSs, the main link counted in its own tier.

    Entry j is ``A_j + sum_{k,c_o} int f_k^{c_o}(r) sum_c [G_j^c(R_j^c) - G_j^c(theta_j^c)] dr``
    with ``A_j`` the tier association probability.
    """
    eta = _eta_matrix(model, eta)
    out = np.zeros(model.K)
    for law in association_law(model, spec):
        k, c_o = law.tier, law.link_class
        if _skip(k, c_o, model):
            continue
        out[k] += law.assoc_prob
        h = model.height_diffs[k]
        for j in range(model.K):
            def f(r, j=j):
                lo, hi = cooperation_bounds(r, k, c_o, model, eta)
                inner = sum(expected_count_within(hi[j, c], j, c, model)
                            - expected_count_within(lo[j, c], j, c, model) for c in CLASSES)
                return mainlink_density(r, k, c_o, model) * inner
            out[j] += _log_integral(f, h, law.r_max, spec)
    return out


def mean_comp_size_analytic(model: NetworkModel, eta, spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Average CoMP set size, main link included.

    Integrates, against each main-link density, the expected BS count with
    link distance inside the RRLP boundary ``R_j^c`` (counted from the height
    offset). The BSs below ``theta`` are absent under the conditioning, and
    their would-be mass averages to exactly one, which is the main link.
    """
    eta = _eta_matrix(model, eta)
    total = 0.0
    for k, c_o in tier_class_pairs(model):
        if _skip(k, c_o, model):
            continue
        h = model.height_diffs[k]
        r_max = _upper_radius(k, c_o, model)

        def f(r):
            _, hi = cooperation_bounds(r, k, c_o, model, eta)
            inner = sum(expected_count_within(hi[j, c], j, c, model)
                        for j, c in tier_class_pairs(model))
            return mainlink_density(r, k, c_o, model) * inner
        total += _log_integral(f, h, r_max, spec)
    return float(total)
