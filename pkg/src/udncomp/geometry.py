"""BS point processes around the typical user and the height-aware LoS model.

The typical user sits at the origin of a disk of radius ``R`` (horizontal
distance). Tier-j BSs are at height ``h_bj``, so a BS at horizontal distance
``y`` has link distance ``x = sqrt(y^2 + h_j^2)`` with ``h_j = h_bj - h_u``.

LoS probability is ``p_L(x) = base_j ** sqrt(eps * Upsilon * (x^2 - h_j^2))``,
i.e. ``exp(-a_j * y)`` with ``a_j = -sqrt(eps * Upsilon) * log(base_j)``.
That exponential form gives the expected number of points inside a link
distance in closed form (:func:`expected_count_within`).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

from .config import CLASS_NAMES, LOS, NLOS, NetworkModel
from .errors import CapacityError, ParameterError
from .numerics import DEFAULT_QUAD, QuadSpec, find_root_monotone, integrate_1d

MAX_EXPECTED_POINTS = 5e7


# -- LoS model -------------------------------------------------------------

def los_base(model: NetworkModel) -> np.ndarray:
    """Per-tier base of the LoS power law (probability of a clear unit step)."""
    bl = model.blockage
    hb = model.bs_heights
    hu = model.user_height
    rho = bl.mean_building_height
    h = model.height_diffs if bl.base_height == "height_difference" else hb
    s2 = math.sqrt(2.0)
    base = 1.0 - math.sqrt(math.pi / 2.0) * (rho / h) * (
        special.erf(hb / (rho * s2)) - special.erf(hu / (rho * s2)))
    if np.any(base <= 0) or np.any(base >= 1):
        raise ParameterError(f"LoS base {base} outside (0, 1); check heights and blockage")
    return base


def los_decay(model: NetworkModel) -> np.ndarray:
    """Per-tier decay rate ``a_j`` (1/m) of ``p_L`` in horizontal distance."""
    bl = model.blockage
    if math.isinf(bl.building_density):
        return np.full(model.K, math.inf)
    return -math.sqrt(bl.built_fraction * bl.building_density) * np.log(los_base(model))


def _horizontal(x, h, tol=1e-9):
    x = np.asarray(x, dtype=float)
    if np.any(x < h * (1.0 - tol)):
        raise ParameterError(f"link distance below the height offset {h:g} m")
    return np.sqrt(np.maximum(x * x - h * h, 0.0))


def _p_los_y(y, a):
    if math.isinf(a):
        return (y == 0).astype(float)
    return np.exp(-a * y)


def los_probability(x, tier: int, model: NetworkModel):
    """``p_L`` of a tier link at link distance ``x >= h_j`` (vectorized)."""
    h = model.height_diffs[tier]
    y = _horizontal(x, h)
    out = _p_los_y(y, los_decay(model)[tier])
    return out.item() if np.ndim(out) == 0 else out


def class_probability(x, tier: int, c: int, model: NetworkModel):
    p = los_probability(x, tier, model)
    return p if c == LOS else 1.0 - p


def expected_count_within(x, tier: int, c: int, model: NetworkModel, density=None):
    """``2 pi lambda_j int_{h_j}^{x} t p_c(t) dt``: mean class-c count within link distance x.

    Zero for ``x <= h_j`` (empty interval). Uses ``t dt = y dy`` and the
    exponential LoS profile, so no quadrature is needed.
    """
    lam = model.densities[tier] if density is None else density
    h = model.height_diffs[tier]
    a = los_decay(model)[tier]
    x = np.asarray(x, dtype=float)
    y = np.sqrt(np.maximum(x * x - h * h, 0.0))
    if math.isinf(a):
        los = np.zeros_like(y)
    else:
        ay = a * y
        # (1 - e^{-ay}(1 + ay)) / a^2, series near 0 to avoid cancellation
        small = ay < 1e-4
        los = np.where(small, y * y * (0.5 - ay / 3.0 + ay * ay / 8.0),
                       -(np.expm1(-ay) + ay * np.exp(-ay)) / (a * a))
    val = los if c == LOS else 0.5 * y * y - los
    out = 2.0 * math.pi * lam * val
    return out.item() if out.ndim == 0 else out


# -- realizations ----------------------------------------------------------

class BsPoint(NamedTuple):
    tier: int
    horizontal_distance: float
    link_distance: float
    link_class: int


@dataclass(frozen=True)
class BsRealization:
    """One window of BSs around the typical user, stored column-wise."""
    tier: np.ndarray
    horizontal_distance: np.ndarray
    link_distance: np.ndarray
    link_class: np.ndarray
    window_radius: float
    seed: int | None = None

    def __len__(self):
        return int(self.tier.size)

    @property
    def points(self) -> list[BsPoint]:
        return [BsPoint(int(j), float(y), float(x), int(c)) for j, y, x, c in
                zip(self.tier, self.horizontal_distance, self.link_distance, self.link_class)]


@dataclass(frozen=True)
class PointBatch:
    """Many independent windows flattened trial-major.

    ``offsets[i]:offsets[i+1]`` indexes the points of trial ``i``; within a
    trial points are grouped by tier in increasing tier order.
    """
    offsets: np.ndarray
    tier: np.ndarray
    horizontal_distance: np.ndarray
    link_distance: np.ndarray
    link_class: np.ndarray

    @property
    def n_trials(self) -> int:
        return self.offsets.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    @property
    def trial_index(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_trials), self.counts)

    def realization(self, i: int, window_radius: float, seed=None) -> BsRealization:
        s = slice(self.offsets[i], self.offsets[i + 1])
        return BsRealization(self.tier[s], self.horizontal_distance[s], self.link_distance[s],
                             self.link_class[s], window_radius, seed)


def hex_spacing(density: float) -> float:
    """Nearest-neighbour spacing of a hexagonal lattice with the given density."""
    return math.sqrt(2.0 / (math.sqrt(3.0) * density))


def _hex_template(density, radius):
    d = hex_spacing(density)
    # cover the disk of radius + one cell diameter for any offset and rotation
    n = int(math.ceil((radius + 2 * d) / (d * math.sqrt(3.0) / 2.0))) + 1
    i, j = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    px = d * (i + 0.5 * j)
    py = d * (math.sqrt(3.0) / 2.0) * j
    keep = np.hypot(px, py) <= radius + 2 * d
    return px[keep].ravel(), py[keep].ravel(), d


def _sample_tier_horizontal(model, tier, radius, n_trials, rng):
    """Per-trial horizontal distances for one tier: (counts, distances)."""
    tp = model.tiers[tier]
    lam = tp.density
    if lam == 0:
        return np.zeros(n_trials, dtype=np.int64), np.empty(0)
    if tp.deployment == "ppp":
        counts = rng.poisson(lam * math.pi * radius * radius, size=n_trials)
        y = radius * np.sqrt(rng.random(int(counts.sum())))
        return counts, y
    px, py, d = _hex_template(lam, radius)
    counts = np.empty(n_trials, dtype=np.int64)
    chunks = []
    for t in range(n_trials):
        u, v = rng.random(2)
        # uniform offset over one fundamental cell; rotation is irrelevant for distances
        ox = d * (u + 0.5 * v)
        oy = d * (math.sqrt(3.0) / 2.0) * v
        r = np.hypot(px + ox, py + oy)
        r = r[r <= radius]
        counts[t] = r.size
        chunks.append(r)
    return counts, np.concatenate(chunks) if chunks else np.empty(0)


def sample_batch(model: NetworkModel, window_radius: float, n_trials: int,
                 rng: np.random.Generator,
                 max_expected_points: float = MAX_EXPECTED_POINTS) -> PointBatch:
    """Draw ``n_trials`` independent windows from one generator."""
    if not window_radius > 0:
        raise ParameterError("window_radius must be > 0")
    expected = model.total_density * math.pi * window_radius ** 2 * n_trials
    if expected > max_expected_points:
        raise CapacityError(f"expected {expected:.3g} points exceeds the cap "
                            f"{max_expected_points:.3g}; reduce trials per block or the window")
    per_tier = [_sample_tier_horizontal(model, j, window_radius, n_trials, rng)
                for j in range(model.K)]
    counts = np.stack([c for c, _ in per_tier], axis=1)          # (trials, K)
    offsets = np.concatenate([[0], np.cumsum(counts.sum(axis=1))])
    n = int(offsets[-1])
    tier = np.empty(n, dtype=np.int64)
    y = np.empty(n)
    # scatter each tier's points into its slot inside every trial
    start_in_trial = np.concatenate([np.zeros((n_trials, 1), dtype=np.int64),
                                     np.cumsum(counts, axis=1)[:, :-1]], axis=1)
    for j, (cj, yj) in enumerate(per_tier):
        if yj.size == 0:
            continue
        trial = np.repeat(np.arange(n_trials), cj)
        local = np.arange(yj.size) - np.repeat(np.cumsum(cj) - cj, cj)
        dest = offsets[trial] + start_in_trial[trial, j] + local
        tier[dest] = j
        y[dest] = yj
    h = model.height_diffs[tier] if n else np.empty(0)
    x = np.sqrt(y * y + h * h)
    a = los_decay(model)
    p_los = _p_los_y(y, math.inf) if np.isinf(a).all() else np.exp(-a[tier] * y)
    cls = np.where(rng.random(n) < p_los, LOS, NLOS).astype(np.int8)
    return PointBatch(offsets, tier, y, x, cls)


def sample_realization(model: NetworkModel, window_radius: float, seed: int,
                       max_expected_points: float = MAX_EXPECTED_POINTS) -> BsRealization:
    """One window, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    batch = sample_batch(model, window_radius, 1, rng, max_expected_points)
    return batch.realization(0, window_radius, seed)


def dump_realization_csv(real: BsRealization, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tier", "y_m", "x_m", "link_class"])
        for p in real.points:
            w.writerow([p.tier + 1, f"{p.horizontal_distance:.6f}", f"{p.link_distance:.6f}",
                        CLASS_NAMES[p.link_class]])


# -- window sizing ---------------------------------------------------------

def _stronger_than(v, model: NetworkModel):
    """Expected number of BSs with ARLP above ``v``."""
    ch = model.channel
    return sum(expected_count_within((model.powers[j] / v) ** (1.0 / ch.alpha(c)), j, c, model)
               for j in range(model.K) for c in (LOS, NLOS))


def main_arlp_quantile(model: NetworkModel, p: float) -> float:
    """ARLP level the main link falls below with probability ``p``."""
    if not 0 < p < 1:
        raise ParameterError("p must lie in (0, 1)")
    target = -math.log(p)              # P(max < v) = exp(-mass(v))
    top = float(np.max(model.powers * model.height_diffs ** (-model.channel.alpha_los)))
    lo = top
    while _stronger_than(lo, model) < target:
        lo /= 10.0
    lv = find_root_monotone(lambda u: _stronger_than(math.exp(u), model) - target,
                            (math.log(lo), math.log(top)), tol=1e-10)
    return math.exp(lv)


def cooperation_radius(model: NetworkModel, eta_min: float, miss: float = 1e-6) -> float:
    """Horizontal radius holding every RRLP-eligible BS except with tiny probability.

    Uses a ``miss``-quantile of the main ARLP as a floor and requires the
    expected number of BSs above ``eta_min`` times that floor but beyond the
    radius to be at most ``miss``.
    """
    v = eta_min * main_arlp_quantile(model, miss)
    ch = model.channel

    def outside(radius):
        tot = 0.0
        for j in range(model.K):
            edge = math.hypot(radius, model.height_diffs[j])
            for c in (LOS, NLOS):
                bound = (model.powers[j] / v) ** (1.0 / ch.alpha(c))
                if bound > edge:
                    tot += (expected_count_within(bound, j, c, model)
                            - expected_count_within(edge, j, c, model))
        return tot

    r = 10.0 / (2.0 * math.sqrt(model.total_density))
    while outside(r) > miss:
        r *= 1.25
    return r


def mean_main_arlp(model: NetworkModel, spec: QuadSpec = DEFAULT_QUAD) -> float:
    """``E[max ARLP]`` over the infinite network.

    ``P(max < v) = exp(-sum_{j,c} G_j^c((P_j / v)^{1/alpha_c}))``, so the mean
    is ``int_0^inf (1 - exp(-M(v))) dv``, integrated in ``log v``.
    """
    ch = model.channel

    def mass(v):
        return _stronger_than(v, model)

    def f(u):
        v = math.exp(u)
        return -math.expm1(-mass(v)) * v

    # the main ARLP cannot exceed max_j P_j h_j^-alpha_L
    top = math.log(float(np.max(model.powers * model.height_diffs ** (-ch.alpha_los))))
    lo = top - 10.0
    while -math.expm1(-mass(math.exp(lo))) < 1.0 - 1e-12:
        lo -= 10.0
    return math.exp(lo) + integrate_1d(f, lo, top, spec)


def tail_arlp(model: NetworkModel, radius: float, spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Campbell mean of the aggregate ARLP from BSs beyond horizontal distance ``radius``."""
    ch = model.channel
    a = los_decay(model)
    total = 0.0
    for j in range(model.K):
        lam, pw, h = model.densities[j], model.powers[j], model.height_diffs[j]
        if lam == 0:
            continue

        def f(y, j=j, h=h):
            x2 = y * y + h * h
            pl = _p_los_y(np.asarray(y), a[j])
            return y * (pl * x2 ** (-ch.alpha_los / 2) + (1 - pl) * x2 ** (-ch.alpha_nlos / 2))

        if ch.alpha_nlos <= 2.0:
            raise ParameterError("aggregate ARLP diverges for a pathloss exponent of 2")
        scale = max(radius, h)
        total += 2 * math.pi * lam * pw * integrate_1d(f, radius, math.inf, spec, scale=scale)
    return total


def window_radius_for(model: NetworkModel, neglect_fraction: float,
                      spec: QuadSpec = DEFAULT_QUAD) -> float:
    """Smallest horizontal radius whose outside ARLP is a ``neglect_fraction`` of the main ARLP.

    The result is also at least ten mean nearest-BS distances.
    """
    if not 0 < neglect_fraction < 1:
        raise ParameterError("neglect_fraction must lie in (0, 1)")
    if model.channel.alpha_nlos <= 2.0:
        raise ParameterError("aggregate ARLP diverges for a pathloss exponent of 2")
    lam = model.total_density
    if lam == 0:
        raise ParameterError("model has no BSs")
    floor = 10.0 / (2.0 * math.sqrt(lam))
    target = neglect_fraction * mean_main_arlp(model, spec)
    if tail_arlp(model, floor, spec) <= target:
        return floor
    hi = 2.0 * floor
    while tail_arlp(model, hi, spec) > target:
        hi *= 2.0
        if hi > 1e9:
            raise ParameterError("window radius does not converge")
    lr = find_root_monotone(lambda u: math.log(tail_arlp(model, math.exp(u), spec) / target),
                            (math.log(hi / 2.0), math.log(hi)), tol=1e-10)
    return math.exp(lr)
