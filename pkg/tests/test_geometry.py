import csv
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from udncomp.config import LOS, NLOS, NetworkModel, TierParams, paper_model, single_tier_model
from udncomp.errors import CapacityError, ParameterError
from udncomp.geometry import (dump_realization_csv, expected_count_within, hex_spacing,
                              los_base, los_decay, los_probability, main_arlp_quantile,
                              mean_main_arlp, sample_batch, sample_realization, tail_arlp,
                              window_radius_for)

MODEL = paper_model(1e-4)


def _los_reference(x, hb, hu, rho, eps, ups):
    """High-precision evaluation of base^sqrt(eps*ups*(x^2 - h^2))."""
    mp.mp.dps = 40
    h = mp.mpf(hb) - hu
    s2 = mp.sqrt(2)
    base = 1 - mp.sqrt(mp.pi / 2) * (rho / h) * (mp.erf(hb / (rho * s2)) - mp.erf(hu / (rho * s2)))
    return float(base ** mp.sqrt(eps * ups * (mp.mpf(x) ** 2 - h ** 2)))


def test_los_probability_tier2_at_100m():
    ref = _los_reference(100, 10, 1.5, 20, 0.5, 300e-6)
    assert los_probability(100.0, 1, MODEL) == pytest.approx(ref, rel=1e-12)


def test_los_base_equals_mean_clearance_over_the_line():
    # base = int_0^1 P(building shorter than the ray height at fraction s) ds
    for j in range(2):
        hb, hu, rho = MODEL.bs_heights[j], MODEL.user_height, MODEL.blockage.mean_building_height
        ref, _ = integrate.quad(lambda s: 1 - math.exp(-(hu + s * (hb - hu)) ** 2 / (2 * rho ** 2)),
                                0, 1, epsabs=0, epsrel=1e-13)
        assert los_base(MODEL)[j] == pytest.approx(ref, rel=1e-12)


def test_los_probability_edges():
    for j in range(2):
        h = MODEL.height_diffs[j]
        assert los_probability(h, j, MODEL) == 1.0
        assert los_probability(10_000.0, j, MODEL) < 1e-6
        with pytest.raises(ParameterError):
            los_probability(0.5 * h, j, MODEL)


@given(st.floats(0, 5000), st.floats(0, 5000), st.integers(0, 1))
def test_los_probability_is_monotone_and_complementary(d1, d2, j):
    h = MODEL.height_diffs[j]
    x1, x2 = sorted((h + d1, h + d2))
    p1, p2 = los_probability(x1, j, MODEL), los_probability(x2, j, MODEL)
    assert 0.0 <= p2 <= p1 <= 1.0
    assert p1 + (1.0 - p1) == 1.0


def test_nlos_only_has_no_los_beyond_offset():
    m = single_tier_model(1e-4, nlos_only=True, alpha=4.0)
    assert math.isinf(los_decay(m)[0])
    assert los_probability(m.height_diffs[0] + 1e-3, 0, m) == 0.0


@pytest.mark.parametrize("j,c,x", [(0, LOS, 50.0), (0, NLOS, 400.0), (1, LOS, 9.0),
                                   (1, NLOS, 2000.0), (1, LOS, 8.5 + 1e-6)])
def test_expected_count_within_matches_quadrature(j, c, x):
    h = MODEL.height_diffs[j]

    def integrand(t):
        p = los_probability(t, j, MODEL)
        return t * (p if c == LOS else 1 - p)

    ref, _ = integrate.quad(integrand, h, x, epsabs=0, epsrel=1e-12, limit=200)
    ref *= 2 * math.pi * MODEL.densities[j]
    assert expected_count_within(x, j, c, MODEL) == pytest.approx(ref, rel=1e-9, abs=1e-300)
    assert expected_count_within(0.5 * h, j, c, MODEL) == 0.0


def test_empty_model_gives_empty_realization():
    m = paper_model(0.0)
    assert len(sample_realization(m, 500.0, seed=3)) == 0


def test_window_radius_must_be_positive():
    with pytest.raises(ParameterError):
        sample_realization(MODEL, 0.0, seed=0)


def test_capacity_cap():
    with pytest.raises(CapacityError):
        sample_realization(paper_model(1.0), 1e4, seed=0)


def test_realization_geometry_invariants():
    real = sample_realization(paper_model(1e-3), 800.0, seed=11)
    assert len(real) > 0
    h = MODEL.height_diffs[real.tier]
    assert np.all(real.horizontal_distance <= 800.0)
    assert np.allclose(real.link_distance, np.hypot(real.horizontal_distance, h), rtol=1e-15)
    assert np.all(real.link_distance >= h)


def test_same_seed_same_realization():
    a = sample_realization(MODEL, 1000.0, seed=5)
    b = sample_realization(MODEL, 1000.0, seed=5)
    for f in ("tier", "horizontal_distance", "link_distance", "link_class"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_mean_count_over_seeds():
    m = single_tier_model(1e-4)
    rng = np.random.default_rng(0)
    batch = sample_batch(m, 1000.0, 10_000, rng)
    mean = math.pi * 1e-4 * 1e6
    assert mean == pytest.approx(314.16, abs=5e-3)
    se = math.sqrt(mean / 10_000)
    assert abs(batch.counts.mean() - mean) < 3 * se


def test_counts_are_poisson_chi_square():
    rng = np.random.default_rng(1)
    batch = sample_batch(paper_model(1e-4), 300.0, 1000, rng)
    for j, lam in enumerate(MODEL.densities):
        counts = np.bincount(batch.trial_index[batch.tier == j], minlength=1000)
        mu = lam * math.pi * 300.0 ** 2
        edges = np.arange(0, int(mu + 6 * math.sqrt(mu)) + 2)
        # pool bins so every expected count is at least 5
        probs = np.diff(np.concatenate([[0.0], stats.poisson.cdf(edges, mu)]))
        probs[-1] += stats.poisson.sf(edges[-1], mu)
        obs = np.bincount(np.minimum(counts, edges[-1]), minlength=edges.size).astype(float)
        o, e, acc_o, acc_e = [], [], 0.0, 0.0
        for ob, pr in zip(obs, probs * 1000):
            acc_o += ob
            acc_e += pr
            if acc_e >= 5:
                o.append(acc_o)
                e.append(acc_e)
                acc_o = acc_e = 0.0
        o[-1] += acc_o
        e[-1] += acc_e
        _, p = stats.chisquare(o, e)
        assert p > 0.01


def test_positions_uniform_on_disk():
    rng = np.random.default_rng(2)
    batch = sample_batch(single_tier_model(1e-4), 700.0, 200, rng)
    u = (batch.horizontal_distance / 700.0) ** 2
    assert stats.kstest(u, "uniform").pvalue > 0.01


def test_los_fraction_near_100m():
    m = single_tier_model(1e-3, tier=1)
    rng = np.random.default_rng(4)
    hits = los = 0
    while hits < 100_000:
        b = sample_batch(m, 101.0, 20_000, rng)
        sel = (b.link_distance >= 99.0) & (b.link_distance <= 101.0)
        hits += int(sel.sum())
        los += int((b.link_class[sel] == LOS).sum())
    # the class probability varies over the band; compare with its band average
    h = m.height_diffs[0]
    lo, hi = math.sqrt(99.0 ** 2 - h * h), math.sqrt(101.0 ** 2 - h * h)
    avg, _ = integrate.quad(lambda y: y * los_probability(math.hypot(y, h), 0, m), lo, hi)
    avg /= 0.5 * (hi * hi - lo * lo)
    ci = 3 * math.sqrt(avg * (1 - avg) / hits)
    assert abs(los / hits - avg) < ci
    assert abs(avg - los_probability(100.0, 0, m)) < 0.01


def test_hex_tier_count_within_one_cell():
    m = NetworkModel(tiers=(TierParams(1e-5, 25.12, 25.0, deployment="hex_grid"),))
    rng = np.random.default_rng(5)
    b = sample_batch(m, 3000.0, 200, rng)
    expected = 1e-5 * math.pi * 3000.0 ** 2
    # a disk of radius R holds lambda*pi*R^2 lattice points up to O(perimeter / spacing)
    perimeter_cells = 2 * math.pi * 3000.0 / hex_spacing(1e-5)
    assert np.all(np.abs(b.counts - expected) <= perimeter_cells)
    assert abs(b.counts.mean() - expected) < 1.0 + 3 * b.counts.std() / math.sqrt(200)
    assert hex_spacing(1e-5) == pytest.approx(math.sqrt(2 / (math.sqrt(3) * 1e-5)))


def test_realization_csv(tmp_path):
    real = sample_realization(MODEL, 400.0, seed=9)
    path = tmp_path / "r.csv"
    dump_realization_csv(real, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["tier", "y_m", "x_m", "link_class"]
    assert len(rows) == len(real) + 1
    assert {r[3] for r in rows[1:]} <= {"LoS", "NLoS"}


def test_window_radius_closed_form_tail():
    m = single_tier_model(1e-4, nlos_only=True, alpha=4.0)
    f = 1e-3
    radius = window_radius_for(m, f)
    h = m.height_diffs[0]
    # beyond R: 2 pi lam P int_R^inf y (y^2 + h^2)^-2 dy = pi lam P / (R^2 + h^2)
    target = f * mean_main_arlp(m)
    closed = math.sqrt(math.pi * 1e-4 * m.powers[0] / target - h * h)
    floor = 10.0 / (2.0 * math.sqrt(1e-4))
    assert radius == pytest.approx(max(closed, floor), rel=1e-8)
    assert tail_arlp(m, radius) == pytest.approx(math.pi * 1e-4 * m.powers[0] / (radius ** 2 + h * h),
                                                 rel=1e-9)


def test_window_radius_shrinks_with_density():
    r1 = window_radius_for(paper_model(1e-4), 1e-3)
    r2 = window_radius_for(paper_model(2e-4), 1e-3)
    assert r2 < r1


def test_window_radius_diverges_towards_alpha_two():
    radii = [window_radius_for(single_tier_model(1e-4, nlos_only=True, alpha=a), 1e-3)
             for a in (4.0, 3.0, 2.5)]
    assert radii[0] < radii[1] < radii[2]
    with pytest.raises(ParameterError):
        window_radius_for(single_tier_model(1e-4, nlos_only=True, alpha=2.0), 1e-3)


def test_window_radius_rejects_bad_fraction():
    with pytest.raises(ParameterError):
        window_radius_for(MODEL, 1.5)


def test_mean_main_arlp_and_quantile_against_sampling():
    m = paper_model(1e-3)
    rng = np.random.default_rng(6)
    parts = []
    for _ in range(8):
        b = sample_batch(m, 1000.0, 2500, rng)
        alpha = np.where(b.link_class == LOS, m.channel.alpha_los, m.channel.alpha_nlos)
        arlp = m.powers[b.tier] * b.link_distance ** -alpha
        parts.append(np.maximum.reduceat(arlp, b.offsets[:-1]))
    best = np.concatenate(parts)
    assert best.mean() == pytest.approx(mean_main_arlp(m), rel=4 * best.std() / best.mean() / math.sqrt(best.size))
    q = main_arlp_quantile(m, 0.3)
    frac = (best < q).mean()
    assert abs(frac - 0.3) < 3 * math.sqrt(0.21 / best.size)
