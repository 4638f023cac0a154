import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from udncomp.association import (COOPERATOR, INTERFERER, MAIN, assign, assign_batch,
                                 calibrate_eta, mean_comp_size_mc, point_arlp)
from udncomp.config import LOS, NLOS, CompPolicy, NetworkModel, TierParams, paper_model, \
    single_tier_model
from udncomp.errors import CalibrationError
from udncomp.geometry import BsRealization, PointBatch, sample_batch, sample_realization


def _real(tier, x, cls, model):
    tier = np.asarray(tier, dtype=np.int64)
    x = np.asarray(x, dtype=float)
    y = np.sqrt(x ** 2 - model.height_diffs[tier] ** 2)
    return BsRealization(tier, y, x, np.asarray(cls, dtype=np.int8), 1e4)


ST = single_tier_model(1e-4, alpha=3.5)


@pytest.mark.parametrize("policy", [CompPolicy.rrlp(0.5), CompPolicy(scheme="fnsb", n_strongest=3),
                                    CompPolicy(scheme="arlp_threshold", arlp_floor=1.0),
                                    CompPolicy(scheme="no_comp")])
def test_single_bs_is_main_under_any_scheme(policy):
    asg = assign(_real([0], [300.0], [NLOS], ST), policy, ST)
    assert asg.main.link_distance == 300.0
    assert asg.cooperators == [] and asg.interferers == [] and asg.comp_size == 1


def test_rrlp_two_bs_boundary():
    real = _real([0, 0], [100.0, 120.0], [NLOS, NLOS], ST)
    assert (100 / 120) ** 3.5 == pytest.approx(0.528, abs=1e-3)
    assert assign(real, CompPolicy.rrlp(0.5), ST).comp_size == 2
    asg = assign(real, CompPolicy.rrlp(0.6), ST)
    assert asg.comp_size == 1 and len(asg.interferers) == 1


def test_empty_window_sentinel():
    asg = assign(_real([], [], [], ST), CompPolicy.rrlp(0.5), ST)
    assert asg.main is None and not asg.covered_possible and asg.comp_size == 0


def test_ties_go_to_lowest_tier_then_index():
    m = NetworkModel(tiers=(TierParams(1e-4, 1.0, 10.0), TierParams(1e-4, 1.0, 10.0)))
    real = _real([0, 0, 1], [200.0, 100.0, 100.0], [NLOS] * 3, m)
    assert assign(real, CompPolicy(scheme="no_comp"), m).main_index == 1
    real = _real([0, 1, 1], [300.0, 100.0, 100.0], [NLOS] * 3, m)
    assert assign(real, CompPolicy(scheme="no_comp"), m).main_index == 1
    fn = assign(real, CompPolicy(scheme="fnsb", n_strongest=2), m)
    assert fn.cooperator_indices.tolist() == [2]


def _batch(seed, density=1e-3, radius=400.0, trials=40):
    m = paper_model(density)
    return m, sample_batch(m, radius, trials, np.random.default_rng(seed))


def _per_trial(batch):
    return [slice(a, b) for a, b in zip(batch.offsets[:-1], batch.offsets[1:])]


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-15, 0), st.integers(1, 5))
def test_rrlp_partition_and_boundary(seed, eta_db, n_strongest):
    m, b = _batch(seed)
    eta = 10 ** (eta_db / 10)
    arlp = point_arlp(b.tier, b.link_distance, b.link_class, m)
    asg = assign_batch(b, CompPolicy.rrlp(eta), m, arlp)
    for t, sl in enumerate(_per_trial(b)):
        role = asg.role[sl]
        if role.size == 0:
            assert asg.main_index[t] == -1
            continue
        assert (role == MAIN).sum() == 1
        a = arlp[sl]
        main = a[role == MAIN][0]
        assert main == a.max()
        assert np.all(a[role == COOPERATOR] >= eta * main)
        assert np.all(a[role == INTERFERER] < eta * main)
    fn = assign_batch(b, CompPolicy(scheme="fnsb", n_strongest=n_strongest), m, arlp)
    for sl in _per_trial(b):
        role = fn.role[sl]
        if role.size:
            assert (role != INTERFERER).sum() == min(n_strongest, role.size)
            kept = arlp[sl][role != INTERFERER]
            dropped = arlp[sl][role == INTERFERER]
            assert dropped.size == 0 or kept.min() >= dropped.max()


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 1e3), st.floats(-15, 0), st.floats(0.1, 5))
def test_power_scale_invariance(seed, scale, eta_db, drop_db):
    m, b = _batch(seed)
    scaled = NetworkModel(tiers=tuple(TierParams(t.density, t.tx_power * scale, t.antenna_height)
                                      for t in m.tiers), blockage=m.blockage, channel=m.channel)
    for pol in (CompPolicy.rrlp(10 ** (eta_db / 10)), CompPolicy(scheme="fnsb", n_strongest=2)):
        a = assign_batch(b, pol, m)
        c = assign_batch(b, pol, scaled)
        assert np.array_equal(a.role, c.role) and np.array_equal(a.main_index, c.main_index)
    # lowering eta never removes a cooperator
    hi = assign_batch(b, CompPolicy.rrlp(10 ** (eta_db / 10)), m).role
    lo = assign_batch(b, CompPolicy.rrlp(10 ** ((eta_db - drop_db) / 10)), m).role
    assert np.all(lo[hi != INTERFERER] != INTERFERER)


def test_assign_counts_and_partition():
    m = paper_model(1e-3)
    real = sample_realization(m, 500.0, seed=3)
    asg = assign(real, CompPolicy.rrlp(0.1), m)
    assert len(asg.cooperators) + len(asg.interferers) + 1 == len(real)
    assert asg.comp_size == 1 + asg.per_tier_class_counts.sum()
    counts = np.zeros((2, 2), dtype=int)
    for p in asg.cooperators:
        counts[p.tier, p.link_class] += 1
    assert np.array_equal(counts, asg.per_tier_class_counts)


def test_arlp_threshold_keeps_main():
    m = paper_model(1e-3)
    real = sample_realization(m, 500.0, seed=4)
    asg = assign(real, CompPolicy(scheme="arlp_threshold", arlp_floor=1e30), m)
    assert asg.comp_size == 1


def test_no_comp_mean_size_is_one():
    est = mean_comp_size_mc(paper_model(1e-4), CompPolicy(scheme="no_comp"), None, 500, seed=1)
    assert est.value == 1.0


def test_eta_one_gives_single_bs():
    est = mean_comp_size_mc(paper_model(1e-4), CompPolicy.rrlp(1.0), None, 500, seed=1)
    assert est.value == 1.0


def test_calibration_matches_single_tier_closed_form():
    m = single_tier_model(1e-4, nlos_only=True, alpha=4.0, m_nlos=1)
    h = m.height_diffs[0]
    for n in (1.5, 2.0, 3.0):
        cal = calibrate_eta(m, n)
        # mean size N = eta^{-2/alpha} (pi lam h^2 + 1) - pi lam h^2, inverted for eta
        u = (n + math.pi * 1e-4 * h * h) / (math.pi * 1e-4 * h * h + 1)
        assert cal.eta == pytest.approx(u ** -2.0, rel=1e-6)
        lam = (n * cal.eta ** 0.5 - 1) / (math.pi * h * h * (1 - cal.eta ** 0.5))
        assert lam == pytest.approx(1e-4, rel=1e-5)
        assert cal.achieved_n_avg == pytest.approx(n, abs=1e-6)


def test_calibration_dense_corner():
    assert calibrate_eta(paper_model(5e-2), 3.0).eta_db == pytest.approx(-0.43, abs=0.1)


@pytest.mark.xfail(strict=True, reason="the two-tier mean-size integral reaches 2 cooperators at "
                                       "about -5.3 dB for 1e-5 per m^2, so -7.70 dB is unreachable "
                                       "within 0.1 dB")
def test_calibration_sparse_corner():
    assert calibrate_eta(paper_model(1e-5), 2.0).eta_db == pytest.approx(-7.70, abs=0.1)


def test_calibration_monotone_in_target():
    m = paper_model(1e-3)
    etas = [calibrate_eta(m, n).eta for n in (1.5, 2.5, 4.0)]
    assert all(a > b for a, b in zip(etas, etas[1:]))


def test_calibration_errors():
    with pytest.raises(CalibrationError):
        calibrate_eta(paper_model(1e-4), 1.0)
    with pytest.raises(CalibrationError):
        calibrate_eta(paper_model(1e-4), 2.0, mode="per_pair")
    with pytest.raises(CalibrationError):
        calibrate_eta(paper_model(1e-4), 1e9)


@pytest.mark.xfail(strict=True, reason="at -5.85 dB the two-tier model at 1e-4 per m^2 "
                                       "averages about 1.86 BSs, not 2")
def test_listed_eta_gives_two_cooperators():
    est = mean_comp_size_mc(paper_model(1e-4), CompPolicy.rrlp(10 ** -0.585), None, 20_000,
                            seed=2)
    assert est.ci_lo <= 2.0 <= est.ci_hi


@pytest.mark.parametrize("density,eta_db", [(1e-5, -6.0), (1e-4, -3.0), (1e-3, -8.0),
                                            (5e-3, -2.0), (2e-2, -1.0)])
def test_mc_mean_size_matches_analytic(density, eta_db):
    from udncomp.analytic.mainlink import mean_comp_size_analytic

    m = paper_model(density)
    est = mean_comp_size_mc(m, CompPolicy.rrlp(10 ** (eta_db / 10)), None, 20_000, seed=7,
                            confidence=0.99)
    ana = mean_comp_size_analytic(m, 10 ** (eta_db / 10))
    assert est.ci_lo <= ana <= est.ci_hi
