"""Main-link selection, CoMP set formation and RLPT calibration.

The main link is the BS with the largest ARLP. Ties are broken by the
lowest (tier, point index), which is the storage order of a window, so the
first maximum in a trial is the main link.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import CompPolicy, NetworkModel, ratio_to_db
from .errors import BracketError, CalibrationError
from .geometry import BsPoint, BsRealization, PointBatch
from .numerics import DEFAULT_QUAD, QuadSpec, find_root_monotone

INTERFERER, COOPERATOR, MAIN = 0, 1, 2


def point_arlp(tier, link_distance, link_class, model: NetworkModel) -> np.ndarray:
    alpha = model.channel.alphas[link_class]
    return model.powers[tier] * link_distance ** (-alpha)


@dataclass(frozen=True)
class BatchAssignment:
    role: np.ndarray          # per point: INTERFERER, COOPERATOR or MAIN
    main_index: np.ndarray    # per trial, -1 for an empty window
    main_arlp: np.ndarray     # per trial, 0 for an empty window


def assign_batch(batch: PointBatch, policy: CompPolicy, model: NetworkModel,
                 arlp: np.ndarray | None = None) -> BatchAssignment:
    """Roles of every point in every trial of a batch under ``policy``."""
    n_trials = batch.n_trials
    n = batch.tier.size
    if arlp is None:
        arlp = point_arlp(batch.tier, batch.link_distance, batch.link_class, model)
    main_index = np.full(n_trials, -1, dtype=np.int64)
    main_arlp = np.zeros(n_trials)
    role = np.zeros(n, dtype=np.int8)
    if n == 0:
        return BatchAssignment(role, main_index, main_arlp)
    counts = batch.counts
    nonempty = counts > 0
    starts = batch.offsets[:-1][nonempty]
    trial = batch.trial_index
    main_arlp[nonempty] = np.maximum.reduceat(arlp, starts)
    pos = np.where(arlp == main_arlp[trial], np.arange(n), n)
    main_index[nonempty] = np.minimum.reduceat(pos, starts)
    mains = main_index[nonempty]

    if policy.scheme == "rrlp":
        eta = policy.eta_matrix(model.K)
        main_tier = np.zeros(n_trials, dtype=np.int64)
        main_tier[nonempty] = batch.tier[mains]
        coop = arlp >= eta[batch.tier, main_tier[trial]] * main_arlp[trial]
    elif policy.scheme == "fnsb":
        order = np.lexsort((np.arange(n), -arlp, trial))
        rank = np.empty(n, dtype=np.int64)
        rank[order] = np.arange(n) - batch.offsets[trial[order]]
        coop = rank < policy.n_strongest
    elif policy.scheme == "arlp_threshold":
        coop = arlp >= policy.arlp_floor
    else:
        coop = np.zeros(n, dtype=bool)
    role[coop] = COOPERATOR
    role[mains] = MAIN
    return BatchAssignment(role, main_index, main_arlp)


@dataclass
class CompAssignment:
    main: BsPoint | None
    cooperators: list
    interferers: list
    per_tier_class_counts: np.ndarray     # (K, 2), cooperators only
    main_index: int = -1
    cooperator_indices: np.ndarray | None = None
    interferer_indices: np.ndarray | None = None

    @property
    def covered_possible(self) -> bool:
        return self.main is not None

    @property
    def comp_size(self) -> int:
        return 0 if self.main is None else 1 + len(self.cooperators)


def assign(real: BsRealization, policy: CompPolicy, model: NetworkModel) -> CompAssignment:
    """CoMP assignment of one window; an empty window yields ``main=None``."""
    counts = np.zeros((model.K, 2), dtype=np.int64)
    if len(real) == 0:
        return CompAssignment(None, [], [], counts)
    batch = PointBatch(np.array([0, len(real)]), real.tier, real.horizontal_distance,
                       real.link_distance, real.link_class)
    asg = assign_batch(batch, policy, model)
    pts = real.points
    coop_idx = np.nonzero(asg.role == COOPERATOR)[0]
    intf_idx = np.nonzero(asg.role == INTERFERER)[0]
    for i in coop_idx:
        counts[real.tier[i], real.link_class[i]] += 1
    mi = int(asg.main_index[0])
    return CompAssignment(pts[mi], [pts[i] for i in coop_idx], [pts[i] for i in intf_idx],
                          counts, mi, coop_idx, intf_idx)


def mean_comp_size_mc(model: NetworkModel, policy: CompPolicy, window_radius: float | None,
                      trials: int, seed: int, workers: int = 1, confidence: float = 0.95):
    """Monte Carlo mean CoMP set size with a normal-approximation interval."""
    from .sim import run_mc

    res = run_mc(model, [policy], thresholds=[0.0], trials=trials, seed=seed,
                 window_radius=window_radius, workers=workers, signal=False)[0]
    return res.mean_comp_size(confidence)


@dataclass(frozen=True)
class EtaCalibration:
    eta: float
    eta_db: float
    achieved_n_avg: float


def calibrate_eta(model: NetworkModel, target_n_avg: float, mode: str = "scalar",
                  spec: QuadSpec = DEFAULT_QUAD, tol_db: float = 1e-4) -> EtaCalibration:
    """Scalar RLPT giving an analytic mean CoMP size of ``target_n_avg``.

    The mean size decreases monotonically in the threshold, so the root is
    bracketed on ``log(eta)`` between a tiny threshold and 1.
    """
    from .analytic.mainlink import mean_comp_size_analytic

    if mode != "scalar":
        raise CalibrationError(f"unsupported calibration mode {mode!r}")
    if not target_n_avg > 1:
        raise CalibrationError("target mean CoMP size must exceed 1")

    def f(log_eta):
        return mean_comp_size_analytic(model, math.exp(log_eta), spec) - target_n_avg

    lo = math.log(1e-6)
    try:
        le = find_root_monotone(f, (lo, 0.0), tol=tol_db * math.log(10) / 10)
    except BracketError as exc:
        raise CalibrationError(f"target mean CoMP size {target_n_avg} unreachable "
                               f"for eta in [1e-6, 1]: {exc}") from exc
    eta = math.exp(le)
    return EtaCalibration(eta, float(ratio_to_db(eta)), f(le) + target_n_avg)
