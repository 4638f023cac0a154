"""Monte Carlo estimation of coverage, spectral efficiency, ASE and NEE.

Trials are generated in blocks. Block ``b`` draws from
``SeedSequence(seed, spawn_key=(b,))`` and the block size depends only on
the scenario, so every trial is reproducible from (seed, block) and results
are identical for any worker count. All schemes and thresholds passed to
one :func:`run_mc` call see the same windows and fading draws (common
random numbers), which pairs scheme comparisons trial by trial.

Each trial streams into fixed-size accumulators; no per-trial storage.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .association import (COOPERATOR, INTERFERER, MAIN, assign_batch, point_arlp)
from .channel import draw_fading
from .config import CompPolicy, NetworkModel, PowerModel, SimSettings
from .errors import ParameterError
from .geometry import (BsRealization, cooperation_radius, expected_count_within, sample_batch,
                       tail_arlp, window_radius_for)

POINTS_PER_BLOCK = 1_500_000
N_HIST = 64


@dataclass(frozen=True)
class Estimate:
    value: float
    ci_lo: float
    ci_hi: float
    se: float = float("nan")


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> Estimate:
    if n == 0:
        return Estimate(float("nan"), 0.0, 1.0)
    z = stats.norm.ppf(0.5 + confidence / 2)
    p = successes / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)   # exact ends, free of rounding
    hi = 1.0 if successes == n else min(1.0, centre + half)
    return Estimate(p, lo, hi, math.sqrt(p * (1 - p) / n))


def normal_interval(total: float, total_sq: float, n: int, confidence: float = 0.95,
                    scale: float = 1.0) -> Estimate:
    if n == 0:
        return Estimate(float("nan"), float("nan"), float("nan"))
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0) * n / max(n - 1, 1)
    se = math.sqrt(var / n)
    z = stats.norm.ppf(0.5 + confidence / 2)
    return Estimate(scale * mean, scale * (mean - z * se), scale * (mean + z * se), scale * se)


# -- per-trial outcome for a single window ---------------------------------

@dataclass(frozen=True)
class TrialOutcome:
    sir: float
    comp_size: int
    per_tier_class_counts: np.ndarray
    main_tier: int
    main_class: int
    threshold: float = 0.0

    @property
    def covered(self) -> bool:
        return self.sir >= self.threshold


def combine_signal(amplitude, phase=None):
    """Received CoMP power from per-link amplitudes; random phases if given."""
    amplitude = np.asarray(amplitude, dtype=float)
    if phase is None:
        return float(amplitude.sum()) ** 2
    z = np.sum(amplitude * np.exp(2j * np.pi * np.asarray(phase)))
    return float(abs(z) ** 2)


def trial_sir(real: BsRealization, asg, model: NetworkModel, rng: np.random.Generator,
              threshold: float = 0.0, fading=None, tail: float = 0.0) -> TrialOutcome:
    """SIR of one assigned window with fresh fading (or ``fading`` if given).

    Serving links add in amplitude (co-phased), interferers in power. An
    interference-free window returns ``inf``; an empty window returns 0.
    """
    K = model.K
    counts = np.zeros((K, 2), dtype=np.int64)
    if asg.main is None:
        return TrialOutcome(0.0, 0, counts, -1, -1, threshold)
    g = draw_fading(real.link_class, model.channel, rng) if fading is None else np.asarray(
        fading, dtype=float)
    arlp = point_arlp(real.tier, real.link_distance, real.link_class, model)
    serving = np.concatenate([[asg.main_index], asg.cooperator_indices]).astype(int)
    phase = rng.random(serving.size) if model.channel.combining == "noncoherent" else None
    signal = combine_signal(np.sqrt(arlp[serving] * g[serving]), phase)
    interference = float(np.sum(arlp[asg.interferer_indices] * g[asg.interferer_indices])) + tail
    sir = math.inf if interference == 0 else signal / interference
    counts[real.tier[asg.main_index], real.link_class[asg.main_index]] += 1
    counts += asg.per_tier_class_counts
    return TrialOutcome(sir, 1 + len(asg.cooperators), counts, int(real.tier[asg.main_index]),
                        int(real.link_class[asg.main_index]), threshold)


# -- accumulators ----------------------------------------------------------

@dataclass
class SchemeAccumulator:
    K: int
    n_thr: int
    trials: int = 0
    empty: int = 0
    infinite: int = 0
    covered: np.ndarray = None
    se_sum: np.ndarray = None
    se_sq: np.ndarray = None
    tx_terms: np.ndarray = None      # (n_thr, K): sum over trials of (N_j/N) SE / N
    tx_sum: np.ndarray = None        # per-trial sum_j lambda_j (N_j/N) SE / N
    tx_sq: np.ndarray = None
    n_sum: float = 0.0
    n_sq: float = 0.0
    n_hist: np.ndarray = None
    tier_count_sum: np.ndarray = None
    main_counts: np.ndarray = None    # (K, 2)
    outside_coop_sum: float = 0.0

    def __post_init__(self):
        z = np.zeros
        self.covered = z(self.n_thr, dtype=np.int64) if self.covered is None else self.covered
        self.se_sum = z(self.n_thr) if self.se_sum is None else self.se_sum
        self.se_sq = z(self.n_thr) if self.se_sq is None else self.se_sq
        self.tx_terms = z((self.n_thr, self.K)) if self.tx_terms is None else self.tx_terms
        self.tx_sum = z(self.n_thr) if self.tx_sum is None else self.tx_sum
        self.tx_sq = z(self.n_thr) if self.tx_sq is None else self.tx_sq
        self.n_hist = z(N_HIST + 1, dtype=np.int64) if self.n_hist is None else self.n_hist
        self.tier_count_sum = z(self.K) if self.tier_count_sum is None else self.tier_count_sum
        self.main_counts = z((self.K, 2), dtype=np.int64) if self.main_counts is None \
            else self.main_counts

    def merge(self, other: "SchemeAccumulator"):
        for name in ("trials", "empty", "infinite", "n_sum", "n_sq", "outside_coop_sum"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        for name in ("covered", "se_sum", "se_sq", "tx_terms", "tx_sum", "tx_sq", "n_hist",
                     "tier_count_sum", "main_counts"):
            setattr(self, name, getattr(self, name) + getattr(other, name))


@dataclass
class MCResult:
    """Reduced Monte Carlo statistics of one scheme over a threshold grid."""
    policy: CompPolicy
    thresholds: np.ndarray
    acc: SchemeAccumulator
    model: NetworkModel = field(repr=False)
    window_radius: float = 0.0

    @property
    def trials(self):
        return self.acc.trials

    def coverage(self, confidence=0.95) -> list[Estimate]:
        return [wilson_interval(int(c), self.acc.trials, confidence) for c in self.acc.covered]

    def per_user_se(self, confidence=0.95) -> list[Estimate]:
        n = self.acc.trials - self.acc.infinite
        return [normal_interval(s, q, n, confidence) for s, q in
                zip(self.acc.se_sum, self.acc.se_sq)]

    def rx_ase(self, confidence=0.95) -> list[Estimate]:
        lu = self.model.user_density
        n = self.acc.trials - self.acc.infinite
        return [normal_interval(s, q, n, confidence, scale=lu) for s, q in
                zip(self.acc.se_sum, self.acc.se_sq)]

    def tx_ase(self, confidence=0.95) -> list[Estimate]:
        n = self.acc.trials - self.acc.infinite
        return [normal_interval(s, q, n, confidence) for s, q in
                zip(self.acc.tx_sum, self.acc.tx_sq)]

    def mean_comp_size(self, confidence=0.95) -> Estimate:
        return normal_interval(self.acc.n_sum, self.acc.n_sq, self.acc.trials, confidence)

    def mean_tier_counts(self) -> np.ndarray:
        return self.acc.tier_count_sum / max(self.acc.trials, 1)

    def prob_comp_size_at_most(self, n: int) -> float:
        return float(self.acc.n_hist[:n + 1].sum() / max(self.acc.trials, 1))

    def main_link_frequencies(self) -> np.ndarray:
        return self.acc.main_counts / max(self.acc.trials, 1)

    def diagnostics(self) -> dict:
        t = max(self.acc.trials, 1)
        return {"trials": self.acc.trials, "empty_fraction": self.acc.empty / t,
                "infinite_sir_fraction": self.acc.infinite / t,
                "mean_cooperators_outside_window": self.acc.outside_coop_sum / t,
                "window_radius_m": self.window_radius}


# -- engine ----------------------------------------------------------------

def _block_plan(model: NetworkModel, radius: float, trials: int):
    per_trial = max(model.total_density * math.pi * radius * radius, 1.0)
    size = int(max(1, min(trials, POINTS_PER_BLOCK // per_trial)))
    n_blocks = -(-trials // size)
    return [(b, size if b < n_blocks - 1 else trials - size * (n_blocks - 1))
            for b in range(n_blocks)]


def _outside_cooperators(model, policy, batch, asg, radius):
    """Expected RRLP-eligible BSs beyond the window, summed over trials."""
    if policy.scheme != "rrlp":
        return 0.0
    ok = asg.main_index >= 0
    if not ok.any():
        return 0.0
    eta = policy.eta_matrix(model.K)
    main_tier = batch.tier[asg.main_index[ok]]
    main_arlp = asg.main_arlp[ok]
    total = 0.0
    for j in range(model.K):
        edge = math.hypot(radius, model.height_diffs[j])
        for c in (0, 1):
            alpha = model.channel.alphas[c]
            bound = (model.powers[j] / (eta[j, main_tier] * main_arlp)) ** (1 / alpha)
            inside = expected_count_within(np.minimum(bound, edge), j, c, model)
            total += float(np.sum(expected_count_within(bound, j, c, model) - inside))
    return total


def _run_block(args):
    (model, policies, thresholds, radius, tail, seed, block, n_trials, signal) = args
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    batch = sample_batch(model, radius, n_trials, rng)
    g = draw_fading(batch.link_class, model.channel, rng)
    noncoh = model.channel.combining == "noncoherent"
    phase = rng.random(batch.tier.size) if noncoh else None
    arlp = point_arlp(batch.tier, batch.link_distance, batch.link_class, model)
    trial = batch.trial_index
    K = model.K
    lam = model.densities
    thr = np.asarray(thresholds, dtype=float)
    out = []
    for policy in policies:
        acc = SchemeAccumulator(K, thr.size)
        asg = assign_batch(batch, policy, model, arlp)
        serving = asg.role >= COOPERATOR
        empty = asg.main_index < 0
        N = np.bincount(trial, weights=serving, minlength=n_trials)
        Nj = np.stack([np.bincount(trial, weights=serving & (batch.tier == j),
                                   minlength=n_trials) for j in range(K)], axis=1)
        acc.trials = n_trials
        acc.empty = int(empty.sum())
        acc.n_sum = float(N.sum())
        acc.n_sq = float(np.dot(N, N))
        acc.n_hist = np.bincount(np.minimum(N.astype(np.int64), N_HIST),
                                 minlength=N_HIST + 1)
        acc.tier_count_sum = Nj.sum(axis=0)
        mi = asg.main_index[~empty]
        np.add.at(acc.main_counts, (batch.tier[mi], batch.link_class[mi]), 1)
        acc.outside_coop_sum = _outside_cooperators(model, policy, batch, asg, radius)
        if signal:
            amp = np.sqrt(arlp * g) * serving
            if noncoh:
                z = amp * np.exp(2j * np.pi * phase)
                S = np.abs(np.bincount(trial, weights=z.real, minlength=n_trials)
                           + 1j * np.bincount(trial, weights=z.imag, minlength=n_trials)) ** 2
            else:
                S = np.bincount(trial, weights=amp, minlength=n_trials) ** 2
            I = np.bincount(trial, weights=arlp * g * (asg.role == INTERFERER),
                            minlength=n_trials) + tail
            with np.errstate(divide="ignore", invalid="ignore"):
                sir = np.where(I > 0, S / I, np.where(S > 0, np.inf, 0.0))
            sir[empty] = 0.0
            inf = np.isinf(sir)
            acc.infinite = int(inf.sum())
            cov = sir[:, None] >= thr[None, :]
            acc.covered = cov.sum(axis=0)
            finite = ~inf
            se = np.where(cov & finite[:, None], np.log2(1.0 + np.where(inf, 0.0, sir))[:, None],
                          0.0)
            acc.se_sum = se[finite].sum(axis=0)
            acc.se_sq = (se[finite] ** 2).sum(axis=0)
            with np.errstate(divide="ignore", invalid="ignore"):
                psi = np.where(N[:, None] > 0, Nj / N[:, None], 0.0)           # (trials, K)
                per_n = np.where(N > 0, 1.0 / N, 0.0)
            terms = psi[:, None, :] * (se * per_n[:, None])[:, :, None]       # (trials, T, K)
            acc.tx_terms = terms[finite].sum(axis=0)
            y = terms[finite] @ lam                                           # (trials, T)
            acc.tx_sum = y.sum(axis=0)
            acc.tx_sq = (y * y).sum(axis=0)
        out.append(acc)
    return out


def resolve_window(model: NetworkModel, window_radius: float | None, policies=(),
                   signal: bool = True,
                   neglect_fraction: float = SimSettings().neglect_fraction) -> float:
    """Explicit radius, else one sized for interference and RRLP cooperation.

    Signal runs use :func:`window_radius_for`, enlarged if needed so that
    RRLP-eligible BSs beyond the window are expected less than 1e-4 times
    per trial. Size-only runs need just the cooperation radius (1e-6).
    """
    if window_radius is not None:
        return float(window_radius)
    etas = [float(np.min(p.eta_matrix(model.K))) for p in policies if p.scheme == "rrlp"]
    if not signal:
        return cooperation_radius(model, min(etas), 1e-6) if etas else window_radius_for(
            model, neglect_fraction)
    radius = window_radius_for(model, neglect_fraction)
    if etas:
        radius = max(radius, cooperation_radius(model, min(etas), 1e-4))
    return radius


def run_mc(model: NetworkModel, policies, thresholds, trials: int, seed: int,
           window_radius: float | None = None, workers: int = 1, signal: bool = True,
           tail_compensation: bool = True,
           neglect_fraction: float = SimSettings().neglect_fraction) -> list[MCResult]:
    """Simulate ``trials`` windows and reduce statistics for each policy.

    ``tail_compensation`` adds the Campbell mean of the ARLP from beyond the
    window to every trial's interference, which removes the first-order
    bias of the finite window. ``signal=False`` skips fading and SIR and
    only tracks CoMP set sizes.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    policies = list(policies)
    radius = resolve_window(model, window_radius, policies, signal, neglect_fraction)
    tail = tail_arlp(model, radius) if (tail_compensation and signal) else 0.0
    thr = np.atleast_1d(np.asarray(thresholds, dtype=float))
    plan = _block_plan(model, radius, trials)
    jobs = [(model, policies, thr, radius, tail, seed, b, n, signal) for b, n in plan]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_block, jobs))
    else:
        results = [_run_block(j) for j in jobs]
    accs = [SchemeAccumulator(model.K, thr.size) for _ in policies]
    for block in results:              # block order, so the reduction is deterministic
        for acc, part in zip(accs, block):
            acc.merge(part)
    return [MCResult(p, thr, a, model, radius) for p, a in zip(policies, accs)]


def coverage_mc(model: NetworkModel, policy: CompPolicy, threshold, trials: int, seed: int,
                window_radius: float | None = None, workers: int = 1,
                confidence: float = 0.95):
    """Coverage probability with Wilson interval (a list when ``threshold`` is an array)."""
    if trials < 100:
        raise ParameterError("coverage_mc needs at least 100 trials")
    res = run_mc(model, [policy], threshold, trials, seed, window_radius, workers)[0]
    cov = res.coverage(confidence)
    return cov if np.ndim(threshold) else cov[0]


@dataclass(frozen=True)
class AseEstimate:
    tx_ase: Estimate
    rx_ase: Estimate
    per_user_se: Estimate
    mean_tier_counts: np.ndarray


def ase_mc(model: NetworkModel, policy: CompPolicy, threshold: float, trials: int, seed: int,
           window_radius: float | None = None, workers: int = 1,
           confidence: float = 0.95) -> AseEstimate:
    if trials < 100:
        raise ParameterError("ase_mc needs at least 100 trials")
    res = run_mc(model, [policy], [threshold], trials, seed, window_radius, workers)[0]
    return AseEstimate(res.tx_ase(confidence)[0], res.rx_ase(confidence)[0],
                       res.per_user_se(confidence)[0], res.mean_tier_counts())


# -- energy efficiency -----------------------------------------------------

@dataclass(frozen=True)
class NeeResult:
    tx_nee: float       # bits per joule
    rx_nee: float
    p_nec: float        # W per m^2
    p_bs: np.ndarray    # W per tier
    p_ue: float         # W
    users_per_bs: np.ndarray


def bs_power(model: NetworkModel, power: PowerModel, users_per_bs) -> np.ndarray:
    """Per-tier BS power draw for the given mean number of served users per BS."""
    K = model.K
    kappa = power.per_tier("pa_efficiency", K)
    pa = model.powers / kappa if power.pa_term == "divide_by_efficiency" else model.powers * kappa
    proc = 3.0 * power.bandwidth / (power.coherence_block
                                    * power.per_tier("compute_efficiency", K))
    return (power.per_tier("antenna_power_bs", K) + power.per_tier("fixed_power", K) + pa
            + proc * np.asarray(users_per_bs, dtype=float))


def users_per_bs(model: NetworkModel, mean_tier_counts) -> np.ndarray:
    """``lambda_u E[N_j] / lambda_j``: every serving BS counts the user."""
    lam = model.densities
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(lam > 0, model.user_density * np.asarray(mean_tier_counts) / lam, 0.0)


def nee(model: NetworkModel, per_user_se: float, tx_ase: float, rx_ase: float,
        power: PowerModel, mean_tier_counts) -> NeeResult:
    """Network energy efficiency from spectral metrics and the power model."""
    ub = users_per_bs(model, mean_tier_counts)
    p_bs = bs_power(model, power, ub)
    p_ue = power.antenna_power_ue + per_user_se * power.bandwidth * power.rate_power
    p_nec = float(np.dot(model.densities, p_bs) + model.user_density * p_ue)
    return NeeResult(power.bandwidth * tx_ase / p_nec, power.bandwidth * rx_ase / p_nec, p_nec,
                     p_bs, p_ue, ub)


@dataclass(frozen=True)
class MetricsReport:
    coverage: Estimate
    tx_ase: Estimate
    rx_ase: Estimate
    per_user_se: Estimate
    tx_nee: Estimate
    rx_nee: Estimate
    mean_comp_size: Estimate
    p_nec: float


def metrics_report(res: MCResult, power: PowerModel, index: int = 0,
                   confidence: float = 0.95) -> MetricsReport:
    """All metrics at threshold ``res.thresholds[index]``; NEE intervals scale the ASE ones."""
    se = res.per_user_se(confidence)[index]
    tx = res.tx_ase(confidence)[index]
    rx = res.rx_ase(confidence)[index]
    n = nee(res.model, se.value, tx.value, rx.value, power, res.mean_tier_counts())
    f = power.bandwidth / n.p_nec
    scale = lambda e: Estimate(f * e.value, f * e.ci_lo, f * e.ci_hi, f * e.se)  # noqa: E731
    return MetricsReport(res.coverage(confidence)[index], tx, rx, se, scale(tx), scale(rx),
                         res.mean_comp_size(confidence), n.p_nec)
