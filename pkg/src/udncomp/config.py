"""Scenario data model, unit conversions and JSON scenario I/O.

Internal units are SI throughout (m, W, Hz, BSs per m^2). dBm, dB and
per-km^2 densities only appear at the file boundary.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import ConfigError

LOS, NLOS = 0, 1
CLASSES = (LOS, NLOS)
CLASS_NAMES = ("LoS", "NLoS")

PER_KM2 = 1e-6


def dbm_to_watts(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, dtype=float)) + 30.0


def db_to_ratio(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def ratio_to_db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def _require(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class TierParams:
    density: float          # BSs per m^2
    tx_power: float         # W
    antenna_height: float   # m
    deployment: Literal["ppp", "hex_grid"] = "ppp"

    def __post_init__(self):
        _require(self.density >= 0, "tier density must be >= 0")
        _require(self.tx_power > 0, "tier tx_power must be > 0")
        _require(self.deployment in ("ppp", "hex_grid"), f"unknown deployment {self.deployment!r}")


@dataclass(frozen=True)
class BlockageParams:
    built_fraction: float = 0.5       # fraction of area covered by buildings
    building_density: float = 300 * PER_KM2
    mean_building_height: float = 20.0
    # which height divides rho in the LoS base; see geometry.los_probability
    base_height: Literal["height_difference", "bs_height"] = "height_difference"

    def __post_init__(self):
        _require(0 < self.built_fraction < 1, "built_fraction must lie in (0, 1)")
        _require(self.building_density > 0, "building density must be > 0")
        _require(self.mean_building_height > 0, "mean building height must be > 0")
        _require(self.base_height in ("height_difference", "bs_height"),
                 f"unknown blockage_base_height {self.base_height!r}")


@dataclass(frozen=True)
class ChannelParams:
    alpha_los: float = 2.5
    alpha_nlos: float = 3.5
    m_los: int = 10
    m_nlos: int = 1
    # coherent = co-phased joint transmission; noncoherent = random-phase sum
    combining: Literal["coherent", "noncoherent"] = "coherent"

    def __post_init__(self):
        _require(self.alpha_los >= 2, "alpha_los must be >= 2")
        _require(self.alpha_nlos >= self.alpha_los, "alpha_nlos must be >= alpha_los")
        for name in ("m_los", "m_nlos"):
            v = getattr(self, name)
            _require(float(v).is_integer() and v >= 1, f"{name} must be an integer >= 1")
        _require(self.m_los >= self.m_nlos, "m_los must be >= m_nlos")
        _require(self.combining in ("coherent", "noncoherent"),
                 f"unknown combining {self.combining!r}")

    def alpha(self, c: int) -> float:
        return self.alpha_los if c == LOS else self.alpha_nlos

    def m(self, c: int) -> int:
        return int(self.m_los if c == LOS else self.m_nlos)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([self.alpha_los, self.alpha_nlos])

    @property
    def shapes(self) -> np.ndarray:
        return np.array([self.m_los, self.m_nlos], dtype=float)


@dataclass(frozen=True)
class NetworkModel:
    tiers: tuple[TierParams, ...]
    user_height: float = 1.5
    user_density: float = 3e-3
    blockage: BlockageParams = field(default_factory=BlockageParams)
    channel: ChannelParams = field(default_factory=ChannelParams)

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))
        _require(len(self.tiers) >= 1, "at least one tier is required")
        _require(self.user_density > 0, "user density must be > 0")
        _require(self.user_height >= 0, "user height must be >= 0")
        for j, t in enumerate(self.tiers):
            _require(t.antenna_height > self.user_height,
                     f"tier {j + 1}: antenna height {t.antenna_height} m must exceed "
                     f"user height {self.user_height} m")

    @property
    def K(self) -> int:
        return len(self.tiers)

    @property
    def densities(self) -> np.ndarray:
        return np.array([t.density for t in self.tiers])

    @property
    def powers(self) -> np.ndarray:
        return np.array([t.tx_power for t in self.tiers])

    @property
    def bs_heights(self) -> np.ndarray:
        return np.array([t.antenna_height for t in self.tiers])

    @property
    def height_diffs(self) -> np.ndarray:
        """``h_j = h_bj - h_u``: the minimum link distance of tier j."""
        return self.bs_heights - self.user_height

    @property
    def total_density(self) -> float:
        return float(self.densities.sum())

    def with_densities(self, densities: Sequence[float]) -> "NetworkModel":
        _require(len(densities) == self.K, "density vector length must equal K")
        tiers = tuple(replace(t, density=float(d)) for t, d in zip(self.tiers, densities))
        return replace(self, tiers=tiers)

    def with_channel(self, **kw) -> "NetworkModel":
        return replace(self, channel=replace(self.channel, **kw))


SCHEMES = ("rrlp", "fnsb", "arlp_threshold", "no_comp")


@dataclass(frozen=True)
class CompPolicy:
    scheme: str = "rrlp"
    eta: tuple = ((1.0,),)          # eta[j][k]: tier-j cooperator given a tier-k main link
    n_strongest: int = 2
    arlp_floor: float = 1e-9        # W
    target_n_avg: float | None = None

    def __post_init__(self):
        _require(self.scheme in SCHEMES, f"unknown CoMP scheme {self.scheme!r}")
        eta = np.atleast_2d(np.asarray(self.eta, dtype=float))
        _require(eta.shape[0] == eta.shape[1], "eta must be a square matrix")
        _require(bool(np.all((eta > 0) & (eta <= 1))), "eta entries must lie in (0, 1]")
        object.__setattr__(self, "eta", tuple(tuple(float(v) for v in row) for row in eta))
        _require(self.n_strongest >= 1, "n_strongest must be >= 1")
        _require(self.arlp_floor > 0, "arlp_floor must be > 0")
        if self.target_n_avg is not None:
            _require(self.target_n_avg > 1, "target_n_avg must exceed 1")

    def eta_matrix(self, K: int) -> np.ndarray:
        eta = np.asarray(self.eta, dtype=float)
        if eta.shape == (1, 1):
            return np.full((K, K), eta[0, 0])
        _require(eta.shape == (K, K), f"eta must be scalar or {K}x{K}")
        return eta

    @classmethod
    def rrlp(cls, eta: float, **kw) -> "CompPolicy":
        return cls(scheme="rrlp", eta=((float(eta),),), **kw)


@dataclass(frozen=True)
class PowerModel:
    antenna_power_bs: tuple = (1.0,)        # W per tier
    fixed_power: tuple = (18.0,)            # W per tier
    pa_efficiency: tuple = (0.39,)          # per tier
    compute_efficiency: tuple = (12.8e9,)   # flops per W per tier
    antenna_power_ue: float = 0.01          # W
    rate_power: float = 0.8e-9              # W per bit/s
    bandwidth: float = 20e6                 # Hz
    coherence_block: float = 200.0          # symbols
    pa_term: Literal["divide_by_efficiency", "multiply_literal"] = "divide_by_efficiency"

    def __post_init__(self):
        for name in ("antenna_power_bs", "fixed_power", "pa_efficiency", "compute_efficiency"):
            v = tuple(float(x) for x in np.atleast_1d(getattr(self, name)))
            _require(all(x > 0 for x in v), f"{name} must be strictly positive")
            object.__setattr__(self, name, v)
        _require(all(x <= 1 for x in self.pa_efficiency), "pa_efficiency must lie in (0, 1]")
        for name in ("antenna_power_ue", "rate_power", "bandwidth", "coherence_block"):
            _require(getattr(self, name) > 0, f"{name} must be strictly positive")
        _require(self.pa_term in ("divide_by_efficiency", "multiply_literal"),
                 f"unknown pa_term {self.pa_term!r}")

    def per_tier(self, name: str, K: int) -> np.ndarray:
        v = np.asarray(getattr(self, name))
        if v.size == 1:
            return np.full(K, v[0])
        _require(v.size == K, f"{name} must have 1 or {K} entries")
        return v


@dataclass(frozen=True)
class SimSettings:
    window_radius: float | None = None   # m; None = derive from the model
    trials: int = 10_000
    seed: int = 1
    neglect_fraction: float = 0.1

    def __post_init__(self):
        _require(self.window_radius is None or self.window_radius > 0,
                 "window_radius must be > 0")
        _require(self.trials >= 1, "trials must be >= 1")
        _require(0 < self.neglect_fraction < 1, "neglect_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Scenario:
    model: NetworkModel
    policy: CompPolicy = field(default_factory=CompPolicy)
    power: PowerModel = field(default_factory=PowerModel)
    sim: SimSettings = field(default_factory=SimSettings)


# -- defaults --------------------------------------------------------------

# (tx power dBm, BS antenna height m) for the macro and micro tiers
DEFAULT_TIERS = ((44.0, 25.0), (33.0, 10.0))


def paper_model(total_density: float = 1e-4, tier1_fraction: float = 0.2,
                **channel_kw) -> NetworkModel:
    """Two-tier macro/micro network with the default table parameters."""
    fractions = (tier1_fraction, 1.0 - tier1_fraction)
    tiers = tuple(TierParams(density=total_density * f, tx_power=float(dbm_to_watts(p)),
                             antenna_height=h)
                  for f, (p, h) in zip(fractions, DEFAULT_TIERS))
    return NetworkModel(tiers=tiers, channel=ChannelParams(**channel_kw))


def single_tier_model(density: float, nlos_only: bool = False, alpha: float | None = None,
                      tier: int = 0, **channel_kw) -> NetworkModel:
    """One PPP tier using the macro (tier=0) or micro (tier=1) defaults.

    ``nlos_only`` pushes the building density so high that LoS links vanish
    beyond the antenna-height offset; combine it with ``alpha``/``m_nlos``
    for the all-NLoS Rayleigh special case.
    """
    p, h = DEFAULT_TIERS[tier]
    kw = dict(channel_kw)
    if alpha is not None:
        kw.setdefault("alpha_los", alpha)
        kw.setdefault("alpha_nlos", alpha)
    blockage = BlockageParams()
    model = NetworkModel(tiers=(TierParams(density, float(dbm_to_watts(p)), h),),
                         blockage=blockage, channel=ChannelParams(**kw))
    if nlos_only:
        model = replace(model, blockage=replace(blockage, building_density=math.inf))
    return model


# -- JSON I/O --------------------------------------------------------------

def _scalar_or_list(v):
    return v[0] if len(v) == 1 else list(v)


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        return _scenario_from_dict(doc)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc


def _scenario_from_dict(doc: dict) -> Scenario:
    _require(isinstance(doc, dict), "scenario document must be a JSON object")
    tiers_doc = doc.get("tiers")
    _require(isinstance(tiers_doc, list) and tiers_doc, "scenario needs a non-empty 'tiers' list")
    tiers = []
    for j, t in enumerate(tiers_doc):
        defaults = DEFAULT_TIERS[j] if j < len(DEFAULT_TIERS) else (None, None)
        p_dbm = t.get("tx_power_dbm", defaults[0])
        h_b = t.get("antenna_height_m", defaults[1])
        _require(p_dbm is not None and h_b is not None,
                 f"tier {j + 1}: tx_power_dbm and antenna_height_m are required beyond tier 2")
        _require("density_per_km2" in t, f"tier {j + 1}: density_per_km2 is required")
        dep = t.get("deployment", "ppp")
        dep = "hex_grid" if dep in ("hex", "hex_grid") else dep
        tiers.append(TierParams(density=float(t["density_per_km2"]) * PER_KM2,
                                tx_power=float(dbm_to_watts(p_dbm)),
                                antenna_height=float(h_b), deployment=dep))
    user = doc.get("user", {})
    b = doc.get("blockage", {})
    blockage = BlockageParams(
        built_fraction=float(b.get("epsilon", 0.5)),
        building_density=float(b.get("buildings_per_km2", 300.0)) * PER_KM2,
        mean_building_height=float(b.get("mean_height_m", 20.0)),
        base_height=b.get("blockage_base_height", "height_difference"))
    ch = doc.get("channel", {})
    channel = ChannelParams(alpha_los=float(ch.get("alpha_los", 2.5)),
                            alpha_nlos=float(ch.get("alpha_nlos", 3.5)),
                            m_los=_as_int(ch.get("m_los", 10), "m_los"),
                            m_nlos=_as_int(ch.get("m_nlos", 1), "m_nlos"),
                            combining=ch.get("combining", "coherent"))
    model = NetworkModel(tiers=tuple(tiers), user_height=float(user.get("height_m", 1.5)),
                         user_density=float(user.get("density_per_km2", 3000.0)) * PER_KM2,
                         blockage=blockage, channel=channel)

    c = doc.get("comp", {})
    eta_db = c.get("eta_db", 0.0)
    eta = db_to_ratio(eta_db)
    eta = ((float(eta),),) if np.ndim(eta) == 0 else tuple(map(tuple, np.atleast_2d(eta)))
    floor_dbm = c.get("arlp_floor_dbm", -60.0)
    policy = CompPolicy(scheme=c.get("scheme", "rrlp"), eta=eta,
                        n_strongest=int(c.get("n_strongest", 2)),
                        arlp_floor=float(dbm_to_watts(floor_dbm)),
                        target_n_avg=c.get("target_n_avg"))
    if policy.eta != ((policy.eta[0][0],),):
        policy.eta_matrix(model.K)

    pw = doc.get("power", {})
    power = PowerModel(
        antenna_power_bs=tuple(np.atleast_1d(pw.get("antenna_power_bs_w", 1.0))),
        fixed_power=tuple(np.atleast_1d(pw.get("fixed_power_w", 18.0))),
        pa_efficiency=tuple(np.atleast_1d(pw.get("pa_efficiency", 0.39))),
        compute_efficiency=tuple(np.atleast_1d(pw.get("compute_efficiency_gflops_per_w", 12.8)) * 1e9),
        antenna_power_ue=float(pw.get("antenna_power_ue_w", 0.01)),
        rate_power=float(pw.get("rate_power_w_per_gbps", 0.8)) * 1e-9,
        bandwidth=float(pw.get("bandwidth_hz", 20e6)),
        coherence_block=float(pw.get("coherence_block_symbols", 200.0)),
        pa_term=pw.get("pa_term", "divide_by_efficiency"))
    for name in ("antenna_power_bs", "fixed_power", "pa_efficiency", "compute_efficiency"):
        power.per_tier(name, model.K)

    s = doc.get("sim", {})
    sim = SimSettings(window_radius=s.get("window_radius_m"), trials=int(s.get("trials", 10_000)),
                      seed=int(s.get("seed", 1)),
                      neglect_fraction=float(s.get("neglect_fraction", 0.1)))
    return Scenario(model=model, policy=policy, power=power, sim=sim)


def _as_int(v, name):
    _require(float(v).is_integer(), f"{name} must be an integer")
    return int(v)


def scenario_to_dict(sc: Scenario) -> dict:
    m = sc.model
    eta_db = ratio_to_db(np.asarray(sc.policy.eta))
    return {
        "tiers": [{"density_per_km2": t.density / PER_KM2,
                   "tx_power_dbm": float(watts_to_dbm(t.tx_power)),
                   "antenna_height_m": t.antenna_height,
                   "deployment": "hex" if t.deployment == "hex_grid" else "ppp"} for t in m.tiers],
        "user": {"height_m": m.user_height, "density_per_km2": m.user_density / PER_KM2},
        "blockage": {"epsilon": m.blockage.built_fraction,
                     "buildings_per_km2": m.blockage.building_density / PER_KM2,
                     "mean_height_m": m.blockage.mean_building_height,
                     "blockage_base_height": m.blockage.base_height},
        "channel": {"alpha_los": m.channel.alpha_los, "alpha_nlos": m.channel.alpha_nlos,
                    "m_los": m.channel.m_los, "m_nlos": m.channel.m_nlos,
                    "combining": m.channel.combining},
        "comp": {"scheme": sc.policy.scheme,
                 "eta_db": float(eta_db[0, 0]) if eta_db.shape == (1, 1) else eta_db.tolist(),
                 "n_strongest": sc.policy.n_strongest,
                 "arlp_floor_dbm": float(watts_to_dbm(sc.policy.arlp_floor)),
                 "target_n_avg": sc.policy.target_n_avg},
        "power": {"antenna_power_bs_w": _scalar_or_list(sc.power.antenna_power_bs),
                  "fixed_power_w": _scalar_or_list(sc.power.fixed_power),
                  "pa_efficiency": _scalar_or_list(sc.power.pa_efficiency),
                  "compute_efficiency_gflops_per_w":
                      _scalar_or_list(tuple(v / 1e9 for v in sc.power.compute_efficiency)),
                  "antenna_power_ue_w": sc.power.antenna_power_ue,
                  "rate_power_w_per_gbps": sc.power.rate_power * 1e9,
                  "bandwidth_hz": sc.power.bandwidth,
                  "coherence_block_symbols": sc.power.coherence_block,
                  "pa_term": sc.power.pa_term},
        "sim": {"window_radius_m": sc.sim.window_radius, "trials": sc.sim.trials,
                "seed": sc.sim.seed, "neglect_fraction": sc.sim.neglect_fraction},
    }


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return scenario_from_dict(doc)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2, sort_keys=True) + "\n")
