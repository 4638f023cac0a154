"""Command-line experiment runner.

Subcommands share ``--scenario --out --trials --seed --workers --path``.
Metric sweeps write one CSV per metric with the columns
``axis_value,scheme,path,value,ci_lo,ci_hi`` plus ``manifest.json``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (CompPolicy, NetworkModel, PER_KM2, Scenario, SimSettings, dbm_to_watts,
                     db_to_ratio, load_scenario, paper_model, scenario_to_dict)
from .errors import CalibrationError, ConfigError, NumericError, ParameterError, UdnCompError

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_NUMERIC = 4
EXIT_ACCEPTANCE = 5

AXES = ("total_density", "density_ratio", "sir_threshold", "target_N_avg")
METRICS = ("coverage", "tx_ase", "rx_ase", "per_user_se", "tx_nee", "rx_nee",
           "mean_comp_size")
CSV_HEADER = ("axis_value", "scheme", "path", "value", "ci_lo", "ci_hi")
DEFAULT_ETA_DENSITIES_KM2 = (10.0, 100.0, 1000.0, 5000.0, 10000.0, 50000.0)


# -- scheme parsing ----------------------------------------------------------

@dataclass(frozen=True)
class SchemeSpec:
    """A CoMP policy template; RRLP with ``target`` is recalibrated per grid point."""
    label: str
    scheme: str
    target: float | None = None
    eta_db: float | None = None
    n_strongest: int = 2
    floor_dbm: float | None = None

    def resolve(self, model: NetworkModel, base: CompPolicy, target: float | None = None
                ) -> CompPolicy:
        from .association import calibrate_eta

        if self.scheme == "rrlp":
            tgt = target if target is not None else self.target
            if tgt is not None:
                return replace(base, scheme="rrlp", eta=((calibrate_eta(model, tgt).eta,),),
                               target_n_avg=tgt)
            if self.eta_db is not None:
                return replace(base, scheme="rrlp", eta=((float(db_to_ratio(self.eta_db)),),))
            return replace(base, scheme="rrlp")
        if self.scheme == "fnsb":
            return replace(base, scheme="fnsb", n_strongest=self.n_strongest)
        if self.scheme == "arlp_threshold":
            floor = base.arlp_floor if self.floor_dbm is None else float(
                dbm_to_watts(self.floor_dbm))
            return replace(base, scheme="arlp_threshold", arlp_floor=floor)
        return replace(base, scheme="no_comp")


def parse_scheme(text: str) -> SchemeSpec:
    """``rrlp``, ``rrlp:N=2``, ``rrlp:eta_db=-3``, ``fnsb:2``, ``arlp_threshold:-60``, ``no_comp``."""
    name, _, arg = text.partition(":")
    try:
        if name == "rrlp":
            if not arg:
                return SchemeSpec("rrlp", "rrlp")
            key, _, val = arg.partition("=")
            if key == "N":
                return SchemeSpec(f"rrlp(N={float(val):g})", "rrlp", target=float(val))
            if key == "eta_db":
                return SchemeSpec(f"rrlp(eta_db={float(val):g})", "rrlp", eta_db=float(val))
        elif name == "fnsb":
            n = int(arg) if arg else 2
            return SchemeSpec(f"fnsb({n})", "fnsb", n_strongest=n)
        elif name == "arlp_threshold":
            return SchemeSpec(f"arlp_threshold({arg or 'scenario'})", "arlp_threshold",
                              floor_dbm=float(arg) if arg else None)
        elif name == "no_comp" and not arg:
            return SchemeSpec("no_comp", "no_comp")
    except ValueError as exc:
        raise ConfigError(f"bad scheme {text!r}: {exc}") from exc
    raise ConfigError(f"bad scheme {text!r}")


# -- sweep -------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    axis: str
    grid: tuple
    schemes: tuple = ()
    paths: tuple = ("mc",)
    metrics: tuple = METRICS

    def __post_init__(self):
        if self.axis not in AXES:
            raise ConfigError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        g = tuple(float(v) for v in self.grid)
        if not g:
            raise ConfigError("sweep grid is empty")
        if any(b <= a for a, b in zip(g[:-1], g[1:])):
            raise ConfigError("sweep grid must be strictly increasing")
        if not self.paths or any(p not in ("mc", "analytic") for p in self.paths):
            raise ConfigError("paths must be a non-empty subset of {mc, analytic}")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad:
            raise ConfigError(f"unknown metrics {bad}")
        if self.axis == "target_N_avg" and any(v <= 1 for v in g):
            raise ConfigError("target_N_avg grid values must exceed 1")
        if self.axis == "density_ratio" and any(not 0 <= v <= 1 for v in g):
            raise ConfigError("density_ratio grid values must lie in [0, 1]")
        if self.axis == "total_density" and any(v <= 0 for v in g):
            raise ConfigError("total_density grid values must be > 0")
        object.__setattr__(self, "grid", g)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "grid": list(self.grid),
                "schemes": [s.label for s in self.schemes], "paths": list(self.paths),
                "metrics": list(self.metrics)}


def _fmt(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else repr(v))


@dataclass
class SweepOutput:
    rows: dict = field(default_factory=lambda: {m: [] for m in METRICS})
    status: list = field(default_factory=list)

    def add(self, metric, axis_value, scheme, path, value, lo, hi):
        self.rows[metric].append((_fmt(axis_value), scheme, path, _fmt(value), _fmt(lo),
                                  _fmt(hi)))

    def csv_text(self, metric: str) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(self.rows[metric])
        return buf.getvalue()

    @property
    def failed(self) -> bool:
        return any(s["status"] != "ok" for s in self.status)


def _model_at(model: NetworkModel, axis: str, v: float) -> NetworkModel:
    lam = model.densities
    total = lam.sum()
    if axis == "total_density":
        frac = lam / total if total > 0 else np.full(model.K, 1.0 / model.K)
        return model.with_densities(v * PER_KM2 * frac)
    if axis == "density_ratio":
        if model.K != 2:
            raise ConfigError("density_ratio sweeps need a 2-tier scenario")
        return model.with_densities([v * total, (1.0 - v) * total])
    return model


def _point(sc: Scenario, sweep: SweepSpec, values, out: SweepOutput, trials: int, seed: int,
           workers: int):
    """Evaluate one model; ``values`` holds several entries only for threshold sweeps."""
    from .analytic.ase import rx_ase_analytic
    from .analytic.coverage import coverage_analytic
    from .analytic.mainlink import mean_comp_size_analytic
    from .sim import metrics_report, run_mc

    v0 = values[0]
    model = _model_at(sc.model, sweep.axis, v0)
    target = v0 if sweep.axis == "target_N_avg" else None
    thr = (db_to_ratio(np.asarray(values)) if sweep.axis == "sir_threshold"
           else np.array([1.0]))
    specs = sweep.schemes
    pols = [s.resolve(model, sc.policy, target if s.scheme == "rrlp" else None) for s in specs]
    want = set(sweep.metrics)
    rows = {}          # (value index, scheme index) -> [(metric, path, value, lo, hi)]
    if "mc" in sweep.paths:
        res = run_mc(model, pols, thr, trials, seed, sc.sim.window_radius, workers,
                     neglect_fraction=sc.sim.neglect_fraction)
        for si, r in enumerate(res):
            for i in range(len(values)):
                rep = metrics_report(r, sc.power, i)
                for m in METRICS:
                    if m in want:
                        e = getattr(rep, m)
                        rows.setdefault((i, si), []).append((m, "mc", e.value, e.ci_lo, e.ci_hi))
    if "analytic" in sweep.paths:
        for si, pol in enumerate(pols):
            if pol.scheme != "rrlp":
                continue
            eta = pol.eta_matrix(model.K)
            if "mean_comp_size" in want:
                n = mean_comp_size_analytic(model, eta)
                for i in range(len(values)):
                    rows.setdefault((i, si), []).append(("mean_comp_size", "analytic", n, n, n))
            if "coverage" in want:
                br = coverage_analytic(model, eta, thr, seed=seed)
                for i in range(len(values)):
                    rows.setdefault((i, si), []).append(
                        ("coverage", "analytic", br.estimate[i], br.lower[i], br.upper[i]))
            if want & {"rx_ase", "per_user_se"}:
                lu = model.user_density
                for i, t in enumerate(thr):
                    ra = rx_ase_analytic(model, eta, float(t), seed=seed)
                    if "per_user_se" in want:
                        rows.setdefault((i, si), []).append(
                            ("per_user_se", "analytic", ra.per_user_se, ra.per_user_se_lower,
                             ra.per_user_se_upper))
                    if "rx_ase" in want:
                        rows.setdefault((i, si), []).append(
                            ("rx_ase", "analytic", ra.rx_ase, lu * ra.per_user_se_lower,
                             lu * ra.per_user_se_upper))
    for (i, si) in sorted(rows):
        for m, path, val, lo, hi in rows[(i, si)]:
            out.add(m, values[i], specs[si].label, path, val, lo, hi)


def run_sweep(sc: Scenario, sweep: SweepSpec, trials: int | None = None,
              seed: int | None = None, workers: int = 1) -> SweepOutput:
    """Evaluate every grid point; a failing point is recorded and skipped.

    Threshold sweeps share one simulation, so every threshold sees the same
    random draws and a failure marks all of them.
    """
    trials = sc.sim.trials if trials is None else trials
    seed = sc.sim.seed if seed is None else seed
    if not sweep.schemes:
        sweep = replace(sweep, schemes=(_scheme_from_policy(sc.policy),))
    if sweep.axis == "target_N_avg":
        sweep = replace(sweep, schemes=tuple(replace(s, label="rrlp") if s.scheme == "rrlp"
                                             else s for s in sweep.schemes))
    groups = ([sweep.grid] if sweep.axis == "sir_threshold"
              else [(v,) for v in sweep.grid])
    out = SweepOutput()
    for values in groups:
        t0 = time.perf_counter()
        try:
            _point(sc, sweep, values, out, trials, seed, workers)
            status = {"status": "ok"}
        except UdnCompError as exc:
            status = {"status": type(exc).__name__, "error": str(exc)}
        dt = round((time.perf_counter() - t0) / len(values), 3)
        for v in values:
            out.status.append({"axis_value": v, **status, "wall_time_s": dt})
    return out


def _scheme_from_policy(pol: CompPolicy) -> SchemeSpec:
    if pol.scheme == "rrlp":
        return SchemeSpec(f"rrlp(N={pol.target_n_avg:g})" if pol.target_n_avg else "rrlp",
                          "rrlp", target=pol.target_n_avg)
    if pol.scheme == "fnsb":
        return SchemeSpec(f"fnsb({pol.n_strongest})", "fnsb", n_strongest=pol.n_strongest)
    return SchemeSpec(pol.scheme, pol.scheme)


def write_outputs(out: SweepOutput, sc: Scenario, sweep: SweepSpec, out_dir, seed: int,
                  command: str, wall_time: float) -> None:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    for m in sweep.metrics:
        (d / f"{m}.csv").write_text(out.csv_text(m))
    manifest = {"command": command, "scenario": scenario_to_dict(sc), "sweep": sweep.to_dict(),
                "seed": seed, "code_version": __version__,
                "numpy_version": np.__version__, "per_point_status": out.status,
                "wall_time_s": round(wall_time, 3)}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def sweep_csv_bytes(model: NetworkModel, trials: int, seed: int, workers: int) -> bytes:
    """Coverage-sweep CSVs for a small fixed grid, concatenated (used for determinism checks)."""
    sc = Scenario(model, CompPolicy.rrlp(db_to_ratio(-4.0)), sim=SimSettings(trials=trials,
                                                                            seed=seed))
    sweep = SweepSpec("sir_threshold", (-5.0, 0.0, 5.0),
                      (SchemeSpec("rrlp", "rrlp"), SchemeSpec("fnsb(2)", "fnsb"),
                       SchemeSpec("no_comp", "no_comp")))
    out = run_sweep(sc, sweep, trials, seed, workers)
    return "".join(out.csv_text(m) for m in METRICS).encode()


# -- argument handling -------------------------------------------------------

def _load(args) -> Scenario:
    if args.scenario:
        return load_scenario(args.scenario)
    return Scenario(paper_model(), CompPolicy(scheme="rrlp", target_n_avg=2.0))


def _common(p):
    p.add_argument("--scenario", help="scenario JSON file (default: 2-tier defaults, RRLP N=2)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (default: scenario)")
    p.add_argument("--seed", type=int, help="master seed (default: scenario)")
    p.add_argument("--workers", type=int, default=1, help="worker processes")
    p.add_argument("--path", choices=("mc", "analytic", "both"), default="mc")


def _schemes_arg(p, default=None):
    p.add_argument("--schemes", nargs="+", default=default,
                   help="e.g. rrlp:N=2 rrlp:eta_db=-3 fnsb:2 arlp_threshold:-60 no_comp")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="udncomp", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate-eta", help="RLPT for target mean CoMP sizes")
    _common(p)
    p.add_argument("--densities-per-km2", type=float, nargs="+",
                   default=list(DEFAULT_ETA_DENSITIES_KM2))
    p.add_argument("--targets", type=float, nargs="+", default=[2.0, 3.0])

    for name, metrics, hlp in (("coverage", ("coverage",), "coverage probability"),
                               ("ase", ("tx_ase", "rx_ase", "per_user_se"),
                                "area spectral efficiency"),
                               ("nee", ("tx_nee", "rx_nee", "tx_ase", "rx_ase",
                                        "per_user_se", "mean_comp_size"),
                                "network energy efficiency")):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        _schemes_arg(p)
        p.add_argument("--thresholds-db", type=float, nargs="+", default=[0.0])
        p.set_defaults(metrics=metrics)

    p = sub.add_parser("sweep", help="metric sweep along one axis")
    _common(p)
    _schemes_arg(p)
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--grid", type=float, nargs="*", required=True,
                   help="axis values; densities in BSs per km^2, thresholds in dB")
    p.add_argument("--metrics", nargs="+", default=list(METRICS), choices=METRICS)

    p = sub.add_parser("validate", help="run the acceptance criteria")
    _common(p)
    p.add_argument("--level", choices=("fast", "full"), default="fast")
    p.add_argument("--criteria", type=int, nargs="+", help="subset of criterion numbers")

    p = sub.add_parser("dump-realization", help="write one BS window as CSV")
    _common(p)
    p.add_argument("--window-radius", type=float, help="m (default: derived from the model)")
    return ap


def _paths(arg: str) -> tuple:
    return ("mc", "analytic") if arg == "both" else (arg,)


def _cmd_calibrate(args, sc: Scenario) -> int:
    from .association import calibrate_eta

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("lambda_b", "target_N", "eta_db"))
    status = []
    code = EXIT_OK
    for lam_km2 in args.densities_per_km2:
        model = _model_at(sc.model, "total_density", lam_km2)
        lam = lam_km2 / (1.0 / PER_KM2)        # correctly rounded, 50000 -> 0.05
        for n in args.targets:
            try:
                cal = calibrate_eta(model, n)
                w.writerow((_fmt(lam), _fmt(n), f"{cal.eta_db:.4f}"))
                status.append({"lambda_b": lam, "target_N": n, "status": "ok"})
            except UdnCompError as exc:
                code = EXIT_NUMERIC
                status.append({"lambda_b": lam, "target_N": n,
                               "status": type(exc).__name__, "error": str(exc)})
    (out / "eta_table.csv").write_text(buf.getvalue())
    (out / "manifest.json").write_text(json.dumps(
        {"command": "calibrate-eta", "scenario": scenario_to_dict(sc),
         "sweep": {"axis": "total_density", "grid": args.densities_per_km2,
                   "targets": args.targets}, "seed": None, "code_version": __version__,
         "per_point_status": status}, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(buf.getvalue())
    return code


def _cmd_sweep(args, sc: Scenario) -> int:
    schemes = tuple(parse_scheme(s) for s in (args.schemes or []))
    if args.command == "sweep":
        axis, grid = args.axis, tuple(args.grid)
    else:
        axis, grid = "sir_threshold", tuple(sorted(set(args.thresholds_db)))
    sweep = SweepSpec(axis, grid, schemes, _paths(args.path), tuple(args.metrics))
    seed = sc.sim.seed if args.seed is None else args.seed
    t0 = time.perf_counter()
    out = run_sweep(sc, sweep, args.trials, seed, args.workers)
    if not sweep.schemes:
        sweep = replace(sweep, schemes=(_scheme_from_policy(sc.policy),))
    write_outputs(out, sc, sweep, args.out, seed, args.command, time.perf_counter() - t0)
    for s in out.status:
        if s["status"] != "ok":
            print(f"grid point {s['axis_value']:g}: {s['status']}: {s['error']}",
                  file=sys.stderr)
    return EXIT_NUMERIC if out.failed else EXIT_OK


def _cmd_validate(args, sc: Scenario | None) -> int:
    from .acceptance import run_all

    seed = args.seed if args.seed is not None else (sc.sim.seed if sc else 1)
    verdicts = run_all(args.level, sc.model if sc else None, seed, args.workers,
                       only=set(args.criteria) if args.criteria else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {"level": args.level, "seed": seed, "code_version": __version__,
              "all_passed": all(v.passed for v in verdicts),
              "verdicts": [v.to_dict() for v in verdicts]}
    (out / "verdicts.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK if report["all_passed"] else EXIT_ACCEPTANCE


def _cmd_dump(args, sc: Scenario) -> int:
    from .geometry import dump_realization_csv, sample_realization
    from .sim import resolve_window

    seed = sc.sim.seed if args.seed is None else args.seed
    radius = resolve_window(sc.model, args.window_radius or sc.sim.window_radius, [],
                            neglect_fraction=sc.sim.neglect_fraction)
    real = sample_realization(sc.model, radius, seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dump_realization_csv(real, out / "realization.csv")
    print(f"{len(real)} BSs within {radius:.1f} m written to {out / 'realization.csv'}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.trials is not None and args.trials < 1:
            raise ConfigError("--trials must be >= 1")
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.command == "validate":
            try:
                sc = load_scenario(args.scenario) if args.scenario else None
            except ConfigError as exc:
                out = Path(args.out)
                out.mkdir(parents=True, exist_ok=True)
                (out / "verdicts.json").write_text(json.dumps(
                    {"level": args.level, "all_passed": False, "config_error": str(exc),
                     "verdicts": []}, indent=2) + "\n")
                raise
            return _cmd_validate(args, sc)
        sc = _load(args)
        if args.command == "calibrate-eta":
            return _cmd_calibrate(args, sc)
        if args.command == "dump-realization":
            return _cmd_dump(args, sc)
        return _cmd_sweep(args, sc)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, CalibrationError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
