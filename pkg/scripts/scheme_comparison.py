"""RRLP, FNSB and no-CoMP metrics on common random numbers at one density.

Usage: python scripts/scheme_comparison.py [--density 5e-3] [--trials 100000]
"""
import argparse
import csv
import sys

from udncomp.association import calibrate_eta
from udncomp.config import CompPolicy, PowerModel, db_to_ratio, paper_model
from udncomp.sim import metrics_report, run_mc

FIELDS = ("coverage", "per_user_se", "tx_ase", "rx_ase", "tx_nee", "rx_nee", "mean_comp_size")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--density", type=float, default=5e-3, help="BSs per m^2")
    ap.add_argument("--threshold-db", type=float, default=0.0)
    ap.add_argument("--combining", choices=("coherent", "noncoherent"), default="coherent")
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="CSV path (default: stdout)")
    args = ap.parse_args()
    model = paper_model(args.density).with_channel(combining=args.combining)
    policies = {f"rrlp(N={n})": CompPolicy.rrlp(calibrate_eta(model, n).eta) for n in (2, 3)}
    policies.update({"fnsb(2)": CompPolicy(scheme="fnsb", n_strongest=2),
                     "fnsb(3)": CompPolicy(scheme="fnsb", n_strongest=3),
                     "no_comp": CompPolicy(scheme="no_comp")})
    results = run_mc(model, list(policies.values()), [float(db_to_ratio(args.threshold_db))],
                     args.trials, args.seed, workers=args.workers)
    f = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(f, lineterminator="\n")
    w.writerow(("scheme", "metric", "value", "ci_lo", "ci_hi"))
    for name, res in zip(policies, results):
        rep = metrics_report(res, PowerModel())
        for m in FIELDS:
            e = getattr(rep, m)
            w.writerow((name, m, f"{e.value:.6g}", f"{e.ci_lo:.6g}", f"{e.ci_hi:.6g}"))


if __name__ == "__main__":
    main()
