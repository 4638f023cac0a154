"""Coverage against total BS density, LoS/NLoS 2-tier defaults and all-NLoS single tier.

Usage: python scripts/density_sweep.py [--trials 20000] [--out sweep.csv]
"""
import argparse
import csv
import sys

from udncomp.acceptance import TREND_DENSITIES
from udncomp.association import calibrate_eta
from udncomp.config import CompPolicy, db_to_ratio, paper_model, single_tier_model
from udncomp.sim import run_mc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--densities", type=float, nargs="+", default=list(TREND_DENSITIES),
                    help="BSs per m^2")
    ap.add_argument("--threshold-db", type=float, default=0.0)
    ap.add_argument("--target-n", type=float, default=2.0)
    ap.add_argument("--trials", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="CSV path (default: stdout)")
    args = ap.parse_args()
    thr = float(db_to_ratio(args.threshold_db))
    f = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(f, lineterminator="\n")
    w.writerow(("lambda_b", "model", "eta_db", "coverage", "ci_lo", "ci_hi"))
    for lam in args.densities:
        for name, model in (("los_nlos", paper_model(lam)),
                            ("nlos_only", single_tier_model(lam, nlos_only=True, alpha=4.0,
                                                            m_nlos=1))):
            cal = calibrate_eta(model, args.target_n)
            res = run_mc(model, [CompPolicy.rrlp(cal.eta)], [thr], args.trials, args.seed,
                         workers=args.workers)[0]
            c = res.coverage()[0]
            w.writerow((lam, name, f"{cal.eta_db:.3f}", f"{c.value:.5f}", f"{c.ci_lo:.5f}",
                        f"{c.ci_hi:.5f}"))
            f.flush()


if __name__ == "__main__":
    main()
