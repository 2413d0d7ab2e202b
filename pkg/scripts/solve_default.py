"""Solve the shipped default configuration and write its outputs.

    python scripts/solve_default.py --out runs/default
"""
import argparse
import json

from periodic_cns.config import RunConfig
from periodic_cns.driver import run_single


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--config", help="JSON config (defaults to the shipped one)")
    args = ap.parse_args()
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    res = run_single(cfg, out_dir=args.out)
    print(res.message)
    keys = ("iterations", "fixed_point_residual", "energy", "a6_ratio", "f2_ratio",
            "lambda_bar", "c_kp", "max_ledger_residual", "max_mass_defect", "rho_min",
            "rho_max", "overshoot")
    print(json.dumps({k: res.summary.get(k) for k in keys}, indent=2, default=float))
    print(f"wall time {res.wall_time:.1f} s, outputs in {args.out}")
    return res.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
