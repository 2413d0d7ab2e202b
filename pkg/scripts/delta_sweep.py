"""Warm-started continuation in the pressure regularisation delta.

Prints, per delta, the iteration count, the overshoot metric and the density
range along the periodic orbit.  ``--cold`` disables the warm start.
"""
import argparse

from periodic_cns.config import RunConfig
from periodic_cns.driver import SweepPlan, run_sweep


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--schedule", default="0.1,0.05,0.025,0.0125")
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--cold", action="store_true")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    schedule = tuple(float(v) for v in args.schedule.split(","))
    plan = SweepPlan("delta", schedule, warm_start=not args.cold)
    results, table = run_sweep(RunConfig(n=args.n), plan, out_dir=args.out)
    print(f"{'delta':>8} {'exit':>4} {'iters':>5} {'overshoot':>10} {'rho_min':>8} {'rho_max':>8}")
    for row in table:
        print(f"{row['value']:8.4g} {row['exit_code']:4d} {row.get('iterations', -1):5d} "
              f"{row.get('overshoot', float('nan')):10.2e} {row.get('rho_min', float('nan')):8.4f} "
              f"{row.get('rho_max', float('nan')):8.4f}")
    return max(r.exit_code for r in results)


if __name__ == "__main__":
    raise SystemExit(main())
