"""Energy-ledger residual under time-step refinement.

Solves the default orbit once, then re-marches it with steps_per_period in
``--steps`` and prints max |residual|, max |residual| / dt and the ratio to
the previous level (2 for a first-order defect).
"""
import argparse

from periodic_cns import diagnostics as dg
from periodic_cns.config import RunConfig
from periodic_cns.driver import build_problem, run_single
from periodic_cns.evolution import march_period


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=8)
    ap.add_argument("--steps", default="200,400,800,1600")
    args = ap.parse_args()
    base = RunConfig(n=args.n)
    ref = run_single(base)
    orbit, lam = ref.report.state, ref.summary["lambda_bar"]
    prev = None
    print(f"{'steps':>6} {'max|res|':>10} {'max|res|/dt':>12} {'ratio':>6}")
    for steps in (int(s) for s in args.steps.split(",")):
        pb = build_problem(base.replace(**{"stepper.steps_per_period": steps}), lambda_bar=lam)
        rows, _ = dg.energy_ledger(pb, march_period(pb, orbit))
        worst = max(abs(r.residual) for r in rows)
        per_dt = max(abs(r.residual) / r.dt for r in rows)
        ratio = f"{prev / worst:6.2f}" if prev else "     -"
        print(f"{steps:6d} {worst:10.3e} {per_dt:12.3f} {ratio}")
        prev = worst


if __name__ == "__main__":
    main()
