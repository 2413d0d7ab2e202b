"""Calibrate the energy-ledger band constant C_led.

Marches several transient and periodic runs, records max |residual| / dt over
all steps, and prints the suggested frozen value (twice the observed maximum,
rounded up).  Starts at vacuum are excluded: the eps-term contains
P''(rho) = p'(rho) / rho, which is unbounded there.
"""
import argparse

import numpy as np

from periodic_cns import diagnostics as dg
from periodic_cns.config import RunConfig, zero_data_config
from periodic_cns.driver import build_problem
from periodic_cns.evolution import march_period


def random_state(space, rng, scale):
    """Smooth random state: coefficients decay geometrically with mode index."""
    n = space.n
    fx = np.r_[0, np.repeat(np.arange(1, n + 1), 2)]
    ds = 0.5 ** (fx[:, None] + np.arange(n + 1)[None, :]).ravel()
    dv = np.tile(0.5 ** (fx[:, None] + np.arange(1, n + 1)[None, :]).ravel(), 2)
    s = space.zero_state()
    s.density = space.constant_density(0.3) + scale * 0.02 * ds * rng.standard_normal(ds.size)
    s.velocity = scale * 0.2 * dv * rng.standard_normal(dv.size)
    return s


def worst_ratio(cfg, state_fn, periods=1):
    pb = build_problem(cfg)
    traj = march_period(pb, state_fn(pb.space), periods=periods)
    rows, _ = dg.energy_ledger(pb, traj)
    return max(abs(r.residual) / r.dt for r in rows)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    base = RunConfig(n=args.n)
    cases = {
        "decay, zero data": (zero_data_config(n=args.n), lambda sp: random_state(sp, rng, 1.0)),
        "default data, random start": (base, lambda sp: random_state(sp, rng, 1.0)),
        "crank-nicolson, random start": (base.replace(**{"stepper.scheme": "imex-cn"}),
                                         lambda sp: random_state(sp, rng, 1.0)),
    }
    worst = 0.0
    for name, (cfg, fn) in cases.items():
        r = worst_ratio(cfg, fn)
        worst = max(worst, r)
        print(f"{name:32s} max|residual|/dt = {r:.4f}")
    print(f"suggested C_led = {np.ceil(2 * worst):.0f}")


if __name__ == "__main__":
    main()
