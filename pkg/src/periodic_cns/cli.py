"""Command line interface: ``periodic-cns {solve,sweep,check,export}``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError
from . import driver

log = logging.getLogger("periodic_cns")


def _thread_limit():
    n = os.environ.get("PERIODIC_CNS_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=int(n))


def _load_config(args):
    if args.config and args.default:
        raise ConfigError("--config and --default are mutually exclusive")
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.deterministic:
        changes["deterministic"] = True
    if args.out:
        changes["output_dir"] = args.out
    return cfg.replace(**changes)


def _parse_schedule(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def cmd_solve(args):
    cfg = _load_config(args)
    res = driver.run_single(cfg, out_dir=cfg.output_dir)
    print(f"{res.message} -> {cfg.output_dir}")
    return res.exit_code


def cmd_sweep(args):
    cfg = _load_config(args)
    if not args.axis or not args.schedule:
        raise ConfigError("sweep needs --axis and --schedule")
    plan = driver.SweepPlan(args.axis, _parse_schedule(args.schedule))
    results, table = driver.run_sweep(cfg, plan, out_dir=cfg.output_dir)
    for row in table:
        print(f"{plan.axis}={row['value']:<10g} exit={row['exit_code']} "
              f"iterations={row.get('iterations', '-')} overshoot={row.get('overshoot', '-')}")
    return max(r.exit_code for r in results)


def cmd_check(args):
    run_dir = Path(args.out or args.run_dir or ".")
    code, summary = driver.check_run(run_dir)
    print(json.dumps(summary, indent=2, default=float))
    return code


def cmd_export(args):
    """Re-export a stored run (ledger.csv, snapshots, report) into ``--out``."""
    src = Path(args.run_dir)
    cfg = RunConfig.load(src / "config.json")
    rep = json.loads((src / "report.json").read_text())
    problem = driver.build_problem(cfg, lambda_bar=rep["summary"]["lambda_bar"])
    traj = driver.load_trajectory(src / "trajectory.npz")
    rows, mass, summary = driver.analyse(problem, traj, cfg)

    class _Report:
        converged = rep.get("converged", False)
        iterations = rep.get("iterations", 0)
        residual_history = rep.get("residual_history", [])
        energy_history = rep.get("energy_history", [])
        aborted = rep.get("aborted")
        trajectory = traj

    summary = {**rep["summary"], **summary}
    res = driver.RunResult(cfg, rep["exit_code"], rep["message"], _Report, problem, rows, mass,
                           summary)
    out = Path(args.out or src)
    driver.export_timeseries(res, out)
    print(f"exported to {out}")
    return driver.EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="periodic-cns", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)
    for name, fn in (("solve", cmd_solve), ("sweep", cmd_sweep),
                     ("check", cmd_check), ("export", cmd_export)):
        s = sub.add_parser(name)
        s.set_defaults(func=fn)
        s.add_argument("--config", help="JSON run configuration")
        s.add_argument("--default", action="store_true", help="use the shipped defaults")
        s.add_argument("--axis", help="sweep axis: n, eps, delta, omega, lambda_bar, dt")
        s.add_argument("--schedule", help="sweep values, comma or space separated")
        s.add_argument("--out", help="output (or, for check, run) directory")
        s.add_argument("--seed", type=int)
        s.add_argument("--deterministic", action="store_true")
        s.add_argument("-v", "--verbose", action="store_true")
        if name in ("check", "export"):
            s.add_argument("run_dir", nargs="?", help="directory of a stored run")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return driver.EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return driver.EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
