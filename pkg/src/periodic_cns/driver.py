"""Building problems from configs, single runs, parameter sweeps and export."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig
from .discretization import ChannelDomain, State, build_spaces
from .errors import ConfigError, NumericError
from .evolution import Problem, Trajectory
from .models import (BoundaryData, FrictionPenalty, HardSpherePressure, Models,
                     PressurePotential, RegularizedPressure, VelocityExtension,
                     ViscosityModel, build_cutoff)
from .periodic import solve_periodic, verify_periodicity

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3, 4
AUTO_FRICTION_FACTOR = 10.0
SNAPSHOT_GRID = (32, 17)

# short sweep axis names
AXES = {"n": "n", "eps": "regularization.eps", "delta": "regularization.delta",
        "omega": "omega", "lambda_bar": "regularization.lambda_bar",
        "dt": "stepper.steps_per_period"}


def build_models(cfg: RunConfig, lambda_bar=0.0):
    ph, rg, bc, dom = cfg.physical, cfg.regularization, cfg.boundary, cfg.domain
    if not 0 < rg.delta < ph.rho_max / 2:
        raise ConfigError("delta must lie in (0, rho_max / 2)")
    p = HardSpherePressure(ph.rho_max, ph.beta, ph.amplitude)
    preg = RegularizedPressure(p, rg.delta, rg.gamma_exp)
    pot = PressurePotential(preg, rg.reference_density)
    visc = ViscosityModel(ph.mu, ph.eta)
    data = BoundaryData(period=bc.period, length=dom.length, height=dom.height, alpha=bc.alpha,
                        inflow_offset=bc.inflow_offset, stream_amplitude=bc.stream_amplitude,
                        wavenumber=bc.wavenumber, rho_b=bc.rho_b,
                        rho_b_amplitude=bc.rho_b_amplitude, gravity=tuple(ph.gravity),
                        time_dependent=bc.time_dependent)
    data.validate(ph.rho_max)
    cut = build_cutoff(ChannelDomain(dom.length, dom.height), cfg.cutoff_width)
    ext = VelocityExtension(cut, data, visc)
    return Models(p, preg, pot, visc, FrictionPenalty(lambda_bar, ph.rho_max), data, ext)


def auto_lambda_bar(space, models):
    """``10 * c_KP * max|grad u_B| * rho_max``: friction strong enough to dominate
    the trilinear term wherever it is active."""
    c_kp = dg.estimate_korn_poincare(space, models.viscosity)
    return AUTO_FRICTION_FACTOR * c_kp * models.extension.max_gradient() * models.rho_max


def build_problem(cfg: RunConfig, lambda_bar=None):
    """Problem for ``cfg``.  Friction strength: ``lambda_bar`` if given, else the
    configured value, else :func:`auto_lambda_bar`."""
    if cfg.regularization.eps <= 0:
        raise ConfigError("eps must be positive")
    domain = ChannelDomain(cfg.domain.length, cfg.domain.height)
    models = build_models(cfg)
    space = build_spaces(domain, cfg.n, models.extension.cutoff.breakpoints[1:-1],
                         cfg.deterministic)
    lam = lambda_bar if lambda_bar is not None else cfg.regularization.lambda_bar
    if lam is None:
        lam = auto_lambda_bar(space, models)
    if lam < 0:
        raise ConfigError("lambda_bar must be nonnegative")
    models = Models(models.pressure, models.pressure_reg, models.potential, models.viscosity,
                    FrictionPenalty(float(lam), cfg.physical.rho_max), models.data,
                    models.extension)
    return Problem(space, models, cfg.regularization.eps, cfg.stepper)


@dataclass
class RunResult:
    config: RunConfig
    exit_code: int
    message: str
    report: object = None
    problem: Problem = None
    ledger: list = field(default_factory=list)
    mass_defects: np.ndarray = None
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0


def analyse(problem, trajectory, cfg):
    """Ledgers and scalar diagnostics of a (periodic) trajectory."""
    rows, terms = dg.energy_ledger(problem, trajectory)
    mass = dg.mass_ledger(problem, trajectory)
    bounds = dg.bounds_monitor(problem, trajectory, terms)
    summary = {
        "lambda_bar": problem.models.friction.lambda_bar,
        "c_kp": dg.estimate_korn_poincare(problem.space, problem.models.viscosity),
        "energy": terms[0]["energy"],
        "periodicity": verify_periodicity(problem, trajectory),
        "a6_ratio": dg.check_a6(problem, trajectory, terms),
        "f2_ratio": dg.check_f2(rows),
        "pressure_dilation_nonpositive": dg.pressure_dilation_sign(terms),
        "max_ledger_residual": max((abs(r.residual) for r in rows), default=0.0),
        "ledger_violations": len(dg.ledger_violations(rows, cfg.ledger_tolerance)),
        "sign_violations": len(dg.sign_violations(rows)),
        "max_mass_defect": float(mass.max()) if mass.size else 0.0,
        "retries": trajectory.retries,
        "steps": len(trajectory) - 1,
        "rho_min": bounds.rho_min,
        "rho_max": bounds.rho_max,
        "overshoot": bounds.overshoot,
        "pressure_integral": bounds.pressure_integral,
        "kinetic_sup": bounds.kinetic_sup,
        "dissipation_integral": bounds.dissipation_integral,
    }
    return rows, mass, summary


def _compliance(summary):
    """Names of the violated invariants (empty when compliant)."""
    bad = []
    if summary["ledger_violations"]:
        bad.append(f"{summary['ledger_violations']} energy-ledger steps outside the band")
    if summary["sign_violations"]:
        bad.append(f"{summary['sign_violations']} ledger sign violations")
    if summary["max_mass_defect"] > 1e-10:
        bad.append(f"mass ledger defect {summary['max_mass_defect']:.2e}")
    if summary["f2_ratio"] > 1.0:
        bad.append(f"trilinear ratio {summary['f2_ratio']:.3f} > 1")
    return bad


def run_single(cfg: RunConfig, initial: State | None = None, out_dir=None):
    """Solve for the periodic orbit and evaluate all diagnostics.

    Exit codes: 0 converged and compliant, 1 invalid config, 2 not converged
    (or aborted), 3 invariant violation, 4 output failure.
    """
    t0 = time.perf_counter()
    try:
        problem = build_problem(cfg)
    except ConfigError as exc:
        return RunResult(cfg, EXIT_CONFIG, f"invalid configuration: {exc}")

    report = summary = None
    rows, mass = [], np.zeros(0)
    for attempt in range(cfg.lambda_doublings + 1):
        report = solve_periodic(problem, cfg.fixed_point, initial)
        if report.aborted or report.trajectory is None:
            return RunResult(cfg, EXIT_NOT_CONVERGED, report.aborted or "no iterations run",
                             report, problem, wall_time=time.perf_counter() - t0)
        rows, mass, summary = analyse(problem, report.trajectory, cfg)
        if summary["f2_ratio"] <= 1.0 or attempt == cfg.lambda_doublings:
            break
        lam = max(2 * problem.models.friction.lambda_bar, 1e-3)
        log.warning("trilinear ratio %.3f > 1; doubling lambda_bar to %.3g",
                    summary["f2_ratio"], lam)
        problem = build_problem(cfg, lambda_bar=lam)
        initial = report.state
    summary = {"converged": report.converged, "iterations": report.iterations,
               "fixed_point_residual": report.residual, **summary}

    bad = _compliance(summary)
    if not report.converged:
        code, msg = EXIT_NOT_CONVERGED, (f"fixed point not converged after {report.iterations} "
                                         f"iterations (residual {report.residual:.3e})")
    elif bad:
        code, msg = EXIT_INVARIANT, "; ".join(bad)
    else:
        code, msg = EXIT_OK, f"converged in {report.iterations} iterations"
    result = RunResult(cfg, code, msg, report, problem, rows, mass, summary,
                       time.perf_counter() - t0)
    if out_dir is not None:
        try:
            export_timeseries(result, out_dir)
        except OSError as exc:
            result.exit_code, result.message = EXIT_IO, f"could not write outputs: {exc}"
    return result


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepPlan:
    axis: str                   # n, eps, delta, omega, lambda_bar, dt or a dotted key
    schedule: tuple
    warm_start: bool = True

    def __post_init__(self):
        if len(self.schedule) < 2:
            raise ConfigError("a sweep schedule needs at least two entries")
        steps = np.diff(np.asarray(self.schedule, dtype=float))
        if not (np.all(steps > 0) or np.all(steps < 0)):
            raise ConfigError("a sweep schedule must be strictly monotone")
        if self.key.partition(".")[0] not in ("n", "omega", "regularization", "physical",
                                              "boundary", "stepper", "fixed_point", "domain"):
            raise ConfigError(f"unknown sweep axis {self.axis!r}")

    @property
    def key(self):
        return AXES.get(self.axis, self.axis)

    def config(self, base, value):
        if self.axis == "dt":     # schedule in units of the period
            value = int(round(base.boundary.period / value))
        elif self.key in ("n", "stepper.steps_per_period"):
            value = int(value)
        return base.replace(**{self.key: value})


def run_sweep(base: RunConfig, plan: SweepPlan, out_dir=None):
    """Run ``base`` along ``plan``; with warm start each entry begins from the
    previous periodic state when the resolution is unchanged.  Failures are
    recorded and the sweep continues."""
    results, table = [], []
    prev = None
    for k, value in enumerate(plan.schedule):
        cfg = plan.config(base, value)
        sub = None if out_dir is None else Path(out_dir) / f"{k:02d}"
        init = None
        if (plan.warm_start and prev is not None and prev.report is not None
                and prev.config.n == cfg.n and prev.report.state.is_finite()):
            init = prev.report.state
        try:
            res = run_single(cfg, initial=init, out_dir=sub)
        except (NumericError, ConfigError) as exc:
            res = RunResult(cfg, EXIT_NOT_CONVERGED, f"run failed: {exc}")
        log.info("sweep %s=%s: exit %d (%s)", plan.axis, value, res.exit_code, res.message)
        results.append(res)
        table.append({"axis": plan.axis, "value": value, "exit_code": res.exit_code,
                      "message": res.message, **res.summary})
        prev = res
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "sweep.json").write_text(json.dumps(table, indent=2, default=float))
    return results, table


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _grid_values(space, state, shape=SNAPSHOT_GRID):
    """Density and velocity on a uniform (x, y) grid, walls included."""
    from .discretization import _fourier, _legendre, _sines
    dom = space.domain
    x = np.arange(shape[0]) * dom.length / shape[0]
    y = np.linspace(0.0, dom.height, shape[1])
    F = _fourier(space.n, dom.length, x)[0]
    L = _legendre(space.n, dom.height, y)[0]
    S = _sines(space.n, dom.height, y)[0]
    rho = F.T @ state.density.reshape(space.n_fourier, -1) @ L
    v = [F.T @ c @ S for c in state.velocity.reshape(2, space.n_fourier, -1)]
    return {"x": x.tolist(), "y": y.tolist(), "rho": rho.tolist(),
            "v1": v[0].tolist(), "v2": v[1].tolist()}


def export_timeseries(result: RunResult, out_dir, n_snapshots=9):
    """Write ledger.csv, state_snapshots.json, report.json, config.json and
    trajectory.npz (the last one feeds ``check``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ledger.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(dg.LEDGER_COLUMNS + ("mass_defect",))
        for row, m in zip(result.ledger, result.mass_defects):
            w.writerow([repr(float(v)) if isinstance(v, float) else v
                        for v in row.as_tuple()] + [repr(float(m))])
    report = {"schema_version": 1, "exit_code": result.exit_code, "message": result.message,
              "summary": result.summary}
    rep = result.report
    if rep is not None:
        report.update(converged=rep.converged, iterations=rep.iterations,
                      residual_history=rep.residual_history,
                      energy_history=rep.energy_history, aborted=rep.aborted)
    traj = rep.trajectory if rep is not None else None
    if traj is not None:
        idx = np.unique(np.linspace(0, len(traj) - 1, n_snapshots).round().astype(int))
        snaps = [{"time": traj.times[i], "density": traj.states[i].density.tolist(),
                  "velocity": traj.states[i].velocity.tolist(),
                  "grid": _grid_values(result.problem.space, traj.states[i])} for i in idx]
        (out / "state_snapshots.json").write_text(json.dumps(snaps))
        np.savez(out / "trajectory.npz", times=np.asarray(traj.times),
                 density=np.stack([s.density for s in traj.states]),
                 velocity=np.stack([s.velocity for s in traj.states]))
        report["trajectory_times"] = [traj.times[0], traj.times[-1]]
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True, default=float))
    (out / "timing.json").write_text(json.dumps({"wall_time": result.wall_time}))
    result.config.save(out / "config.json")
    return out


def load_snapshots(path):
    """States stored in ``state_snapshots.json``."""
    snaps = json.loads(Path(path).read_text())
    return [State(np.array(s["density"]), np.array(s["velocity"]), s["time"]) for s in snaps]


def load_trajectory(path):
    with np.load(path) as z:
        states = [State(d.copy(), v.copy(), float(t))
                  for t, d, v in zip(z["times"], z["density"], z["velocity"])]
    return Trajectory(states, [s.time for s in states])


def check_run(run_dir):
    """Recompute every diagnostic from a stored run; returns ``(exit code, summary)``."""
    run_dir = Path(run_dir)
    cfg = RunConfig.load(run_dir / "config.json")
    rep = json.loads((run_dir / "report.json").read_text())
    problem = build_problem(cfg, lambda_bar=rep["summary"]["lambda_bar"])
    traj = load_trajectory(run_dir / "trajectory.npz")
    _, _, summary = analyse(problem, traj, cfg)
    bad = _compliance(summary)
    if summary["periodicity"] > cfg.fixed_point.tol:
        bad.append(f"periodicity gap {summary['periodicity']:.2e}")
    return (EXIT_INVARIANT if bad else EXIT_OK), summary
