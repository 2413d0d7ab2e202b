"""Time-periodic solutions as fixed points of the period map."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import total_energy
from .discretization import State
from .errors import ConfigError, NumericError
from .evolution import march_period

log = logging.getLogger(__name__)


def energy_norm(problem, state, weight=None):
    """``sqrt(int (eps + rho_+) |v|^2 / 2 + ||rho||^2)``.

    ``weight`` is the density coefficients used in the kinetic weight
    (defaults to the density of ``state`` itself).
    """
    sp = problem.space
    dens = state.density if weight is None else weight
    rho = np.maximum(sp.scalar_values(dens)[0], 0.0)
    v = sp.vector_values(state.velocity)[0]
    kin = 0.5 * sp.integrate((problem.eps + rho) * np.sum(v ** 2, axis=0))
    # Y_n is L2-orthonormal, so the density norm is the coefficient norm
    return float(np.sqrt(kin + state.density @ state.density))


def _difference(a, b):
    return State(a.density - b.density, a.velocity - b.velocity, 0.0)


def period_map(problem, initial, return_trajectory=False):
    """March one period from ``initial`` at t = 0; the result is reset to t = 0."""
    traj = march_period(problem, initial.copy(time=0.0))
    out = traj.final.copy(time=0.0)
    return (out, traj) if return_trajectory else out


@dataclass
class FixedPointReport:
    converged: bool
    iterations: int
    state: State
    residual_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)     # E(F(X_k)) per iterate
    trajectory: object = None
    aborted: str | None = None

    @property
    def residual(self):
        return self.residual_history[-1] if self.residual_history else np.inf


class _Anderson:
    """Type-II Anderson mixing on flat coefficient vectors."""

    def __init__(self, depth, damping):
        self.depth, self.damping = depth, damping
        self.xs, self.gs = [], []

    def update(self, x, gx):
        self.xs.append(x)
        self.gs.append(gx)
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.gs.pop(0)
        f = [g - xx for g, xx in zip(self.gs, self.xs)]
        if len(f) == 1:
            return x + self.damping * f[0]
        df = np.stack([f[k + 1] - f[k] for k in range(len(f) - 1)], axis=1)
        dx = np.stack([self.xs[k + 1] - self.xs[k] for k in range(len(f) - 1)], axis=1)
        gamma, *_ = np.linalg.lstsq(df, f[-1], rcond=None)
        x_new = x + self.damping * f[-1] - (dx + self.damping * df) @ gamma
        return x_new


def solve_periodic(problem, config, initial=None):
    """Fixed-point iteration ``X <- F(X)`` for the period map ``F``.

    Picard with optional damping, or Anderson mixing when
    ``config.anderson_depth > 0``.  Converged when
    ``||F(X) - X|| <= tol * max(1, ||X||)`` in the energy norm.
    A non-finite iterate aborts with a report instead of raising.
    """
    sp = problem.space
    if initial is None:
        if config.initial_guess == "supplied":
            raise ConfigError("initial_guess='supplied' needs an initial state")
        initial = sp.zero_state()
    x = initial.copy(time=0.0)
    nd = sp.dim_scalar
    mixer = _Anderson(config.anderson_depth, config.damping) if config.anderson_depth else None
    report = FixedPointReport(False, 0, x)
    for it in range(1, config.max_iterations + 1):
        try:
            fx, traj = period_map(problem, x, return_trajectory=True)
        except NumericError as exc:
            report.aborted = f"period map failed at iteration {it}: {exc}"
            log.error(report.aborted)
            return report
        if not fx.is_finite():
            report.aborted = f"non-finite iterate at iteration {it}"
            log.error(report.aborted)
            return report
        res = energy_norm(problem, _difference(fx, x), weight=x.density)
        scale = max(1.0, energy_norm(problem, x))
        report.iterations = it
        report.residual_history.append(res)
        report.energy_history.append(total_energy(problem, fx))
        report.trajectory = traj
        log.info("fixed point iteration %d: residual %.3e", it, res)
        if res <= config.tol * scale:
            report.converged = True
            report.state = fx
            return report
        if mixer is not None:
            flat = mixer.update(x.vector(), fx.vector())
            x = State(flat[:nd].copy(), flat[nd:].copy(), 0.0)
        elif config.damping < 1:
            w = config.damping
            x = State(w * fx.density + (1 - w) * x.density,
                      w * fx.velocity + (1 - w) * x.velocity, 0.0)
        else:
            x = fx
        report.state = x
    return report


def verify_periodicity(problem, trajectory):
    """Energy-norm distance between the first and last snapshots of a
    trajectory, relative to ``max(1, ||first||)``."""
    first, last = trajectory.initial, trajectory.final
    d = energy_norm(problem, _difference(last, first), weight=first.density)
    return d / max(1.0, energy_norm(problem, first))


def periodicity_drift(problem, state, periods=1):
    """Relative energy-norm drift of ``state`` after re-marching ``periods`` periods."""
    return verify_periodicity(problem, march_period(problem, state.copy(time=0.0), periods=periods))
