"""Time integration of the coupled Galerkin system over one period.

One step is a Lie splitting: a linear implicit density solve with the
velocity frozen, then an IMEX momentum solve with the new density.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .discretization import (assemble_continuity_system, block_diag2, extension_on_grid,
                             momentum_terms)
from .errors import ConfigError, NumericError

log = logging.getLogger(__name__)

EXPLICIT_TERMS = ("convection", "pressure", "boundary_coupling", "eps_gradient", "body_force")


@dataclass(frozen=True)
class StepperConfig:
    steps_per_period: int = 400
    scheme: str = "imex-euler"          # or "imex-cn"
    max_subiterations: int = 0
    subiteration_tol: float = 1e-10
    cfl_safety: float = 0.5
    max_retries: int = 5

    def __post_init__(self):
        if self.steps_per_period < 1:
            raise ConfigError("steps_per_period must be >= 1")
        if self.scheme not in ("imex-euler", "imex-cn"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.subiteration_tol <= 0:
            raise ConfigError("subiteration tolerance must be positive")

    @property
    def theta(self):
        return 1.0 if self.scheme == "imex-euler" else 0.5


@dataclass
class Problem:
    """Galerkin space, constitutive models and regularisation parameters."""

    space: object
    models: object
    eps: float
    stepper: StepperConfig = field(default_factory=StepperConfig)

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("eps must be positive")

    @property
    def delta(self):
        return self.models.pressure_reg.delta

    @property
    def ext(self):
        return self.models.extension

    @property
    def data(self):
        return self.models.data

    @property
    def period(self):
        return self.models.data.period

    @cached_property
    def dissipation(self):
        return self.space.dissipation_matrix(self.models.viscosity)

    @cached_property
    def mesh_width(self):
        dom = self.space.domain
        return min(dom.length / self.space.n_fourier, dom.height / (self.space.n + 1))


@dataclass
class Trajectory:
    states: list
    times: list
    retries: int = 0

    @property
    def initial(self):
        return self.states[0]

    @property
    def final(self):
        return self.states[-1]

    def steps(self):
        return zip(self.states[:-1], self.states[1:])

    def __len__(self):
        return len(self.states)


class StepFailure(NumericError):
    pass


def continuity_step(problem, state, dt, t_new=None):
    """Implicit density update with the velocity of ``state`` frozen.

    Data are taken at the new time level.  Returns the new coefficients.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    t_new = state.time + dt if t_new is None else t_new
    th = problem.stepper.theta
    sp = problem.space
    a, b = assemble_continuity_system(sp, state, problem.ext, problem.data, problem.eps, t_new)
    lhs = np.eye(sp.dim_scalar) + th * dt * a
    rhs = state.density + dt * b
    if th < 1:
        rhs = rhs - (1 - th) * dt * (a @ state.density)
    try:
        out = linalg.solve(lhs, rhs, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericError("singular continuity system") from exc
    return out


def _implicit_operator(problem, fields, rho):
    sp, m = problem.space, problem.models
    w = sp.weighted_form(m.friction(rho) + problem.eps * rho, ("F", "S"), ("F", "S"))
    return problem.dissipation + block_diag2(w)


def momentum_step(problem, state, new_density, dt, t_new=None):
    """IMEX update of the velocity coefficients.

    Weighted mass, dissipation, friction and the eps-reaction term are
    implicit; transport, pressure, boundary coupling, the eps-gradient term
    and the body force are explicit (optionally re-evaluated in fixed-point
    sub-iterations).
    """
    sp, th = problem.space, problem.stepper.theta
    t_new = state.time + dt if t_new is None else t_new
    old_fields = sp.fields(state)
    mid = type(state)(new_density, state.velocity, t_new)
    new_fields = sp.fields(mid)
    ub = extension_on_grid(sp, problem.ext, t_new)

    rho_old, rho_new = old_fields.rho_plus, new_fields.rho_plus
    w_old = sp.weighted_form(problem.eps + rho_old, ("F", "S"), ("F", "S"))
    w_new = sp.weighted_form(problem.eps + rho_new, ("F", "S"), ("F", "S"))
    imp_new = _implicit_operator(problem, new_fields, rho_new)
    lhs = block_diag2(w_new) + th * dt * imp_new
    base = block_diag2(w_old) @ state.velocity
    if th < 1:
        imp_old = _implicit_operator(problem, old_fields, rho_old)
        base = base - (1 - th) * dt * (imp_old @ state.velocity)
    try:
        factor = linalg.cho_factor(lhs)
    except linalg.LinAlgError as exc:
        raise NumericError("momentum operator is not positive definite") from exc

    def explicit(fl):
        terms = momentum_terms(sp, mid, problem.models, problem.ext, problem.eps,
                               t=t_new, fields=fl, ub=ub, terms=EXPLICIT_TERMS)
        return sum(terms.values())

    v = linalg.cho_solve(factor, base + dt * explicit(new_fields))
    prev_inc = np.inf
    for _ in range(problem.stepper.max_subiterations):
        fl = sp.fields(type(state)(new_density, v, t_new))
        v_next = linalg.cho_solve(factor, base + dt * explicit(fl))
        inc = np.linalg.norm(v_next - v)
        v = v_next
        if not np.isfinite(inc) or inc > 2 * prev_inc:
            raise StepFailure("momentum sub-iterations diverged")
        if inc <= problem.stepper.subiteration_tol * max(1.0, np.linalg.norm(v)):
            break
        prev_inc = inc
    if not np.all(np.isfinite(v)):
        raise StepFailure("non-finite velocity")
    return v


def step(problem, state, dt):
    t_new = state.time + dt
    rho = continuity_step(problem, state, dt, t_new)
    if not np.all(np.isfinite(rho)):
        raise StepFailure("non-finite density")
    v = momentum_step(problem, state, rho, dt, t_new)
    return type(state)(rho, v, t_new)


def _cfl_dt(problem, state, dt):
    sp = problem.space
    fl = sp.fields(state)
    u = fl.v + extension_on_grid(sp, problem.ext, state.time).u
    umax = float(np.sqrt(np.max(np.sum(u ** 2, axis=0))))
    if not np.isfinite(umax):
        raise StepFailure(f"non-finite velocity at t={state.time:.6g}")
    if umax > 0:
        dt = min(dt, problem.stepper.cfl_safety * problem.mesh_width / umax)
    return dt


def march_period(problem, initial, t0=0.0, periods=1):
    """March ``initial`` (at time ``t0``) over ``periods`` periods."""
    T = problem.period * periods
    cfg = problem.stepper
    dt_nominal = problem.period / cfg.steps_per_period
    state = initial.copy(time=t0)
    states, times = [state], [t0]
    t_end = t0 + T
    retries = 0
    n_step = 0
    while t_end - state.time > 1e-12 * T:
        dt = min(_cfl_dt(problem, state, dt_nominal), t_end - state.time)
        if t_end - (state.time + dt) < 1e-9 * dt_nominal:
            dt = t_end - state.time
        for attempt in range(cfg.max_retries + 1):
            try:
                new = step(problem, state, dt)
                break
            except NumericError as exc:
                if attempt == cfg.max_retries:
                    raise StepFailure(
                        f"step {n_step} at t={state.time:.6g} failed after {attempt} retries "
                        f"(dt={dt:.3e}, min rho={problem.space.fields(state).rho_min:.3e}): {exc}"
                    ) from exc
                dt *= 0.5
                retries += 1
                log.warning("step rejected at t=%.4g (%s); retrying with dt=%.3e",
                            state.time, exc, dt)
        if abs(new.time - t_end) < 1e-9 * dt_nominal:
            new.time = t_end
        state = new
        states.append(state)
        times.append(state.time)
        n_step += 1
    return Trajectory(states, times, retries)
