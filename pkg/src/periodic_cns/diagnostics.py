"""Energy and mass bookkeeping, trilinear bounds, Korn-Poincare constant,
density-overshoot metrics and weak-form residuals of computed trajectories.

Every function here is a pure function of a ``Problem`` and states; nothing
is mutated.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .discretization import (assemble_continuity_system, extension_on_grid,
                             momentum_terms, wall_rule)
from .errors import NumericError

# ledger terms on the left of the energy balance (nonnegative up to boundary supply)
LHS_TERMS = ("eps_term", "inflow_potential_flux", "outflow_potential_flux", "dissipation",
             "friction", "eps_kinetic", "convexity_remainder")
# and on the right
RHS_TERMS = ("trilinear_term", "pressure_dilation", "forcing_term", "projection_defect")
ENERGY_TERMS = ("energy",) + LHS_TERMS + RHS_TERMS
LEDGER_COLUMNS = ("step", "time", "dt") + ENERGY_TERMS + ("residual",)

RATIO_FLOOR = 1e-14


@dataclass(frozen=True)
class EnergyLedger:
    """One row of the discrete energy balance (rates averaged over the step)."""

    step: int
    time: float
    dt: float
    energy: float
    eps_term: float
    inflow_potential_flux: float
    outflow_potential_flux: float
    dissipation: float
    friction: float
    eps_kinetic: float
    convexity_remainder: float
    trilinear_term: float
    pressure_dilation: float
    forcing_term: float
    projection_defect: float
    residual: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in LEDGER_COLUMNS)


def total_energy(problem, state):
    """``E = int (eps + rho_+) |v|^2 / 2 + P_delta(rho_+)``."""
    sp = problem.space
    fl = sp.fields(state)
    rho = fl.rho_plus
    kin = 0.5 * (problem.eps + rho) * np.sum(fl.v ** 2, axis=0)
    return float(sp.integrate(kin + problem.models.potential(rho)))


def energy_terms(problem, state, t=None):
    """Instantaneous value of every term of the energy balance at ``state``."""
    sp, m, eps = problem.space, problem.models, problem.eps
    t = state.time if t is None else t
    fl = sp.fields(state)
    ub = extension_on_grid(sp, problem.ext, t)
    rho = fl.rho_plus
    v, gv = fl.v, fl.grad_v
    pot, preg = m.potential, m.pressure_reg
    v2 = np.sum(v ** 2, axis=0)

    P = pot(rho)
    p = preg.pressure(rho)
    out = {"energy": sp.integrate(0.5 * (eps + rho) * v2 + P)}
    grad_rho2 = np.sum(fl.grad_rho ** 2, axis=0)
    out["eps_term"] = eps * sp.integrate(P + p + pot.second_derivative(rho) * grad_rho2)

    wr = wall_rule(sp, problem.ext, t)
    un = wr.un
    rho_trace = wr.trace(state.density, sp.n_fourier)
    rho_w = np.maximum(rho_trace, 0.0)
    rho_b = problem.data.rho_B(t, wr.x)
    inflow = un < 0
    P_b, P_w = pot(rho_b), pot(rho_w)
    dP_w = pot.derivative(np.maximum(rho_w, 1e-12))
    out["inflow_potential_flux"] = wr.integrate(np.where(inflow, P_b * un, 0.0))
    out["outflow_potential_flux"] = wr.integrate(np.where(inflow, 0.0, P_w * un))
    remainder = P_b - dP_w * (rho_b - rho_w) - P_w
    out["convexity_remainder"] = -wr.integrate(np.where(inflow, remainder * un, 0.0))

    grad_last = np.moveaxis(gv, (0, 1), (-2, -1))
    out["dissipation"] = sp.integrate(m.viscosity.dissipation(grad_last))
    out["friction"] = sp.integrate(m.friction(rho) * v2)
    out["eps_kinetic"] = 0.5 * eps * sp.integrate(rho * v2)

    out["trilinear_term"] = -sp.integrate(rho * np.einsum("ixy,ijxy,jxy->xy", v, ub.grad, v))
    out["pressure_dilation"] = -sp.integrate(p * ub.div)
    g = problem.data.g(t, sp.x[:, None], sp.y[None, :])
    conv = np.einsum("kxy,ckxy->cxy", ub.u, ub.grad)
    force = rho * g - rho * ub.dt_u + ub.div_stress - rho * conv
    out["forcing_term"] = sp.integrate(np.sum(force * v, axis=0))
    out["projection_defect"] = _projection_defect(problem, fl, ub, wr, rho_trace, rho_b)
    return {k: float(val) for k, val in out.items()}


def _projection_defect(problem, fl, ub, wr, rho_trace, rho_b):
    """Energy rate lost to Galerkin truncation.

    The balance is obtained by testing the continuity equation with
    ``f = P'(rho) - |v|^2 / 2``, which is not in Y_n; the scheme only sees
    its projection.  Returns ``-G(f - Pi f)`` where ``G`` is the continuity
    rate functional, so that the remaining residual is a pure time defect.
    """
    sp, pot, eps = problem.space, problem.models.potential, problem.eps
    rho = np.maximum(fl.rho, 1e-12)
    f = pot.derivative(rho) - 0.5 * np.sum(fl.v ** 2, axis=0)
    grad_f = (pot.second_derivative(rho) * fl.grad_rho
              - np.einsum("ixy,ijxy->jxy", fl.v, fl.grad_v))
    coeffs = sp.project(f, "F", "L")
    pf, grad_pf, _ = sp.scalar_values(coeffs)
    h, grad_h = f - pf, grad_f - grad_pf
    # velocity vanishes on the walls
    h_wall = pot.derivative(np.maximum(rho_trace, 1e-12)) - wr.trace(coeffs, sp.n_fourier)
    u = fl.v + ub.u
    g = (sp.integrate(fl.rho * np.sum(u * grad_h, axis=0))
         - wr.integrate(rho_trace * np.maximum(wr.un, 0.0) * h_wall)
         - wr.integrate(rho_b * np.minimum(wr.un, 0.0) * h_wall)
         - eps * sp.integrate(fl.rho * h + np.sum(fl.grad_rho * grad_h, axis=0)))
    return -g


def ledger_step(problem, before, after, step=0, terms_before=None, terms_after=None):
    """Energy-ledger row for one step, rates evaluated at the half step
    (mean of both ends).  ``residual = dE/dt + LHS - RHS``."""
    a = terms_before if terms_before is not None else energy_terms(problem, before)
    b = terms_after if terms_after is not None else energy_terms(problem, after)
    dt = after.time - before.time
    row = {k: 0.5 * (a[k] + b[k]) for k in LHS_TERMS + RHS_TERMS}
    residual = ((b["energy"] - a["energy"]) / dt + sum(row[k] for k in LHS_TERMS)
                - sum(row[k] for k in RHS_TERMS))
    return EnergyLedger(step=step, time=after.time, dt=dt, energy=b["energy"],
                        residual=residual, **row)


def energy_ledger(problem, trajectory):
    terms = [energy_terms(problem, s) for s in trajectory.states]
    rows = []
    for k, (s0, s1) in enumerate(trajectory.steps()):
        rows.append(ledger_step(problem, s0, s1, k, terms[k], terms[k + 1]))
    return rows, terms


def ledger_violations(rows, c_led):
    """Steps whose residual leaves the band ``|residual| <= c_led * dt``."""
    return [r.step for r in rows if abs(r.residual) > c_led * r.dt]


def sign_violations(rows, tol=1e-12):
    """Steps breaking a sign invariant of the ledger: dissipation, friction,
    eps-kinetic, convexity remainder and outflow flux must be nonnegative."""
    names = ("dissipation", "friction", "eps_kinetic", "convexity_remainder",
             "outflow_potential_flux")
    bad = []
    for r in rows:
        scale = tol * max(1.0, abs(r.energy))
        if any(getattr(r, k) < -scale for k in names):
            bad.append(r.step)
    return bad


# ---------------------------------------------------------------------------
# mass
# ---------------------------------------------------------------------------

def total_mass(space, state):
    # the first scalar basis function is the normalised constant
    return float(state.density[0] * np.sqrt(space.domain.area))


def mass_ledger_step(problem, before, after):
    """Closure defect of the discrete mass balance over one step."""
    sp, eps = problem.space, problem.eps
    dt = after.time - before.time
    th = problem.stepper.theta
    mix = type(before)(th * after.density + (1 - th) * before.density, before.velocity, after.time)
    wr = wall_rule(sp, problem.ext, after.time)
    wall = wr.trace(mix.density, sp.n_fourier)
    rho_b = problem.data.rho_B(after.time, wr.x)
    flux = wr.integrate(wall * wr.un + (rho_b - wall) * np.minimum(wr.un, 0.0))
    m0, m1, mth = total_mass(sp, before), total_mass(sp, after), total_mass(sp, mix)
    return abs(m1 - m0 + dt * (eps * mth + flux))


def mass_ledger(problem, trajectory):
    return np.array([mass_ledger_step(problem, a, b) for a, b in trajectory.steps()])


# ---------------------------------------------------------------------------
# trilinear bounds
# ---------------------------------------------------------------------------

def _ratio(num, den):
    return num / den if den > RATIO_FLOOR else 0.0


def check_a6(problem, trajectory, terms=None):
    """Max over states of ``trilinear / (dissipation / 4)`` (0 when ``v = 0``)."""
    terms = terms or [energy_terms(problem, s) for s in trajectory.states]
    return max(_ratio(t["trilinear_term"], 0.25 * t["dissipation"]) for t in terms)


def check_f2(rows):
    """Max over ledger rows of ``trilinear / ((dissipation + friction) / 2)``."""
    if not rows:
        return 0.0
    return max(_ratio(r.trilinear_term, 0.5 * (r.dissipation + r.friction)) for r in rows)


def pressure_dilation_sign(terms, tol=1e-12):
    """True when every ``-int p div u_B`` entry is nonpositive."""
    return all(t["pressure_dilation"] <= tol for t in terms)


# ---------------------------------------------------------------------------
# Korn-Poincare
# ---------------------------------------------------------------------------

def estimate_korn_poincare(space, viscosity):
    """Discrete Korn-Poincare constant: ``1 / lambda_min`` of the pencil
    (dissipation matrix, H^1 Gram matrix) on X_n."""
    d = space.dissipation_matrix(viscosity)
    g = space.h1_gram()
    try:
        lam = linalg.eigh(d, g, eigvals_only=True, subset_by_index=[0, 0])[0]
    except linalg.LinAlgError as exc:
        raise NumericError("generalized eigensolve failed") from exc
    if lam <= 0:
        raise NumericError(f"dissipation form is not coercive (lambda_min={lam:.3e})")
    return 1.0 / lam


# ---------------------------------------------------------------------------
# density bounds
# ---------------------------------------------------------------------------

def _time_weights(times):
    t = np.asarray(times)
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += 0.5 * dt
    w[1:] += 0.5 * dt
    return w


def overshoot_metric(problem, trajectory):
    """Mass-time carried by ``{rho >= rho_max}`` relative to total mass-time."""
    sp, rmax = problem.space, problem.models.rho_max
    num = den = 0.0
    for w, s in zip(_time_weights(trajectory.times), trajectory.states):
        rho = sp.fields(s).rho_plus
        num += w * sp.integrate(np.where(rho >= rmax, rho, 0.0))
        den += w * sp.integrate(rho)
    return float(num / den) if den > 0 else 0.0


@dataclass(frozen=True)
class BoundsMonitor:
    rho_min: float
    rho_max: float
    overshoot: float
    pressure_integral: float
    kinetic_sup: float
    dissipation_integral: float


def bounds_monitor(problem, trajectory, terms=None):
    sp, preg = problem.space, problem.models.pressure_reg
    terms = terms or [energy_terms(problem, s) for s in trajectory.states]
    w = _time_weights(trajectory.times)
    lo, hi, press, kin = np.inf, -np.inf, 0.0, 0.0
    for wk, s in zip(w, trajectory.states):
        fl = sp.fields(s)
        lo = min(lo, fl.rho_min)
        hi = max(hi, float(fl.rho.max()), float(fl.rho_wall.max()))
        press += wk * sp.integrate(preg.pressure(fl.rho_plus))
        kin = max(kin, float(sp.integrate(fl.rho_plus * np.sum(fl.v ** 2, axis=0))))
    diss = float(np.dot(w, [t["dissipation"] for t in terms]))
    return BoundsMonitor(lo, hi, overshoot_metric(problem, trajectory), float(press), kin, diss)


# ---------------------------------------------------------------------------
# weak residuals
# ---------------------------------------------------------------------------

def random_test_fields(space, rng, count=4, period=1.0, max_frequency=2):
    """Smooth random space-time test functions ``psi(t) * phi(x)`` in Galerkin form.

    Returns a list of ``(psi, dpsi, scalar_coeffs, vector_coeffs)``.
    """
    n = space.n
    fx = np.r_[0, np.repeat(np.arange(1, n + 1), 2)]
    decay_s = np.exp(-(fx[:, None] + np.arange(n + 1)[None, :])).ravel()
    decay_v = np.tile(np.exp(-(fx[:, None] + np.arange(1, n + 1)[None, :])).ravel(), 2)
    out = []
    for _ in range(count):
        j = int(rng.integers(0, max_frequency + 1))
        phase = float(rng.uniform(0, 2 * np.pi))
        om = 2 * np.pi * j / period
        psi = (lambda t, om=om, ph=phase: np.cos(om * t + ph)) if j else (lambda t: 1.0)
        dpsi = (lambda t, om=om, ph=phase: -om * np.sin(om * t + ph)) if j else (lambda t: 0.0)
        out.append((psi, dpsi, rng.standard_normal(space.dim_scalar) * decay_s,
                    rng.standard_normal(space.dim_vector) * decay_v))
    return out


def weak_residuals(problem, trajectory, tests=None, rng=None, count=4):
    """Space-time weak residuals of the approximate continuity and momentum
    balances, with an implicit (right-endpoint) rule in time.

    For the constant test function the continuity residual is the summed
    mass-ledger defect.  Returns ``(continuity, momentum)`` maxima over tests.
    """
    sp, eps = problem.space, problem.eps
    if tests is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        tests = random_test_fields(sp, rng, count, problem.period)
    res_c = np.zeros(len(tests))
    res_m = np.zeros(len(tests))
    for (s0, s1) in trajectory.steps():
        dt, t1 = s1.time - s0.time, s1.time
        a, b = assemble_continuity_system(sp, s1, problem.ext, problem.data, eps, t1)
        fl0, fl1 = sp.fields(s0), sp.fields(s1)
        w0 = sp.weighted_form(eps + fl0.rho_plus, ("F", "S"), ("F", "S"))
        w1 = sp.weighted_form(eps + fl1.rho_plus, ("F", "S"), ("F", "S"))
        mom0 = np.concatenate([w0 @ c for c in s0.velocity.reshape(2, -1)])
        mom1 = np.concatenate([w1 @ c for c in s1.velocity.reshape(2, -1)])
        rhs = sum(momentum_terms(sp, s1, problem.models, problem.ext, eps, t=t1,
                                 fields=fl1).values())
        gain = a @ s1.density - b
        for k, (psi, dpsi, zc, wc) in enumerate(tests):
            p0, p1, dp1 = psi(s0.time), psi(t1), dpsi(t1)
            res_c[k] += (p1 * zc @ s1.density - p0 * zc @ s0.density
                         - dt * dp1 * zc @ s1.density + dt * p1 * zc @ gain)
            res_m[k] += (p1 * wc @ mom1 - p0 * wc @ mom0
                         - dt * dp1 * wc @ mom1 - dt * p1 * wc @ rhs)
    return float(np.max(np.abs(res_c))), float(np.max(np.abs(res_m)))


def constant_test_field(space):
    z = space.constant_density(1.0)
    return [(lambda t: 1.0, lambda t: 0.0, z, np.zeros(space.dim_vector))]
