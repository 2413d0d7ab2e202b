"""Channel geometry, tensor-product Galerkin spaces and assembly.

The channel is periodic in ``x`` with period ``L`` and bounded by walls at
``y = 0`` and ``y = H``.  Scalar (density) space ``Y_n``: real Fourier modes
up to ``n`` times normalised Legendre polynomials up to degree ``n``.
Vector (velocity) space ``X_n``: the same Fourier modes times ``sin(j pi y/H)``,
``j = 1..n``, for each of the two components.

All forms are assembled by sum factorisation over the tensor quadrature
(trapezoid in ``x``, composite Gauss-Legendre in ``y``).  Wall integrals
carry the upwind kink of ``max(u_B.n, 0)``; they use a separate rule split
at the zeros of ``u_B.n`` (see :func:`wall_rule`).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre
from scipy.optimize import brentq

from .errors import ConfigError, NumericError

log = logging.getLogger(__name__)

WALLS = (0, 1)            # bottom, top
WALL_NORMAL_Y = (-1.0, 1.0)


@dataclass(frozen=True)
class ChannelDomain:
    length: float = 1.0
    height: float = 1.0
    n_qx: int | None = None      # default 6n + 16 (nonlinear pressure integrands)
    n_qy: int | None = None      # points per unit height, default 3n + 12

    def __post_init__(self):
        if self.length <= 0 or self.height <= 0:
            raise ConfigError("channel length and height must be positive")

    @property
    def area(self):
        return self.length * self.height


def _fourier(n, length, x):
    """Orthonormal real Fourier modes [1, cos 1, sin 1, ...] and x-derivatives."""
    vals = [np.full_like(x, 1 / np.sqrt(length))]
    ders = [np.zeros_like(x)]
    c = np.sqrt(2 / length)
    for m in range(1, n + 1):
        k = 2 * np.pi * m / length
        vals += [c * np.cos(k * x), c * np.sin(k * x)]
        ders += [-c * k * np.sin(k * x), c * k * np.cos(k * x)]
    return np.array(vals), np.array(ders)


def _legendre(n, height, y):
    s = 2 * y / height - 1
    vals, ders = [], []
    for j in range(n + 1):
        coef = np.zeros(j + 1)
        coef[j] = np.sqrt((2 * j + 1) / height)
        vals.append(legendre.legval(s, coef))
        ders.append(legendre.legval(s, legendre.legder(coef)) * 2 / height)
    return np.array(vals), np.array(ders)


def _sines(n, height, y):
    j = np.arange(1, n + 1)[:, None]
    c = np.sqrt(2 / height)
    arg = j * np.pi * y[None, :] / height
    return c * np.sin(arg), c * (j * np.pi / height) * np.cos(arg)


def composite_gauss(breaks, density, minimum):
    """Gauss-Legendre nodes/weights on consecutive panels of ``breaks``."""
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        m = max(minimum, int(np.ceil(density * (b - a))))
        z, w = legendre.leggauss(m)
        nodes.append(0.5 * (b - a) * (z + 1) + a)
        weights.append(0.5 * (b - a) * w)
    return np.concatenate(nodes), np.concatenate(weights)


@dataclass
class State:
    """Density and velocity-perturbation coefficients at one instant."""

    density: np.ndarray
    velocity: np.ndarray
    time: float = 0.0

    def copy(self, time=None):
        return State(self.density.copy(), self.velocity.copy(),
                     self.time if time is None else time)

    def vector(self):
        return np.concatenate([self.density, self.velocity])

    def is_finite(self):
        return bool(np.all(np.isfinite(self.density)) and np.all(np.isfinite(self.velocity)))


@dataclass
class Fields:
    """Nodal values of a state; arrays have shape (Nx, Ny)."""

    rho: np.ndarray
    grad_rho: np.ndarray       # (2, Nx, Ny)
    v: np.ndarray              # (2, Nx, Ny)
    grad_v: np.ndarray         # (2, 2, Nx, Ny), [i, j] = d v_i / d x_j
    rho_wall: np.ndarray       # (2, Nx) density trace on the walls

    @property
    def rho_plus(self):
        return np.maximum(self.rho, 0.0)

    @property
    def rho_min(self):
        return float(min(self.rho.min(), self.rho_wall.min()))


@dataclass
class GalerkinSpace:
    domain: ChannelDomain
    n: int
    breakpoints: tuple = ()
    deterministic: bool = False
    tables: dict = field(init=False, repr=False)

    def __post_init__(self):
        n, dom = self.n, self.domain
        if n < 1:
            raise ConfigError("resolution n must be >= 1")
        nqx = dom.n_qx if dom.n_qx is not None else 6 * n + 16
        if nqx < 2 * n + 2:
            raise ConfigError(f"n_qx={nqx} too low for exact Gram matrices at n={n}")
        density = dom.n_qy if dom.n_qy is not None else 3 * n + 12
        breaks = sorted({0.0, dom.height, *[b for b in self.breakpoints if 0 < b < dom.height]})
        self.x = np.arange(nqx) * dom.length / nqx
        self.wx = np.full(nqx, dom.length / nqx)
        # narrow cutoff panels hold a degree-7 ramp: keep enough points on each
        self.y, self.wy = composite_gauss(np.array(breaks), density / dom.height,
                                          max(n + 2, 10))

        F, dF = _fourier(n, dom.length, self.x)
        L, dL = _legendre(n, dom.height, self.y)
        S, dS = _sines(n, dom.height, self.y)
        Lw = _legendre(n, dom.height, np.array([0.0, dom.height]))[0]   # (n+1, 2)
        self.tables = {"F": F, "dF": dF, "L": L, "dL": dL, "S": S, "dS": dS}
        self.wall_legendre = Lw.T                                       # (2, n+1)
        self._pairs = {}
        self._walls = {}

    # -- sizes ---------------------------------------------------------------
    @property
    def n_fourier(self):
        return 2 * self.n + 1

    @property
    def dim_scalar(self):
        return self.n_fourier * (self.n + 1)

    @property
    def dim_profile(self):
        return self.n_fourier * self.n

    @property
    def dim_vector(self):
        return 2 * self.dim_profile

    @property
    def shape(self):
        return self.x.size, self.y.size

    def zero_state(self, time=0.0):
        return State(np.zeros(self.dim_scalar), np.zeros(self.dim_vector), time)

    def constant_density(self, value):
        """Coefficients of the constant function ``value``."""
        c = np.zeros(self.dim_scalar)
        c[0] = value * np.sqrt(self.domain.area)
        return c

    # -- quadrature helpers ----------------------------------------------------
    def integrate(self, f):
        """Volume integral of nodal values ``f`` (..., Nx, Ny)."""
        if self.deterministic:
            return np.sum(np.sum(f * self.wy, axis=-1) * self.wx, axis=-1)
        return np.einsum("...ij,i,j->...", f, self.wx, self.wy)

    def project(self, f, xa="F", ya="L"):
        """Load vector ``int f * (xa (x) ya)`` as a flat vector."""
        fx, fy = self.tables[xa], self.tables[ya]
        return (fx @ (f * self.wx[:, None] * self.wy[None, :]) @ fy.T).ravel()

    def _pair(self, a, b, axis):
        key = (a, b, axis)
        if key not in self._pairs:
            ta, tb = self.tables[a], self.tables[b]
            w = self.wx if axis == "x" else self.wy
            self._pairs[key] = (ta[:, None, :] * tb[None, :, :] * w).reshape(-1, w.size)
        return self._pairs[key]

    def weighted_form(self, f, test=("F", "L"), trial=("F", "L")):
        """Matrix ``M[i, j] = int f * test_i * trial_j`` for tensor bases."""
        (ax, ay), (bx, by) = test, trial
        nax, nbx = self.tables[ax].shape[0], self.tables[bx].shape[0]
        nay, nby = self.tables[ay].shape[0], self.tables[by].shape[0]
        px = self._pair(ax, bx, "x")                    # (nax*nbx, Nx)
        py = self._pair(ay, by, "y")                    # (nay*nby, Ny)
        f = np.broadcast_to(f, self.shape)
        m = (px @ f) @ py.T                             # (nax*nbx, nay*nby)
        m = m.reshape(nax, nbx, nay, nby).transpose(0, 2, 1, 3)
        return m.reshape(nax * nay, nbx * nby)

    # -- reconstruction --------------------------------------------------------
    def scalar_values(self, coeffs):
        c = coeffs.reshape(self.n_fourier, self.n + 1)
        t = self.tables
        val = t["F"].T @ c @ t["L"]
        grad = np.stack([t["dF"].T @ c @ t["L"], t["F"].T @ c @ t["dL"]])
        wall = (t["F"].T @ c @ self.wall_legendre.T).T        # (2, Nx)
        return val, grad, wall

    def vector_values(self, coeffs):
        t = self.tables
        c = coeffs.reshape(2, self.n_fourier, self.n)
        val = np.stack([t["F"].T @ ci @ t["S"] for ci in c])
        grad = np.stack([np.stack([t["dF"].T @ ci @ t["S"], t["F"].T @ ci @ t["dS"]]) for ci in c])
        return val, grad

    def fields(self, state):
        rho, grad_rho, wall = self.scalar_values(state.density)
        v, grad_v = self.vector_values(state.velocity)
        return Fields(rho, grad_rho, v, grad_v, wall)

    def project_vector(self, force, flux=None):
        """Load vector ``int force . phi + flux : grad phi`` on X_n.

        ``force`` has shape (2, Nx, Ny), ``flux`` (2, 2, Nx, Ny).
        """
        out = []
        for c in range(2):
            b = self.project(force[c], "F", "S")
            if flux is not None:
                b = b + self.project(flux[c, 0], "dF", "S") + self.project(flux[c, 1], "F", "dS")
            out.append(b)
        return np.concatenate(out)

    # -- constant matrices -----------------------------------------------------
    @cached_property
    def scalar_mass(self):
        return self.weighted_form(1.0)

    @cached_property
    def scalar_stiffness(self):
        return (self.weighted_form(1.0, ("dF", "L"), ("dF", "L"))
                + self.weighted_form(1.0, ("F", "dL"), ("F", "dL")))

    @cached_property
    def profile_mass(self):
        return self.weighted_form(1.0, ("F", "S"), ("F", "S"))

    @cached_property
    def _profile_grads(self):
        names = {0: ("dF", "S"), 1: ("F", "dS")}
        return {(p, q): self.weighted_form(1.0, names[p], names[q]) for p in (0, 1) for q in (0, 1)}

    @cached_property
    def vector_mass(self):
        return block_diag2(self.profile_mass)

    @cached_property
    def vector_stiffness(self):
        g = self._profile_grads
        return block_diag2(g[0, 0] + g[1, 1])

    def dissipation_matrix(self, viscosity):
        """``D[i, j] = int S(grad phi_j) : grad phi_i`` on X_n."""
        g = self._profile_grads
        mu, lam = viscosity.mu, viscosity.eta - 2 * viscosity.mu / viscosity.dim
        lap = g[0, 0] + g[1, 1]
        blocks = [[None, None], [None, None]]
        for ct in (0, 1):           # test component
            for cr in (0, 1):       # trial component
                blk = mu * g[cr, ct] + lam * g[ct, cr]
                if ct == cr:
                    blk = blk + mu * lap
                blocks[ct][cr] = blk
        return np.block(blocks)

    def h1_gram(self):
        return self.vector_mass + self.vector_stiffness


def block_diag2(a):
    z = np.zeros_like(a)
    return np.block([[a, z], [z, a]])


def build_spaces(domain, n, breakpoints=(), deterministic=False):
    return GalerkinSpace(domain, int(n), tuple(breakpoints), deterministic)


# ---------------------------------------------------------------------------
# boundary data on the quadrature
# ---------------------------------------------------------------------------

def _normal_velocity(ext, t, x, wall, height):
    y = np.full_like(x, height if wall else 0.0)
    return WALL_NORMAL_Y[wall] * ext.evaluate(t, x, y).u[1]


def wall_normal_velocity(space, ext, t):
    """``u_B . n`` at the grid nodes of both walls, shape (2, Nx)."""
    H = space.domain.height
    return np.array([_normal_velocity(ext, t, space.x, w, H) for w in WALLS])


def boundary_partition(space, ext, t):
    """Boolean masks (inflow, outflow) over the wall grid nodes, shape (2, Nx)."""
    un = wall_normal_velocity(space, ext, t)
    return un < 0, un >= 0


@dataclass
class WallRule:
    """Quadrature on both walls, flattened: node ``k`` sits on wall ``side[k]``.

    Panels end at the sign changes of ``u_B.n``, so inflow/outflow integrands
    are smooth on each panel.
    """

    x: np.ndarray
    w: np.ndarray
    side: np.ndarray
    un: np.ndarray
    F: np.ndarray          # Fourier table (2n+1, M)
    lw: np.ndarray         # Legendre wall values (M, n+1)

    def integrate(self, f):
        return float(np.sum(f * self.w))

    def trace(self, coeffs, n_fourier):
        c = coeffs.reshape(n_fourier, -1)
        return np.einsum("aj,am,mj->m", c, self.F, self.lw)

    def on(self, wall):
        return self.side == wall


def _sign_changes(f, a, b, samples):
    xs = np.linspace(a, b, samples + 1)
    fs = f(xs)
    roots = []
    for i in range(samples):
        if fs[i] == 0.0:
            roots.append(xs[i])
        elif fs[i] * fs[i + 1] < 0:
            roots.append(brentq(f, xs[i], xs[i + 1], xtol=1e-15))
    return roots


def wall_rule(space, ext, t):
    """Composite Gauss rule on the walls, split at the zeros of ``u_B.n``."""
    if not ext.data.time_dependent:
        t = 0.0
    key = (id(ext), float(t))
    hit = space._walls.get(key)
    if hit is not None and hit[0] is ext:
        return hit[1]
    dom, n = space.domain, space.n
    nqx = space.x.size
    xs, ws, sides = [], [], []
    for wall in WALLS:
        def f(x, wall=wall):
            val = _normal_velocity(ext, t, np.atleast_1d(np.asarray(x, float)), wall, dom.height)
            return val if np.ndim(x) else float(val[0])
        roots = _sign_changes(f, 0.0, dom.length, 8 * nqx)
        breaks = np.unique(np.concatenate([[0.0, dom.length], roots]))
        x, w = composite_gauss(breaks, 3 * nqx / dom.length, n + 8)
        xs.append(x)
        ws.append(w)
        sides.append(np.full(x.size, wall))
    x, w, side = np.concatenate(xs), np.concatenate(ws), np.concatenate(sides)
    un = np.concatenate([_normal_velocity(ext, t, xi, wall, dom.height)
                         for wall, xi in zip(WALLS, xs)])
    F = _fourier(n, dom.length, x)[0]
    rule = WallRule(x, w, side, un, F, space.wall_legendre[side])
    if len(space._walls) > 4096:
        space._walls.clear()
    space._walls[key] = (ext, rule)
    return rule


def extension_on_grid(space, ext, t):
    return ext.evaluate(t, space.x[:, None], space.y[None, :])


# ---------------------------------------------------------------------------
# continuity
# ---------------------------------------------------------------------------

def assemble_continuity_system(space, state, ext, data, eps, t, fields=None, ub=None):
    """Return ``(A, b)`` with ``d(rho)/dt + A rho = b`` in coefficient form.

    The transport term is used in its integrated-by-parts form
    ``-int rho u.grad(phi) + oint rho u_B.n phi``, so that the constant test
    function gives the mass balance exactly.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    fl = fields if fields is not None else space.fields(state)
    ub = ub if ub is not None else extension_on_grid(space, ext, t)
    u = fl.v + ub.u
    transport = -(space.weighted_form(u[0], ("dF", "L"), ("F", "L"))
                  + space.weighted_form(u[1], ("F", "dL"), ("F", "L")))
    wr = wall_rule(space, ext, t)
    out_w = wr.w * np.maximum(wr.un, 0.0)
    in_w = wr.w * np.minimum(wr.un, 0.0) * data.rho_B(t, wr.x)
    bnd = np.zeros_like(transport)
    rhs = np.zeros(space.dim_scalar)
    for w in WALLS:
        k = wr.on(w)
        F, lw = wr.F[:, k], space.wall_legendre[w]
        bnd += np.kron((F * out_w[k]) @ F.T, np.outer(lw, lw))
        rhs -= np.kron(F @ in_w[k], lw)
    a = transport + bnd + eps * (space.scalar_mass + space.scalar_stiffness)
    return a, rhs


# ---------------------------------------------------------------------------
# momentum
# ---------------------------------------------------------------------------

MOMENTUM_TERMS = ("convection", "pressure", "dissipation", "boundary_coupling",
                  "eps_gradient", "eps_reaction", "body_force", "friction")


def momentum_terms(space, state, models, ext, eps, delta=None, t=None, fields=None, ub=None,
                   terms=MOMENTUM_TERMS):
    """Load vectors of each right-hand-side term of the Galerkin momentum balance.

    Nonlinearities are evaluated at ``max(rho, 0)``.
    """
    if eps <= 0:
        raise ConfigError("eps must be positive")
    t = state.time if t is None else t
    fl = fields if fields is not None else space.fields(state)
    ub = ub if ub is not None else extension_on_grid(space, ext, t)
    rho = fl.rho_plus
    if fl.rho.min() < -1e-8:
        log.debug("negative density reconstruction, min %.3e", fl.rho.min())
    v, gv = fl.v, fl.grad_v
    u = v + ub.u
    zero = np.zeros_like(v)
    out = {}
    for name in terms:
        if name == "convection":
            out[name] = space.project_vector(zero, rho * v[:, None] * u[None, :])
        elif name == "pressure":
            p = models.pressure_reg.pressure(rho)
            flux = np.zeros_like(gv)
            flux[0, 0] = flux[1, 1] = p
            out[name] = space.project_vector(zero, flux)
        elif name == "dissipation":
            s = models.viscosity.stress(np.moveaxis(gv, (0, 1), (-2, -1)))
            out[name] = space.project_vector(zero, -np.moveaxis(s, (-2, -1), (0, 1)))
        elif name == "boundary_coupling":
            conv = np.einsum("kxy,ckxy->cxy", u, ub.grad)
            out[name] = space.project_vector(-rho * ub.dt_u - rho * conv + ub.div_stress)
        elif name == "eps_gradient":
            out[name] = space.project_vector(-eps * np.einsum("kxy,ckxy->cxy", fl.grad_rho, gv))
        elif name == "eps_reaction":
            out[name] = space.project_vector(-eps * rho * v)
        elif name == "body_force":
            g = models.data.g(t, space.x[:, None], space.y[None, :])
            out[name] = space.project_vector(rho * g)
        elif name == "friction":
            out[name] = space.project_vector(-models.friction(rho) * v)
        else:
            raise KeyError(name)
    return out


def assemble_momentum_rhs(space, state, models, ext, eps, delta=None, t=None):
    """Full right-hand side of the Galerkin momentum balance, one entry per basis function."""
    return sum(momentum_terms(space, state, models, ext, eps, delta, t).values())


def assemble_mass_operator(space, state, eps, fields=None, check=True):
    """``int (eps + rho) phi_i . phi_j`` on X_n (block diagonal)."""
    if eps <= 0:
        raise ConfigError("eps must be positive")
    fl = fields if fields is not None else space.fields(state)
    w = space.weighted_form(eps + fl.rho_plus, ("F", "S"), ("F", "S"))
    m = block_diag2(w)
    if check:
        try:
            np.linalg.cholesky(w)
        except np.linalg.LinAlgError as exc:
            raise NumericError("weighted mass operator lost positive definiteness") from exc
    return m
