"""Constitutive laws and prescribed data.

Everything here is a pure function of its inputs.  Arrays broadcast, so the
same objects are used for pointwise checks and for evaluation on the full
quadrature grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, NumericError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _as_array(rho):
    return np.asarray(rho, dtype=float)


# ---------------------------------------------------------------------------
# pressure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HardSpherePressure:
    """Hard-sphere law ``p(rho) = a rho / (rho_max - rho)**beta``.

    Any object exposing ``rho_max``, ``pressure``, ``dpressure`` and
    ``primitive`` (an antiderivative of ``p(z)/z**2``) can replace it.
    """

    rho_max: float = 1.0
    beta: float = 3.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.rho_max <= 0 or self.amplitude <= 0:
            raise ConfigError("rho_max and amplitude must be positive")
        if self.beta < 3:
            raise ConfigError(f"beta must be >= 3, got {self.beta}")

    def _check(self, rho):
        rho = _as_array(rho)
        if np.any(rho < 0):
            raise DomainError("negative density")
        if np.any(rho >= self.rho_max):
            raise DomainError(f"density reaches the singular point rho_max={self.rho_max}")
        return rho

    def pressure(self, rho):
        rho = self._check(rho)
        return self.amplitude * rho / (self.rho_max - rho) ** self.beta

    def dpressure(self, rho):
        rho = self._check(rho)
        gap = self.rho_max - rho
        return self.amplitude * (gap ** -self.beta + self.beta * rho * gap ** (-self.beta - 1))

    def primitive(self, rho):
        """Antiderivative of ``p(z)/z**2`` (arbitrary constant), ``rho > 0``."""
        rho = self._check(rho)
        if np.any(rho <= 0):
            raise DomainError("primitive of p/z^2 needs rho > 0")
        beta = self.beta
        if float(beta).is_integer():
            b = int(beta)
            r = self.rho_max
            gap = r - rho
            out = r ** -b * np.log(rho) - r ** -b * np.log(gap)
            for j in range(2, b + 1):
                out = out + r ** (-(b - j + 1)) * gap ** (1 - j) / (j - 1)
            return self.amplitude * out
        # non-integer exponent: integrate from a fixed anchor
        anchor = 0.5 * self.rho_max
        f = lambda z: self.amplitude / (z * (self.rho_max - z) ** beta)
        vals = [integrate.quad(f, anchor, float(r), limit=200)[0] for r in np.ravel(rho)]
        return np.reshape(vals, np.shape(rho))


@dataclass(frozen=True)
class RegularizedPressure:
    """Truncated pressure: ``p + delta rho^2`` below ``rho_max - delta``,
    then a C^1 super-quadratic continuation of exponent ``gamma_exp``."""

    base: HardSpherePressure
    delta: float
    gamma_exp: float = 4.0

    def __post_init__(self):
        if not 0 < self.delta < 0.5 * self.base.rho_max:
            raise ConfigError(f"delta must lie in (0, rho_max/2), got {self.delta}")
        if self.gamma_exp <= 2:
            raise ConfigError("gamma_exp must exceed 2")

    @property
    def rho_max(self):
        return self.base.rho_max

    @property
    def junction(self):
        return self.base.rho_max - self.delta

    def _split(self, rho):
        rho = _as_array(rho)
        if np.any(rho < 0):
            raise DomainError("negative density")
        lo = rho <= self.junction
        return rho, lo

    def pressure(self, rho):
        rho, lo = self._split(rho)
        rj = self.junction
        out = np.empty_like(rho)
        out[lo] = self.base.pressure(rho[lo])
        s = rho[~lo] - rj
        out[~lo] = s ** self.gamma_exp + self.base.pressure(rj) + self.base.dpressure(rj) * s
        return out + self.delta * rho ** 2

    def dpressure(self, rho):
        rho, lo = self._split(rho)
        rj = self.junction
        out = np.empty_like(rho)
        out[lo] = self.base.dpressure(rho[lo])
        s = rho[~lo] - rj
        out[~lo] = self.gamma_exp * s ** (self.gamma_exp - 1) + self.base.dpressure(rj)
        return out + 2 * self.delta * rho

    def primitive(self, rho):
        rho, lo = self._split(rho)
        if np.any(rho <= 0):
            raise DomainError("primitive of p/z^2 needs rho > 0")
        rj = self.junction
        out = np.empty_like(rho)
        out[lo] = self.base.primitive(rho[lo])
        hi = rho[~lo]
        if hi.size:
            a, b = self.base.pressure(rj), self.base.dpressure(rj)
            # super-quadratic part by fixed Gauss-Legendre on [rj, rho]
            half = 0.5 * (hi - rj)
            z = rj + half[:, None] * (_GL_NODES + 1.0)
            gpart = half * ((z - rj) ** self.gamma_exp / z ** 2 @ _GL_WEIGHTS)
            out[~lo] = (self.base.primitive(rj) + gpart + a * (1 / rj - 1 / hi)
                        + b * (np.log(hi / rj) + rj / hi - 1))
        return out + self.delta * rho


@dataclass(frozen=True)
class PressurePotential:
    """Pressure potential ``P(rho) = rho * int_{rho_c}^{rho} p(z)/z^2 dz``.

    ``P(rho_c) = 0``; ``P' rho - P = p`` and ``P'' = p'/rho``.
    """

    pressure: object
    reference_density: float

    def __post_init__(self):
        if not 0 < self.reference_density < self.pressure.rho_max:
            raise ConfigError("reference density must lie in (0, rho_max)")

    def _offset(self):
        return float(self.pressure.primitive(self.reference_density))

    def __call__(self, rho):
        rho = _as_array(rho)
        out = np.zeros_like(rho)
        pos = rho > 0
        out[pos] = rho[pos] * (self.pressure.primitive(rho[pos]) - self._offset())
        if np.any(rho < 0):
            raise DomainError("negative density")
        return out

    def derivative(self, rho):
        rho = _as_array(rho)
        if np.any(rho <= 0):
            raise DomainError("P' is singular at rho = 0")
        return self.pressure.primitive(rho) - self._offset() + self.pressure.pressure(rho) / rho

    def rho_derivative(self, rho):
        """``rho * P'(rho) = P + p``, finite down to ``rho = 0``."""
        return self(rho) + self.pressure.pressure(rho)

    def second_derivative(self, rho, floor=1e-12):
        rho = np.maximum(_as_array(rho), floor)
        return self.pressure.dpressure(rho) / rho

    def by_quadrature(self, rho, rtol=1e-11):
        """Reference evaluation with adaptive quadrature (scalar ``rho``)."""
        rho = float(rho)
        if rho < 0:
            raise DomainError("negative density")
        if rho == 0:
            return 0.0
        f = lambda z: float(self.pressure.pressure(z)) / z ** 2
        pts = None
        junction = getattr(self.pressure, "junction", None)
        lo, hi = sorted((self.reference_density, rho))
        if junction is not None and lo < junction < hi:
            pts = [junction]
        val, err, info = integrate.quad(f, lo, hi, points=pts, epsrel=rtol, epsabs=0.0,
                                        limit=400, full_output=1)[:3]
        if err > max(1e-8 * abs(val), 1e-12):
            raise NumericError(f"potential quadrature did not converge (achieved {err:.2e})")
        return rho * (val if rho >= self.reference_density else -val)


# ---------------------------------------------------------------------------
# friction and viscosity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrictionPenalty:
    lambda_bar: float
    rho_max: float = 1.0

    def __call__(self, rho):
        return self.lambda_bar * np.maximum(_as_array(rho) - 1.5 * self.rho_max, 0.0)


@dataclass(frozen=True)
class ViscosityModel:
    mu: float = 1.0
    eta: float = 0.0
    dim: int = 2

    def __post_init__(self):
        if self.mu <= 0 or self.eta < 0:
            raise ConfigError("need mu > 0 and eta >= 0")

    def stress(self, grad_u):
        """Newtonian stress; ``grad_u[..., i, j] = d u_i / d x_j``."""
        g = np.asarray(grad_u, dtype=float)
        div = np.trace(g, axis1=-2, axis2=-1)[..., None, None]
        eye = np.eye(self.dim)
        return self.mu * (g + np.swapaxes(g, -1, -2) - (2.0 / self.dim) * div * eye) + self.eta * div * eye

    def dissipation(self, grad_u):
        """``S(grad u) : grad u``."""
        g = np.asarray(grad_u, dtype=float)
        return np.sum(self.stress(g) * g, axis=(-2, -1))


# ---------------------------------------------------------------------------
# boundary data, cutoff and extension (channel geometry, walls y=0 and y=H)
# ---------------------------------------------------------------------------

def _smoothstep7(t):
    """C^3 ramp from 0 to 1 on [0, 1] and its first three derivatives."""
    t = np.clip(t, 0.0, 1.0)
    r = t ** 4 * (35 - 84 * t + 70 * t ** 2 - 20 * t ** 3)
    r1 = 140 * t ** 3 * (1 - t) ** 3
    r2 = 420 * t ** 2 * (1 - t) ** 2 * (1 - 2 * t)
    r3 = 840 * t * (1 - t) * (1 - 5 * t + 5 * t ** 2)
    return r, r1, r2, r3


@dataclass(frozen=True)
class CutoffFunction:
    """Boundary-layer cutoff depending on the distance to the nearest wall.

    Equal to 1 within ``omega/4`` of a wall, 0 beyond ``omega``, with a C^3
    polynomial ramp in between.
    """

    omega: float
    height: float

    @property
    def breakpoints(self):
        w, h = self.omega, self.height
        return (0.0, 0.25 * w, w, h - w, h - 0.25 * w, h)

    def distance(self, y):
        y = _as_array(y)
        return np.minimum(y, self.height - y)

    def jet(self, y):
        """Return ``(d, d', d'', d''')`` with derivatives in ``y``."""
        y = _as_array(y)
        width = 0.75 * self.omega
        s = self.distance(y)
        sign = np.where(y <= 0.5 * self.height, 1.0, -1.0)
        r, r1, r2, r3 = _smoothstep7((s - 0.25 * self.omega) / width)
        return 1.0 - r, -r1 * sign / width, -r2 / width ** 2, -r3 * sign / width ** 3

    def __call__(self, y):
        return self.jet(y)[0]


def build_cutoff(domain, omega):
    height = getattr(domain, "height", domain)
    if not 0 < omega < 0.5 * height:
        raise ConfigError(f"omega must lie in (0, H/2) = (0, {0.5 * height}), got {omega}")
    return CutoffFunction(omega=float(omega), height=float(height))


@dataclass(frozen=True)
class BoundaryData:
    """Time-periodic channel data.

    * stream potential ``w_B = -(A/k) cos(k x + nu t)``, ``k = 2 pi m / L``
    * stabilising field ``v_B = (0, alpha (y + y0))``
    * inflow density ``rho_B = rho_b (1 + kappa cos(k x + nu t))``
    * body force ``g = (gx, gy)``

    ``nu = 2 pi / T``, or 0 when ``time_dependent`` is off.
    """

    period: float = 1.0
    length: float = 1.0
    height: float = 1.0
    alpha: float = 1.0
    inflow_offset: float = 0.5
    stream_amplitude: float = 0.6
    wavenumber: int = 1
    rho_b: float = 0.5
    rho_b_amplitude: float = 0.2
    gravity: tuple = (0.0, -0.5)
    time_dependent: bool = True

    @classmethod
    def zero(cls, period=1.0, length=1.0, height=1.0):
        return cls(period=period, length=length, height=height, alpha=0.0, inflow_offset=0.0,
                   stream_amplitude=0.0, rho_b=0.0, rho_b_amplitude=0.0, gravity=(0.0, 0.0))

    @property
    def k(self):
        return 2 * np.pi * self.wavenumber / self.length

    @property
    def nu(self):
        return 2 * np.pi / self.period if self.time_dependent else 0.0

    def phase(self, t, x):
        return self.k * _as_array(x) + self.nu * _as_array(t)

    def w_B(self, t, x, y=None):
        return -(self.stream_amplitude / self.k) * np.cos(self.phase(t, x))

    def v_B(self, t, x, y):
        y = _as_array(y)
        zero = np.zeros(np.broadcast(_as_array(t), _as_array(x), y).shape)
        return np.stack([zero, zero + self.alpha * (y + self.inflow_offset)])

    def rho_B(self, t, x):
        return self.rho_b * (1 + self.rho_b_amplitude * np.cos(self.phase(t, x)))

    def g(self, t, x, y):
        shape = np.broadcast(_as_array(t), _as_array(x), _as_array(y)).shape
        return np.stack([np.full(shape, float(self.gravity[0])), np.full(shape, float(self.gravity[1]))])

    def stream_jet(self, t, x):
        """x/t derivatives of ``w_B``: (w, w_x, w_xx, w_xxx, w_t, w_tx)."""
        a, k, nu = self.stream_amplitude, self.k, self.nu
        th = self.phase(t, x)
        s, c = np.sin(th), np.cos(th)
        return (-(a / k) * c, a * s, a * k * c, -a * k * k * s, (a * nu / k) * s, a * nu * c)

    def validate(self, rho_max, margin=1e-3):
        if self.period <= 0 or self.length <= 0 or self.height <= 0:
            raise ConfigError("period, length and height must be positive")
        if self.alpha < 0:
            raise ConfigError("alpha < 0: symmetric gradient of v_B is not positive semidefinite")
        if not 0 <= self.rho_b_amplitude <= 1 or self.rho_b < 0:
            raise ConfigError("rho_B must be nonnegative")
        top = self.rho_b * (1 + self.rho_b_amplitude)
        if top > rho_max - margin:
            raise ConfigError(f"rho_B reaches {top:g}; the inflow density must satisfy "
                              f"0 <= rho_B < rho_max = {rho_max:g} strictly (margin {margin:g})")


class ExtensionFields(NamedTuple):
    u: np.ndarray           # (2, ...)
    grad: np.ndarray        # (2, 2, ...), grad[i, j] = d u_i / d x_j
    dt_u: np.ndarray        # (2, ...)
    div: np.ndarray         # (...)
    div_stress: np.ndarray  # (2, ...)


@dataclass(frozen=True)
class VelocityExtension:
    """``u_B = perp-grad(d_omega w_B) + v_B`` inside the channel."""

    cutoff: CutoffFunction
    data: BoundaryData
    viscosity: ViscosityModel = field(default_factory=ViscosityModel)

    def evaluate(self, t, x, y):
        x, y = np.broadcast_arrays(_as_array(x), _as_array(y))
        d, d1, d2, d3 = self.cutoff.jet(y)
        w, wx, wxx, wxxx, wt, wtx = self.data.stream_jet(t, x)
        alpha = self.data.alpha
        vb = self.data.v_B(t, x, y)

        u = np.stack([-d1 * w, d * wx]) + vb
        grad = np.empty((2, 2) + x.shape)
        grad[0, 0] = -d1 * wx
        grad[0, 1] = -d2 * w
        grad[1, 0] = d * wxx
        grad[1, 1] = d1 * wx + alpha
        dt_u = np.stack([-d1 * wt, d * wtx])
        div = grad[0, 0] + grad[1, 1]
        lap = np.stack([-(d1 * wxx + d3 * w), d * wxxx + d2 * wx])
        # div S = mu lap u + (eta + mu - 2 mu/d) grad div u, and grad div u_B = 0
        # (the curl part is solenoidal, v_B is affine)
        div_stress = self.viscosity.mu * lap
        return ExtensionFields(u, grad, dt_u, div, div_stress)

    def max_gradient(self, n_t=16, n_x=64, n_y=257):
        """Sup norm of ``grad u_B`` sampled over a space-time grid."""
        x, y = np.meshgrid(np.linspace(0, self.data.length, n_x, endpoint=False),
                           np.linspace(0, self.data.height, n_y), indexing="ij")
        best = 0.0
        for tt in np.linspace(0, self.data.period, n_t, endpoint=False):
            g = self.evaluate(tt, x, y).grad
            best = max(best, float(np.max(np.sqrt(np.sum(g ** 2, axis=(0, 1))))))
        return best


@dataclass(frozen=True)
class Models:
    """Everything constitutive for one run, bundled for the solver."""

    pressure: HardSpherePressure
    pressure_reg: RegularizedPressure
    potential: PressurePotential          # potential of the regularized pressure
    viscosity: ViscosityModel
    friction: FrictionPenalty
    data: BoundaryData
    extension: VelocityExtension

    @property
    def rho_max(self):
        return self.pressure.rho_max
