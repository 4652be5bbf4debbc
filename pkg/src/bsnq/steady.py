"""Steady balanced states of the rotating stratified channel.

A steady state is built from a harmonic gravity potential Psi and a
stratification coefficient delta with grad(rho_s) = delta * grad(Psi):
the steady density rho_s is the primitive of that gradient field, the steady
meridional flow is v_s = a0 x + a1, and the steady pressure splits into a
periodic part p_s with grad(p_s) = -rho_s grad(Psi) + (0 component balanced)
plus the non-periodic column profile p0(x) = (f a0 / 2) x^2 + f a1 x that
carries the Coriolis force of v_s.  Existence of the periodic pieces needs
delta * grad(Psi) to be curl-free and x-integrable, which the validators
check before any solve.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .elliptic import poisson_neumann
from .errors import ConfigError, NonIntegrableGradient, PotentialNotHarmonic
from .grid import (
    BoundaryPair,
    ScalarField,
    d2z_values,
    ddx_values,
    ddz_values,
    integrate_values,
)

log = logging.getLogger(__name__)


class LinearZ:
    """Psi = g z: uniform gravity."""

    kind = "linear_z"

    def __init__(self, g=1.0):
        self.g = float(g)

    def sample(self, grid):
        shape = (grid.Nx, grid.Nz)
        Psi = np.broadcast_to(self.g * grid.z, shape).copy()
        Px = np.zeros(shape)
        Pz = np.full(shape, self.g)
        return Psi, Px, Pz

    def describe(self):
        return {"kind": self.kind, "g": self.g}


class HarmonicMode:
    """Psi = g z + eps exp(k z) cos(k x) with k = 2 pi m / Lx: a tilted-gravity
    harmonic perturbation of the uniform potential."""

    kind = "harmonic_mode"

    def __init__(self, g=1.0, eps=0.1, m=1):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.g = float(g)
        self.eps = float(eps)
        self.m = int(m)

    def sample(self, grid):
        k = 2.0 * np.pi * self.m / grid.Lx
        X = grid.x[:, None]
        Z = grid.z[None, :]
        E = np.exp(k * Z)
        Psi = self.g * Z + self.eps * E * np.cos(k * X)
        Px = -self.eps * k * E * np.sin(k * X)
        Pz = self.g + self.eps * k * E * np.cos(k * X)
        return Psi, Px, Pz

    def describe(self):
        return {"kind": self.kind, "g": self.g, "eps": self.eps, "m": self.m}


class TabulatedPotential:
    """Psi given as grid samples; gradients via the discrete operators."""

    kind = "table"

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def sample(self, grid):
        if self.values.shape != (grid.Nx, grid.Nz):
            raise ValueError("tabulated potential shape mismatch")
        Psi = self.values
        return Psi.copy(), ddx_values(Psi, grid), ddz_values(Psi, grid)

    def describe(self):
        return {"kind": self.kind}


class ConstantDelta:
    """delta = const."""

    kind = "constant"

    def __init__(self, value):
        self.value = float(value)

    def sample(self, grid, Psi):
        return np.full((grid.Nx, grid.Nz), self.value)

    def grad_structural(self, grid, Psi, Px_d, Pz_d):
        z = np.zeros((grid.Nx, grid.Nz))
        return z, z.copy()

    def describe(self):
        return {"kind": self.kind, "value": self.value}


class DeltaOfPsi:
    """delta = D(Psi) with D a polynomial, coefficients in increasing order."""

    kind = "of_psi"

    def __init__(self, coeffs):
        self.coeffs = [float(c) for c in coeffs]
        if not self.coeffs:
            raise ValueError("need at least one coefficient")

    def _poly(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def _dpoly(self, t):
        dcoef = np.polynomial.polynomial.polyder(self.coeffs)
        return np.polynomial.polynomial.polyval(t, dcoef)

    def sample(self, grid, Psi):
        return np.asarray(self._poly(Psi), dtype=np.float64)

    def grad_structural(self, grid, Psi, Px_d, Pz_d):
        dp = self._dpoly(Psi)
        return dp * Px_d, dp * Pz_d

    def describe(self):
        return {"kind": self.kind, "coeffs": self.coeffs}


class TabulatedDelta:
    """delta given as grid samples; no structural gradient available."""

    kind = "table"

    def __init__(self, values):
        self.values = np.asarray(values, dtype=np.float64)

    def sample(self, grid, Psi):
        if self.values.shape != (grid.Nx, grid.Nz):
            raise ValueError("tabulated delta shape mismatch")
        return self.values.copy()

    def describe(self):
        return {"kind": self.kind}


def validate_harmonic(pot, grid, tol=None):
    """Max discrete-Laplacian residual of Psi over interior nodes.

    Raises PotentialNotHarmonic when the residual exceeds tol; the default
    tolerance scales with the squared grid spacings and with the size of the
    two Laplacian halves whose cancellation is being tested.
    """
    Psi, _, _ = pot.sample(grid)
    dxx = ddx_values(ddx_values(Psi, grid), grid)
    dzz = d2z_values(Psi, grid)
    resid = float(np.max(np.abs((dxx + dzz)[:, 1:-1])))
    if tol is None:
        kappa = max(
            1.0,
            float(np.max(np.abs(dxx[:, 1:-1]))),
            float(np.max(np.abs(dzz[:, 1:-1]))),
        )
        tol = 10.0 * (grid.dx**2 + grid.dz**2) * kappa
    if resid > tol:
        raise PotentialNotHarmonic(
            "potential fails the harmonic check: residual %.3e > tol %.3e"
            % (resid, tol)
        )
    return resid


def validate_exactness(delta, pot, grid, structural=True):
    """Max curl of delta * grad(Psi), the obstruction to a steady density.

    With structural=True (default), coefficient kinds that know their own
    gradient (constant, function of Psi) use it, making the residual exactly
    zero; tabulated coefficients, and structural=False, fall back to discrete
    differentiation of the sampled coefficient.
    """
    Psi, Px, Pz = pot.sample(grid)
    Px_d = ddx_values(Psi, grid)
    Pz_d = ddz_values(Psi, grid)
    dv = delta.sample(grid, Psi)
    if structural and hasattr(delta, "grad_structural"):
        gx, gz = delta.grad_structural(grid, Psi, Px_d, Pz_d)
    else:
        gx, gz = ddx_values(dv, grid), ddz_values(dv, grid)
    curl = gx * Pz_d - gz * Px_d
    return float(np.max(np.abs(curl)))


def periodicity_defect(delta, pot, grid):
    """Max over z rows of the x average of delta * dPsi/dx.

    A nonzero value means the would-be density gradient has a nonzero mean
    slope in x, so no periodic primitive exists.
    """
    Psi, Px, _ = pot.sample(grid)
    dv = delta.sample(grid, Psi)
    return float(np.max(np.abs(np.mean(dv * Px, axis=0))))


def construct_rho_s(delta, pot, grid, rho_ref=0.0, tol_exact=1e-8):
    """Build the steady density: the primitive of delta * grad(Psi), anchored
    so that rho_s equals rho_ref at the node (x, z) = (0, 0).

    The primitive is recovered by solving the Neumann problem
    laplacian(rho) = div(delta grad Psi) with flux delta * dPsi/dz at the
    walls, which is exact for the gradient data produced here.
    """
    Psi, Px, Pz = pot.sample(grid)
    dv = delta.sample(grid, Psi)
    scale = max(1.0, float(np.max(np.abs(dv))) * max(
        1.0, float(np.max(np.abs(Px))), float(np.max(np.abs(Pz)))))
    curl = validate_exactness(delta, pot, grid)
    if curl > tol_exact * scale:
        raise NonIntegrableGradient(
            "delta * grad(Psi) is not curl-free: residual %.3e" % curl
        )
    defect = periodicity_defect(delta, pot, grid)
    if defect > tol_exact * scale:
        raise NonIntegrableGradient(
            "delta * dPsi/dx has nonzero x average (%.3e); no periodic "
            "steady density exists" % defect
        )
    fx = dv * Px
    fz = dv * Pz
    rhs = ScalarField(grid, ddx_values(fx, grid) + ddz_values(fz, grid))
    flux = BoundaryPair(grid, fz[:, 0], fz[:, -1])
    rho = poisson_neumann(rhs, flux)
    rho.values += rho_ref - rho.values[0, 0]
    return rho


def solve_p_s(delta, pot, grid, rho_s=None, rho_ref=0.0):
    """Periodic steady pressure: laplacian(p_s) = -delta |grad Psi|^2 with
    hydrostatic wall fluxes -rho_s dPsi/dz, gauged to zero quadrature mean.

    rho_s defaults to construct_rho_s(delta, pot, grid, rho_ref).
    """
    if rho_s is None:
        rho_s = construct_rho_s(delta, pot, grid, rho_ref)
    Psi, Px, Pz = pot.sample(grid)
    dv = delta.sample(grid, Psi)
    rhs = ScalarField(grid, -dv * (Px * Px + Pz * Pz))
    rv = rho_s.values
    flux = BoundaryPair(grid, -rv[:, 0] * Pz[:, 0], -rv[:, -1] * Pz[:, -1])
    return poisson_neumann(rhs, flux)


def p0_profile(f, a0, a1, x):
    """Non-periodic pressure column carrying the Coriolis force of v_s."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * f * a0 * x * x + f * a1 * x


@dataclass
class PhysicalParams:
    """Physical parameters: rotation f >= 0, viscosity nu > 0, Navier-slip
    drag alpha >= 0, background shear alpha0 (must equal the steady a0),
    and the energy-ledger weights gamma > 0 and offset beta."""

    f: float
    nu: float
    alpha: float
    alpha0: float = 0.0
    gamma: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if self.f < 0:
            raise ConfigError("params.f must be >= 0")
        if self.nu <= 0:
            raise ConfigError("params.nu must be > 0")
        if self.alpha < 0:
            raise ConfigError("params.alpha must be >= 0")
        if self.gamma <= 0:
            raise ConfigError("params.gamma must be > 0")
        if self.f == 0:
            log.info("f = 0: no rotation; the meridional field decouples")
        if self.alpha == 0:
            log.info("alpha = 0: free slip, no boundary vorticity production")


@dataclass
class SteadyState:
    """A constructed steady state with its sampled coefficient tables."""

    grid: object
    delta: object
    pot: object
    a0: float
    a1: float
    rho_ref: float
    rho_s: ScalarField
    p_s: ScalarField
    Psi: np.ndarray = field(repr=False)
    Psi_x: np.ndarray = field(repr=False)
    Psi_z: np.ndarray = field(repr=False)
    delta_values: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, grid, delta, pot, a0=0.0, a1=0.0, rho_ref=0.0):
        validate_harmonic(pot, grid)
        Psi, Px, Pz = pot.sample(grid)
        dv = delta.sample(grid, Psi)
        rho_s = construct_rho_s(delta, pot, grid, rho_ref)
        p_s = solve_p_s(delta, pot, grid, rho_s=rho_s)
        return cls(
            grid=grid, delta=delta, pot=pot, a0=float(a0), a1=float(a1),
            rho_ref=float(rho_ref), rho_s=rho_s, p_s=p_s,
            Psi=Psi, Psi_x=Px, Psi_z=Pz, delta_values=dv,
        )

    def v_s(self):
        """Sampled steady meridional flow a0 x + a1 (sawtooth in x if a0 != 0)."""
        g = self.grid
        return np.broadcast_to((self.a0 * g.x + self.a1)[:, None], (g.Nx, g.Nz)).copy()

    def delta_max(self):
        return float(np.max(self.delta_values))

    def delta_min(self):
        return float(np.min(self.delta_values))


def balance_residuals(ss):
    """Discrete residuals of the steady balance.

    r_geo: max |ddx(p_s) + rho_s dPsi/dx| (the periodic part of the
    geostrophic balance; the column profile p0 and f v_s cancel identically).
    r_hyd: max |ddz(p_s) + rho_s dPsi/dz| over interior rows.
    Both decay at second order in the wall-normal spacing.
    """
    grid = ss.grid
    px = ddx_values(ss.p_s.values, grid)
    pz = ddz_values(ss.p_s.values, grid)
    r_geo = float(np.max(np.abs(px + ss.rho_s.values * ss.Psi_x)))
    r_hyd = float(np.max(np.abs((pz + ss.rho_s.values * ss.Psi_z)[:, 1:-1])))
    return {"r_geo": r_geo, "r_hyd": r_hyd}


def steady_mean(field_values, grid):
    """Quadrature mean used as the pressure gauge."""
    return integrate_values(field_values, grid) / grid.area
