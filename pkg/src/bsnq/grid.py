"""Grid, fields, and the discrete calculus on the channel.

The domain is [0, Lx) x [0, h]: periodic in x, solid walls at z = 0 and z = h.
Differentiation is Fourier collocation in x (the Nyquist mode of first
derivatives is zeroed, the standard convention that keeps d/dx skew-adjoint
on real data) and second-order centered finite differences in z with
one-sided second-order stencils at the walls.  Quadrature is the trapezoid
rule in z times the uniform (exact for trig polynomials) rule in x.

Fields are stored x-major: values[i, j] is the sample at (x_i, z_j).
"""

import numpy as np

from . import kernels
from .errors import FieldNotFinite, GridMismatch


class Grid:
    """Uniform tensor grid on [0, Lx) x [0, h].

    Parameters
    ----------
    Lx, h : float
        Domain length (periodic direction) and height (wall-bounded).
    Nx : int
        Number of x nodes, even, >= 4.  x_i = i * Lx / Nx (no duplicate seam).
    Nz : int
        Number of z nodes including both walls, >= 5.  z_j = j * h / (Nz - 1).
    """

    def __init__(self, Lx, h, Nx, Nz):
        if not (Lx > 0 and h > 0):
            raise ValueError("Lx and h must be positive, got Lx=%g h=%g" % (Lx, h))
        if Nx < 4 or Nx % 2 != 0:
            raise ValueError("Nx must be even and >= 4, got %d" % Nx)
        if Nz < 5:
            raise ValueError("Nz must be >= 5, got %d" % Nz)
        self.Lx = float(Lx)
        self.h = float(h)
        self.Nx = int(Nx)
        self.Nz = int(Nz)
        self.dx = self.Lx / self.Nx
        self.dz = self.h / (self.Nz - 1)
        self.x = np.arange(self.Nx) * self.dx
        self.z = np.arange(self.Nz) * self.dz
        # Wavenumbers of the first-derivative operator: Nyquist zeroed.
        k = 2.0 * np.pi * np.fft.rfftfreq(self.Nx, d=self.dx)
        k[-1] = 0.0
        self.kx = k
        # Trapezoid weights in z (include dz) and the full quadrature weight table.
        wz = np.full(self.Nz, self.dz)
        wz[0] *= 0.5
        wz[-1] *= 0.5
        self.wz = wz
        self.area = self.Lx * self.h

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and (self.Lx, self.h, self.Nx, self.Nz)
            == (other.Lx, other.h, other.Nx, other.Nz)
        )

    def __hash__(self):
        return hash((self.Lx, self.h, self.Nx, self.Nz))

    def __repr__(self):
        return "Grid(Lx=%g, h=%g, Nx=%d, Nz=%d)" % (self.Lx, self.h, self.Nx, self.Nz)


def build_grid(Lx, h, Nx, Nz):
    """Construct a validated Grid."""
    return Grid(Lx, h, Nx, Nz)


class ScalarField:
    """A scalar sample table bound to a grid; values shaped (Nx, Nz), x-major."""

    __slots__ = ("grid", "values")

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (grid.Nx, grid.Nz):
            raise GridMismatch(
                "field shape %s does not match grid (%d, %d)"
                % (values.shape, grid.Nx, grid.Nz)
            )
        self.grid = grid
        self.values = values

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    def __repr__(self):
        return "ScalarField(%r, max|.|=%g)" % (self.grid, np.max(np.abs(self.values)))


class BoundaryPair:
    """Wall data: one value per x node at the bottom (z=0) and top (z=h)."""

    __slots__ = ("grid", "bottom", "top")

    def __init__(self, grid, bottom, top):
        bottom = np.asarray(bottom, dtype=np.float64)
        top = np.asarray(top, dtype=np.float64)
        if bottom.shape != (grid.Nx,) or top.shape != (grid.Nx,):
            raise GridMismatch("boundary data must have shape (Nx,)")
        self.grid = grid
        self.bottom = bottom
        self.top = top


def _unwrap(f):
    if isinstance(f, ScalarField):
        return f.grid, f.values
    raise TypeError("expected a ScalarField, got %r" % type(f))


def _rewrap(grid, values, where):
    if not np.isfinite(values).all():
        raise FieldNotFinite("non-finite values produced by %s" % where)
    return ScalarField(grid, values)


def ddx_values(values, grid):
    """Spectral d/dx on a raw (Nx, Nz) array; Nyquist mode of the result is zero."""
    fh = np.fft.rfft(values, axis=0)
    fh *= 1j * grid.kx[:, None]
    return np.fft.irfft(fh, n=grid.Nx, axis=0)


def ddz_values(values, grid):
    """Finite-difference d/dz on a raw array, one-sided second order at walls."""
    return kernels.ddz(values, grid.dz)


def d2z_values(values, grid):
    """Finite-difference d2/dz2 on a raw array, one-sided second order at walls."""
    return kernels.d2z(values, grid.dz)


def laplacian_values(values, grid):
    """Discrete Laplacian: ddx applied twice plus the second-derivative stencil in z."""
    return ddx_values(ddx_values(values, grid), grid) + d2z_values(values, grid)


def ddx(f):
    """Spectral x derivative of a ScalarField."""
    grid, v = _unwrap(f)
    return _rewrap(grid, ddx_values(v, grid), "ddx")


def ddz(f, bc_hint="one_sided"):
    """z derivative of a ScalarField.

    bc_hint is 'one_sided' (second-order one-sided stencils at the walls, the
    default) or 'interior' (wall rows are zeroed; caller promises not to read
    them).
    """
    grid, v = _unwrap(f)
    out = ddz_values(v, grid)
    if bc_hint == "interior":
        out[:, 0] = 0.0
        out[:, -1] = 0.0
    elif bc_hint != "one_sided":
        raise ValueError("bc_hint must be 'one_sided' or 'interior'")
    return _rewrap(grid, out, "ddz")


def laplacian(f):
    """Discrete Laplacian of a ScalarField (interior rows pair exactly with the
    Poisson solvers; wall rows use one-sided stencils and are diagnostic-grade)."""
    grid, v = _unwrap(f)
    return _rewrap(grid, laplacian_values(v, grid), "laplacian")


def integrate_values(values, grid):
    """Quadrature of a raw array over the domain."""
    return grid.dx * float(np.sum(np.sum(values, axis=0) * grid.wz))


def integrate(f):
    """Quadrature of a ScalarField over the domain (trapezoid in z, exact in x)."""
    grid, v = _unwrap(f)
    return integrate_values(v, grid)


def inner(f, g):
    """L2 pairing of two ScalarFields under the domain quadrature."""
    gf, vf = _unwrap(f)
    gg, vg = _unwrap(g)
    if gf != gg:
        raise GridMismatch("inner product across different grids")
    return integrate_values(vf * vg, gf)


def norm_lq(f, q=2):
    """Discrete L^q norm, q >= 1."""
    grid, v = _unwrap(f)
    if q <= 0:
        raise ValueError("q must be positive")
    return integrate_values(np.abs(v) ** q, grid) ** (1.0 / q)


def bottom_integral(values_1d, grid):
    """Quadrature of wall data along z = 0 (uniform periodic rule)."""
    return grid.dx * float(np.sum(values_1d))


def dealias_values(values, grid):
    """Two-thirds-rule filter in x: zero modes with index > Nx // 3."""
    fh = np.fft.rfft(values, axis=0)
    fh[grid.Nx // 3 + 1:, :] = 0.0
    return np.fft.irfft(fh, n=grid.Nx, axis=0)
