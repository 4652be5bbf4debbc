"""Per-mode tridiagonal elliptic solvers on the channel.

Both solvers transform the right-hand side with an x FFT and solve one
tridiagonal system per retained mode, with the mode coefficient k_eff taken
from the first-derivative convention (Nyquist zeroed) so that each solver is
an exact inverse of the discrete Laplacian ddx(ddx(.)) + d2z(.) under its
boundary conditions.
"""

import numpy as np

from . import kernels
from .errors import EllipticIncompatibility, FieldNotFinite, WallConstraintError
from .grid import ScalarField, ddx_values, ddz_values, _unwrap


def _mode_rhs(values, grid):
    """rfft of the rhs, stacked as real batch: first all real parts, then imag."""
    fh = np.fft.rfft(values, axis=0)
    return fh


def _assemble_batch(parts):
    return np.concatenate(parts, axis=0)


def poisson_dirichlet_values(rhs, grid):
    """Solve laplacian(psi) = rhs on interior nodes with psi = 0 at both walls."""
    Nz = grid.Nz
    dz2 = grid.dz * grid.dz
    fh = _mode_rhs(rhs, grid)
    nk = fh.shape[0]
    n = Nz - 2
    b = _assemble_batch([fh.real[:, 1:-1], fh.imag[:, 1:-1]])
    k2 = (grid.kx * grid.kx)[:, None]
    diag_modes = np.broadcast_to(-2.0 / dz2 - k2, (nk, n))
    dl = np.full((2 * nk, n), 1.0 / dz2)
    du = np.full((2 * nk, n), 1.0 / dz2)
    d = _assemble_batch([diag_modes, diag_modes])
    sol = kernels.solve_tridiag_batch(dl, d, du, b)
    psi_hat = np.zeros((nk, Nz), dtype=np.complex128)
    psi_hat[:, 1:-1] = sol[:nk] + 1j * sol[nk:]
    return np.fft.irfft(psi_hat, n=grid.Nx, axis=0)


def poisson_dirichlet(rhs):
    """ScalarField wrapper over poisson_dirichlet_values."""
    grid, v = _unwrap(rhs)
    out = poisson_dirichlet_values(v, grid)
    if not np.isfinite(out).all():
        raise FieldNotFinite("non-finite values produced by poisson_dirichlet")
    return ScalarField(grid, out)


def _neumann_mode_matrix(n, dz, k2):
    """Dense tridiagonal Neumann-Laplacian matrix for one mode (singular for k2=0)."""
    dz2 = dz * dz
    A = np.zeros((n, n))
    idx = np.arange(n)
    A[idx, idx] = -2.0 / dz2 - k2
    A[idx[:-1], idx[:-1] + 1] = 1.0 / dz2
    A[idx[1:], idx[1:] - 1] = 1.0 / dz2
    A[0, 1] = 2.0 / dz2
    A[n - 1, n - 2] = 2.0 / dz2
    return A


def poisson_neumann_values(rhs, flux_bottom, flux_top, grid, tol_compat=1e-8):
    """Solve laplacian(p) = rhs with d p/dz prescribed at both walls.

    Wall conditions enter through second-order ghost-node elimination.  The
    mean mode in x (and the Nyquist column, which carries k_eff = 0) is
    singular with the trapezoid weight vector as exact left null vector; its
    solvability defect is projected out (the standard mean correction), the
    minimal-norm solution taken, and the result gauged to zero quadrature
    mean.  The post-correction residual must stay below tol_compat times the
    data scale, otherwise the data are genuinely incompatible and an
    EllipticIncompatibility is raised.
    """
    Nz = grid.Nz
    dz = grid.dz
    dz2 = dz * dz
    fh = _mode_rhs(rhs, grid)
    gbh = np.fft.rfft(np.asarray(flux_bottom, dtype=np.float64))
    gth = np.fft.rfft(np.asarray(flux_top, dtype=np.float64))
    nk = fh.shape[0]

    b = fh.copy()
    b[:, 0] += (2.0 / dz) * gbh
    b[:, -1] -= (2.0 / dz) * gth

    k2 = grid.kx * grid.kx
    singular = k2 == 0.0
    p_hat = np.zeros((nk, Nz), dtype=np.complex128)

    # Regular modes: strictly diagonally dominant tridiagonal systems.
    reg = ~singular
    if np.any(reg):
        ks = k2[reg][:, None]
        nreg = int(np.sum(reg))
        d_modes = np.broadcast_to(-2.0 / dz2 - ks, (nreg, Nz))
        dl = np.full((2 * nreg, Nz), 1.0 / dz2)
        du = np.full((2 * nreg, Nz), 1.0 / dz2)
        dl[:, -1] = 2.0 / dz2
        du[:, 0] = 2.0 / dz2
        d = _assemble_batch([d_modes, d_modes])
        rb = _assemble_batch([b.real[reg], b.imag[reg]])
        sol = kernels.solve_tridiag_batch(dl, d, du, rb)
        p_hat[reg] = sol[:nreg] + 1j * sol[nreg:]

    # Singular modes: project the defect against the left null vector, solve
    # minimal-norm, gauge to zero weighted mean.
    w = np.full(Nz, 1.0)
    w[0] = 0.5
    w[-1] = 0.5
    A = _neumann_mode_matrix(Nz, dz, 0.0)
    bscale = max(1.0, float(np.max(np.abs(b))))
    for m in np.nonzero(singular)[0]:
        bm = b[m].copy()
        defect = np.dot(w, bm) / np.sum(w)
        bm -= defect
        sol, *_ = np.linalg.lstsq(A, np.column_stack([bm.real, bm.imag]), rcond=None)
        resid = A @ sol - np.column_stack([bm.real, bm.imag])
        rmax = float(np.max(np.abs(resid))) / bscale
        if rmax > tol_compat:
            raise EllipticIncompatibility(rmax, tol_compat)
        pm = sol[:, 0] + 1j * sol[:, 1]
        pm -= np.dot(w, pm) / np.sum(w)
        p_hat[m] = pm

    out = np.fft.irfft(p_hat, n=grid.Nx, axis=0)
    return out


def poisson_neumann(rhs, flux, tol_compat=1e-8):
    """ScalarField wrapper over poisson_neumann_values; flux is a BoundaryPair."""
    grid, v = _unwrap(rhs)
    out = poisson_neumann_values(v, flux.bottom, flux.top, grid, tol_compat)
    if not np.isfinite(out).all():
        raise FieldNotFinite("non-finite values produced by poisson_neumann")
    return ScalarField(grid, out)


def velocity_from_psi_values(psi, grid, tol_wall=1e-12):
    """u = -d psi/dz, w = d psi/dx after checking psi vanishes at both walls."""
    scale = max(1.0, float(np.max(np.abs(psi))))
    wall = max(float(np.max(np.abs(psi[:, 0]))), float(np.max(np.abs(psi[:, -1]))))
    if wall > tol_wall * scale:
        raise WallConstraintError(
            "streamfunction must vanish at the walls; max wall value %.3e "
            "exceeds %.3e" % (wall, tol_wall * scale)
        )
    u = -ddz_values(psi, grid)
    w = ddx_values(psi, grid)
    return u, w


def velocity_from_psi(psi, tol_wall=1e-12):
    """ScalarField wrapper over velocity_from_psi_values."""
    grid, v = _unwrap(psi)
    u, w = velocity_from_psi_values(v, grid, tol_wall)
    if not (np.isfinite(u).all() and np.isfinite(w).all()):
        raise FieldNotFinite("non-finite values produced by velocity_from_psi")
    return ScalarField(grid, u), ScalarField(grid, w)
