"""Variational stability classification of a steady state.

For divergence-free in-plane velocities u = (u, w) derived from a
streamfunction that vanishes at the walls, three quadratic forms are
discretized on the interior streamfunction values:

  J(psi)  = int |u|^2                                   (mass matrix B)
  E1(psi) = int |grad u|^2 + alpha int_{z=0} u^2        (dissipation, A1)
  E2(psi) = int delta (u . grad Psi)^2
            - f (alpha0 + f) int u^2                    (forcing, A2)

alpha(s) is the smallest eigenvalue of the pencil (s nu A1 - A2, B); it is
continuous and strictly increasing in s.  The dispersion function
Phi(s) = -s^2 - alpha(s) is strictly decreasing; a positive root s* means the
linearized dynamics has a growing mode with rate lambda0 = s*, while
alpha(s) >= 0 for all s (equivalently, the forcing form nonpositive on all
candidates) means spectral stability.

Assembly composes sparse Kronecker factors of the same one-dimensional
operators the rest of the package uses, so the forms agree with direct
quadrature of fields to round-off.  When delta and grad(Psi) do not vary in
x, the pencil block-diagonalizes per x mode and a cheap per-mode dense route
applies; a full dense route (coarse grids) and an iterative route (Lanczos
with LOBPCG fallback, deterministic starts) cover the rest.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import velocity_from_psi_values
from .errors import EigensolverError
from .grid import ScalarField, ddx_values, integrate_values

log = logging.getLogger(__name__)

DENSE_LIMIT = 1500
SPARSE_LIMIT = 70 * 66


def _dx_matrix(grid):
    """Dense spectral first-derivative matrix acting on x columns."""
    return ddx_values(np.eye(grid.Nx), grid)


def _dz_matrix(Nz, dz):
    """Dense first-derivative matrix in z matching the ddz stencils."""
    D = np.zeros((Nz, Nz))
    inv2 = 1.0 / (2.0 * dz)
    D[0, 0:3] = np.array([-3.0, 4.0, -1.0]) * inv2
    for j in range(1, Nz - 1):
        D[j, j - 1] = -inv2
        D[j, j + 1] = inv2
    D[Nz - 1, Nz - 3:Nz] = np.array([1.0, -4.0, 3.0]) * inv2
    return D


@dataclass
class QuadraticForms:
    """Assembled pencil pieces.

    A1, A2, B act on interior streamfunction values flattened x-major
    (index = i * (Nz - 2) + (j - 1)); they are None beyond the sparse
    assembly cap.  blocks holds the per-x-mode dense route when the
    coefficients allow it.
    """

    grid: object
    nu: float
    f: float
    alpha: float
    alpha0: float
    n: int
    A1: object = field(repr=False, default=None)
    A2: object = field(repr=False, default=None)
    B: object = field(repr=False, default=None)
    blocks: object = field(repr=False, default=None)


def _sym_sp(A):
    return ((A + A.T) * 0.5).tocsr()


def _sym_np(A):
    return (A + A.T) * 0.5


def assemble_forms(ss, params):
    """Assemble (A1, A2, B) for a steady state; exactly symmetric."""
    grid = ss.grid
    Nx, Nz = grid.Nx, grid.Nz
    n = Nx * (Nz - 2)

    blocks = _assemble_blocks(ss, params)
    if n > SPARSE_LIMIT and blocks is None:
        raise EigensolverError(
            "full-grid form assembly is capped at %d interior unknowns "
            "(got %d) and the coefficients vary in x, so the per-mode route "
            "is unavailable; classify on a coarser grid" % (SPARSE_LIMIT, n)
        )

    A1 = A2 = B = None
    if n <= SPARSE_LIMIT:
        Dx = sp.csr_matrix(_dx_matrix(grid))
        Dz = sp.csr_matrix(_dz_matrix(Nz, grid.dz))
        Ix = sp.identity(Nx, format="csr")
        Iz = sp.identity(Nz, format="csr")
        cols = np.arange(n)
        i_idx = cols // (Nz - 2)
        j_idx = cols % (Nz - 2) + 1
        E = sp.csr_matrix(
            (np.ones(n), (i_idx * Nz + j_idx, cols)), shape=(Nx * Nz, n)
        )
        DxF = sp.kron(Dx, Iz, format="csr")
        DzF = sp.kron(Ix, Dz, format="csr")
        U = (-DzF) @ E
        W = DxF @ E
        wq = np.repeat(np.full(Nx, grid.dx), Nz) * np.tile(grid.wz, Nx)
        Wq = sp.diags(wq)
        bmask = np.zeros(Nx * Nz)
        bmask[0::Nz] = grid.dx
        Bb = sp.diags(bmask)

        GxU = DxF @ U
        GzU = DzF @ U
        GxW = DxF @ W
        GzW = DzF @ W
        A1 = _sym_sp(
            GxU.T @ Wq @ GxU
            + GzU.T @ Wq @ GzU
            + GxW.T @ Wq @ GxW
            + GzW.T @ Wq @ GzW
            + params.alpha * (U.T @ Bb @ U)
        )
        B = _sym_sp(U.T @ Wq @ U + W.T @ Wq @ W)
        M = sp.diags(ss.Psi_x.reshape(-1)) @ U + sp.diags(ss.Psi_z.reshape(-1)) @ W
        Wd = sp.diags(wq * ss.delta_values.reshape(-1))
        A2 = _sym_sp(
            M.T @ Wd @ M
            - (params.f * (params.f + params.alpha0)) * (U.T @ Wq @ U)
        )

    return QuadraticForms(
        grid=grid, nu=params.nu, f=params.f, alpha=params.alpha,
        alpha0=params.alpha0, n=n, A1=A1, A2=A2, B=B, blocks=blocks,
    )


def _assemble_blocks(ss, params):
    """Per-x-mode dense forms when delta and grad(Psi) are x-independent."""
    grid = ss.grid
    if float(np.max(np.abs(ss.Psi_x))) != 0.0:
        return None
    if np.any(ss.Psi_z != ss.Psi_z[0:1, :]) or np.any(
        ss.delta_values != ss.delta_values[0:1, :]
    ):
        return None
    Nz = grid.Nz
    nin = Nz - 2
    Dz = _dz_matrix(Nz, grid.dz)
    Ez = np.zeros((Nz, nin))
    Ez[1:-1, :] = np.eye(nin)
    Uk = -(Dz @ Ez)
    DzUk = Dz @ Uk
    Wz = np.diag(grid.wz)
    pz = ss.Psi_z[0, :]
    dcoef = ss.delta_values[0, :]
    Wz_dpz2 = np.diag(grid.wz * dcoef * pz * pz)

    base_gz = DzUk.T @ Wz @ DzUk
    base_u = Uk.T @ Wz @ Uk
    base_g = Ez.T @ Wz @ Ez
    bdry = np.outer(Uk[0, :], Uk[0, :])
    a2_buoy = Ez.T @ Wz_dpz2 @ Ez
    f2 = params.f * (params.f + params.alpha0)

    blocks = []
    for m in range(grid.Nx // 2 + 1):
        k = grid.kx[m]
        k2 = k * k
        A1k = base_gz + 2.0 * k2 * base_u + k2 * k2 * base_g + params.alpha * bdry
        Bk = base_u + k2 * base_g
        A2k = k2 * a2_buoy - f2 * base_u
        blocks.append((_sym_np(A1k), _sym_np(A2k), _sym_np(Bk), m, k))
    return blocks


def _alpha_dense_pair(A, B):
    evals, evecs = sla.eigh(A, B, subset_by_index=[0, 0])
    return float(evals[0]), evecs[:, 0]


def _alpha_blocked(forms, s):
    best = None
    for A1k, A2k, Bk, m, _k in forms.blocks:
        val, vec = _alpha_dense_pair(s * forms.nu * A1k - A2k, Bk)
        if best is None or val < best[0]:
            best = (val, vec, m)
    return best[0], ("block", best[2], best[1])


def _alpha_dense(forms, s):
    C = (s * forms.nu) * forms.A1 - forms.A2
    val, vec = _alpha_dense_pair(C.toarray(), forms.B.toarray())
    return val, ("full", None, vec)


def _deterministic_start(n, ncols=3):
    rng = np.random.default_rng(1234577)
    X = rng.standard_normal((n, ncols))
    X[:, 0] = 1.0 + np.sin(np.linspace(0.0, 3.0, n))
    return X


def _alpha_iterative(forms, s, warm=None, tol=1e-11, maxiter=5000):
    C = ((s * forms.nu) * forms.A1 - forms.A2).tocsc()
    B = forms.B.tocsc()
    n = C.shape[0]
    try:
        val, vec = spla.eigsh(
            C, k=1, M=B, which="SA", v0=warm, tol=tol, maxiter=maxiter
        )
        val = float(val[0])
        vec = vec[:, 0]
    except (spla.ArpackError, RuntimeError) as exc:
        log.info("eigsh failed (%s); falling back to LOBPCG", exc)
        X = _deterministic_start(n)
        if warm is not None:
            X[:, 0] = warm
        vals, vecs = spla.lobpcg(
            C, X, B=B, largest=False, tol=1e-12, maxiter=maxiter
        )
        order = np.argsort(vals)
        val = float(vals[order[0]])
        vec = vecs[:, order[0]]
    r = C @ vec - val * (B @ vec)
    scale = float(np.linalg.norm(B @ vec)) * max(1.0, abs(val))
    resid = float(np.linalg.norm(r)) / max(scale, 1e-300)
    if resid > 1e-6:
        raise EigensolverError(
            "iterative eigensolver residual %.3e too large at s=%g" % (resid, s)
        )
    return val, ("full", None, vec)


def _mode_fields(forms, tag):
    """Turn an eigenvector tag into (psi, u, w) ScalarFields with J = 1."""
    grid = forms.grid
    kind, m, vec = tag
    psi = np.zeros((grid.Nx, grid.Nz))
    if kind == "block":
        prof = np.zeros(grid.Nz)
        prof[1:-1] = vec
        psi[:] = prof[None, :] * np.cos(grid.kx[m] * grid.x)[:, None]
    else:
        psi[:, 1:-1] = vec.reshape(grid.Nx, grid.Nz - 2)
    u, w = velocity_from_psi_values(psi, grid)
    J = integrate_values(u * u + w * w, grid)
    if J > 0:
        scale = 1.0 / np.sqrt(J)
        psi, u, w = psi * scale, u * scale, w * scale
    return ScalarField(grid, psi), ScalarField(grid, u), ScalarField(grid, w)


def alpha_of_s(forms, s, method="auto", warm=None, want_mode=False):
    """Smallest eigenvalue alpha(s) of (s nu A1 - A2, B).

    method: 'auto' (per-mode blocks when available, else dense for small
    pencils, else iterative) or one of 'blocked', 'dense', 'iterative'.
    Returns (alpha, mode) with mode = (psi, u, w) ScalarFields normalized to
    J = 1 when want_mode, else (alpha, None).
    """
    if method == "auto":
        if forms.blocks is not None:
            method = "blocked"
        elif forms.n <= DENSE_LIMIT:
            method = "dense"
        else:
            method = "iterative"
    if method == "blocked":
        if forms.blocks is None:
            raise EigensolverError(
                "blocked route unavailable: coefficients vary in x"
            )
        val, tag = _alpha_blocked(forms, s)
    elif method == "dense":
        if forms.A1 is None:
            raise EigensolverError("dense route unavailable: pencil too large")
        val, tag = _alpha_dense(forms, s)
    elif method == "iterative":
        if forms.A1 is None:
            raise EigensolverError("iterative route unavailable: pencil too large")
        val, tag = _alpha_iterative(forms, s, warm=warm)
    else:
        raise ValueError("unknown method %r" % method)
    if not want_mode:
        return val, None
    return val, _mode_fields(forms, tag)


def _el_residual(forms, s, alpha_val):
    """Euler-Lagrange residual of the computed minimizer at s."""
    if forms.blocks is not None:
        _, (_, m, vec) = _alpha_blocked(forms, s)
        A1k, A2k, Bk, _, _ = forms.blocks[m]
        C = s * forms.nu * A1k - A2k
        r = C @ vec - alpha_val * (Bk @ vec)
        scale = float(np.linalg.norm(Bk @ vec)) * max(1.0, abs(alpha_val))
        return float(np.linalg.norm(r)) / max(scale, 1e-300)
    if forms.A1 is None:
        return None
    if forms.n <= DENSE_LIMIT:
        _, (_, _, vec) = _alpha_dense(forms, s)
    else:
        _, (_, _, vec) = _alpha_iterative(forms, s)
    C = (s * forms.nu) * forms.A1 - forms.A2
    r = C @ vec - alpha_val * (forms.B @ vec)
    scale = float(np.linalg.norm(forms.B @ vec)) * max(1.0, abs(alpha_val))
    return float(np.linalg.norm(r)) / max(scale, 1e-300)


@dataclass
class EigenResult:
    """Outcome of the dispersion-root search."""

    classification: str
    s_star: float = None
    lambda0: float = None
    alpha_samples: list = None
    mode_psi: object = None
    mode_u: object = None
    mode_w: object = None
    diagnostics: dict = None


def _largest_e2(forms):
    """Largest eigenvalue of (A2, B) plus the Rayleigh pieces of its vector,
    used for the stable certificate and the instability-window threshold."""
    if forms.blocks is not None:
        best = None
        for A1k, A2k, Bk, m, _k in forms.blocks:
            vals, vecs = sla.eigh(-A2k, Bk, subset_by_index=[0, 0])
            cand = (-float(vals[0]), vecs[:, 0], A1k, A2k)
            if best is None or cand[0] > best[0]:
                best = cand
        val, vec, A1k, A2k = best
        return val, float(vec @ (A2k @ vec)), float(vec @ (A1k @ vec))
    if forms.n <= DENSE_LIMIT:
        vals, vecs = sla.eigh(
            forms.A2.toarray(), forms.B.toarray(),
            subset_by_index=[forms.n - 1, forms.n - 1],
        )
        val, vec = float(vals[0]), vecs[:, 0]
    else:
        X = _deterministic_start(forms.n)
        vals, vecs = spla.lobpcg(
            forms.A2.tocsc(), X, B=forms.B.tocsc(), largest=True,
            tol=1e-10, maxiter=3000,
        )
        i = int(np.argmax(vals))
        val, vec = float(vals[i]), vecs[:, i]
    return val, float(vec @ (forms.A2 @ vec)), float(vec @ (forms.A1 @ vec))


def find_lambda0(forms, s_min=1e-4, s_max=1e3, n_probe=10, method="auto",
                 tol_phi=1e-10):
    """Locate the root of Phi(s) = -s^2 - alpha(s).

    Returns an EigenResult classified 'unstable' (lambda0 = s* > 0, with the
    marginal mode), 'stable' (alpha nonnegative throughout and the forcing
    form nonpositive), or 'indeterminate' (diagnostics say why).
    """
    samples = []
    diagnostics = {"method": method}

    def alpha_at(s):
        for s_prev, a_prev in samples:
            if s_prev == s:
                return a_prev
        val, _ = alpha_of_s(forms, s, method=method)
        samples.append((s, val))
        return val

    def phi(s):
        return -s * s - alpha_at(s)

    probes = list(np.geomspace(s_min, s_max, n_probe))
    alphas = [alpha_at(s) for s in probes]
    scale = float(np.max(np.abs(alphas))) + 1.0
    diagnostics["monotone"] = bool(
        np.all(np.diff(alphas) >= -1e-9 * scale)
    )
    if not diagnostics["monotone"]:
        log.warning("alpha(s) lost monotonicity on probes; eigensolver noise?")

    if min(alphas) >= 0.0:
        mu2, e2_star, e1_star = _largest_e2(forms)
        diagnostics["mu2"] = mu2
        if mu2 <= 1e-11 * scale:
            return EigenResult(
                classification="stable", alpha_samples=samples,
                diagnostics=diagnostics,
            )
        # The forcing form is positive somewhere, so alpha(s) < 0 for s below
        # e2/(nu e1) on that candidate: extend the probes there.
        s_thr = e2_star / (forms.nu * max(e1_star, 1e-300))
        diagnostics["s_threshold"] = s_thr
        s_try = 0.5 * s_thr
        if alpha_at(s_try) >= 0.0:
            diagnostics["reason"] = (
                "alpha stayed nonnegative below the predicted instability "
                "threshold"
            )
            return EigenResult(
                classification="indeterminate", alpha_samples=samples,
                diagnostics=diagnostics,
            )
        probes.insert(0, s_try)
        alphas.insert(0, alpha_at(s_try))

    # Unstable side: bracket the root of the decreasing Phi.
    s_lo = None
    s_cand = min(s for s, a in zip(probes, alphas) if a < 0.0)
    for _ in range(80):
        if phi(s_cand) > 0.0:
            s_lo = s_cand
            break
        s_cand *= 0.1
        if s_cand < 1e-30:
            break
    if s_lo is None:
        diagnostics["reason"] = "Phi never positive while shrinking s (marginal?)"
        return EigenResult(
            classification="indeterminate", alpha_samples=samples,
            diagnostics=diagnostics,
        )
    s_hi = None
    s_cand = 2.0 * s_lo
    for _ in range(200):
        if phi(s_cand) < 0.0:
            s_hi = s_cand
            break
        s_cand *= 2.0
    if s_hi is None:
        diagnostics["reason"] = "Phi positive beyond the search range"
        return EigenResult(
            classification="indeterminate", alpha_samples=samples,
            diagnostics=diagnostics,
        )

    s_star, phi_star = _hybrid_root(phi, s_lo, s_hi, phi(s_lo), phi(s_hi), tol_phi)
    diagnostics["phi_residual"] = phi_star

    val, mode = alpha_of_s(forms, s_star, method=method, want_mode=True)
    diagnostics["el_residual"] = _el_residual(forms, s_star, val)
    psi_f, u_f, w_f = mode
    return EigenResult(
        classification="unstable", s_star=s_star, lambda0=s_star,
        alpha_samples=samples, mode_psi=psi_f, mode_u=u_f, mode_w=w_f,
        diagnostics=diagnostics,
    )


def _hybrid_root(phi, a, b, fa, fb, tol_factor):
    """Bisection with secant candidates on a decreasing function."""
    if not (fa > 0.0 and fb <= 0.0):
        raise EigensolverError("root bracket invalid: Phi(%g)=%g, Phi(%g)=%g"
                               % (a, fa, b, fb))
    s_best, f_best = (a, fa) if abs(fa) < abs(fb) else (b, fb)
    for _ in range(200):
        tol = tol_factor * max(1.0, s_best * s_best)
        if abs(f_best) <= 0.25 * tol or b - a < 1e-16 * max(1.0, b):
            break
        denom = fb - fa
        sc = b - fb * (b - a) / denom if denom != 0.0 else 0.5 * (a + b)
        if not (a < sc < b):
            sc = 0.5 * (a + b)
        fc = phi(sc)
        if abs(fc) < abs(f_best):
            s_best, f_best = sc, fc
        if fc > 0.0:
            a, fa = sc, fc
        else:
            b, fb = sc, fc
    return s_best, f_best


@dataclass
class ClassificationReport:
    """Spectral verdict plus how the parameters sit in the two analytic regimes."""

    verdict: str
    branch: str
    lambda0: float
    s_star: float
    delta_max: float
    delta_min: float
    coriolis_shear: float
    eig: EigenResult


def classify(ss, params, method="auto", **kwargs):
    """Classify a steady state: assemble the forms, run the root search, and
    report the analytic branch (positive buoyancy coefficient with
    f + alpha0 <= 0 forces instability; strictly negative coefficient with
    f + alpha0 > 0 is the provably stable regime; anything else sits outside
    the dichotomy and only the spectral verdict applies)."""
    forms = assemble_forms(ss, params)
    eig = find_lambda0(forms, method=method, **kwargs)
    dmax, dmin = ss.delta_max(), ss.delta_min()
    fs = params.f + params.alpha0
    if dmax > 0.0 and fs <= 0.0:
        branch = "rt-unstable"
    elif dmax < 0.0 and fs > 0.0:
        branch = "stable"
    else:
        branch = "outside-dichotomy"
    return ClassificationReport(
        verdict=eig.classification, branch=branch, lambda0=eig.lambda0,
        s_star=eig.s_star, delta_max=dmax, delta_min=dmin,
        coriolis_shear=fs, eig=eig,
    )
