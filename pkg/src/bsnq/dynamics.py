"""Time integration of the perturbation system in vorticity form.

Prognostic fields (perturbations about a steady state):
  rho   density perturbation, transported and forced by -delta (u . grad Psi)
  v     meridional velocity, forced by -(f + alpha0) u
  omega in-plane vorticity, omega = laplacian(psi), with
        d omega/dt + u.grad omega = nu laplacian(omega)
                                    + grad rho . (-dPsi/dz, dPsi/dx)
                                    - f dv/dz
The in-plane velocity is recovered from psi: u = -dpsi/dz, w = dpsi/dx with
psi = 0 at both walls.  Wall vorticity: omega = 0 at the stress-free top,
omega = -alpha u at the Navier-slip bottom, imposed with the newest available
u after every stage (lagged boundary condition).

One step is strong-stability-preserving RK3 on the explicit terms followed by
a Crank-Nicolson solve of the viscous term, one tridiagonal system per x
mode.  Advection products are dealiased with the two-thirds rule.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import kernels
from .elliptic import poisson_dirichlet_values, poisson_neumann, velocity_from_psi_values
from .errors import CflViolation, ConfigError, NanGuard
from .grid import (
    BoundaryPair,
    ScalarField,
    d2z_values,
    ddx_values,
    ddz_values,
    dealias_values,
    laplacian_values,
)

log = logging.getLogger(__name__)

MODES = ("nonlinear", "linearized")


@dataclass
class StepConfig:
    """Stepper knobs.  dt is the maximum (and, in linearized runs, the actual)
    step; nonlinear runs shrink it to meet cfl_target and the wave cap."""

    dt: float
    mode: str = "nonlinear"
    cfl_target: float = 0.5
    dealias: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError("sim.mode must be one of %s" % (MODES,))
        if self.dt <= 0:
            raise ConfigError("sim.dt must be positive")
        if self.cfl_target <= 0:
            raise ConfigError("sim.cfl_target must be positive")


class State:
    """Prognostic fields plus derived streamfunction and velocity."""

    __slots__ = ("grid", "t", "rho", "v", "omega", "psi", "u", "w")

    def __init__(self, grid, t, rho, v, omega, psi, u, w):
        self.grid = grid
        self.t = t
        self.rho = rho
        self.v = v
        self.omega = omega
        self.psi = psi
        self.u = u
        self.w = w

    @classmethod
    def from_fields(cls, grid, rho, v, omega, alpha, t=0.0):
        """Close a state from prognostic arrays: solve for psi and velocity,
        then impose the wall vorticity rows."""
        rho = np.array(rho, dtype=np.float64)
        v = np.array(v, dtype=np.float64)
        omega = np.array(omega, dtype=np.float64)
        psi, u, w = _close_velocity(omega, grid)
        _set_wall_vorticity(omega, u, alpha)
        return cls(grid, float(t), rho, v, omega, psi, u, w)

    def copy(self):
        return State(
            self.grid, self.t, self.rho.copy(), self.v.copy(), self.omega.copy(),
            self.psi.copy(), self.u.copy(), self.w.copy(),
        )

    def fields(self):
        """Prognostic and derived fields as ScalarFields keyed by name."""
        g = self.grid
        return {
            "rho": ScalarField(g, self.rho),
            "v": ScalarField(g, self.v),
            "omega": ScalarField(g, self.omega),
            "psi": ScalarField(g, self.psi),
            "u": ScalarField(g, self.u),
            "w": ScalarField(g, self.w),
        }


def _close_velocity(omega, grid):
    psi = poisson_dirichlet_values(omega, grid)
    u, w = velocity_from_psi_values(psi, grid)
    return psi, u, w


def _set_wall_vorticity(omega, u, alpha):
    omega[:, -1] = 0.0
    omega[:, 0] = -alpha * u[:, 0]


def _tendencies(rho, v, omega, u, w, ss, params, mode, dealias_on, grid):
    """Explicit tendencies (no viscous diffusion)."""
    Px = ss.Psi_x
    Pz = ss.Psi_z
    delta = ss.delta_values
    rx = ddx_values(rho, grid)
    rz = ddz_values(rho, grid)
    vz = ddz_values(v, grid)

    drho = -delta * (u * Px + w * Pz)
    dv = -(params.f + params.alpha0) * u
    domega = rz * Px - rx * Pz - params.f * vz

    if mode == "nonlinear":
        vx = ddx_values(v, grid)
        ox = ddx_values(omega, grid)
        oz = ddz_values(omega, grid)
        adv_r = u * rx + w * rz
        adv_v = u * vx + w * vz
        adv_o = u * ox + w * oz
        if dealias_on:
            adv_r = dealias_values(adv_r, grid)
            adv_v = dealias_values(adv_v, grid)
            adv_o = dealias_values(adv_o, grid)
        drho = drho - adv_r
        dv = dv - adv_v
        domega = domega - adv_o
    return drho, dv, domega


def rhs_tendencies(state, ss, params, mode="nonlinear", dealias=True):
    """Full tendencies of (rho, v, omega) including the viscous term, as
    ScalarFields; diagnostic-grade (the stepper treats diffusion implicitly)."""
    if mode not in MODES:
        raise ConfigError("mode must be one of %s" % (MODES,))
    g = state.grid
    drho, dv, domega = _tendencies(
        state.rho, state.v, state.omega, state.u, state.w, ss, params, mode,
        dealias, g,
    )
    domega = domega + params.nu * laplacian_values(state.omega, g)
    return (
        ScalarField(g, drho),
        ScalarField(g, dv),
        ScalarField(g, domega),
    )


def advective_rate(state):
    """max |u|/dx + max |w|/dz, the reciprocal advective time scale."""
    g = state.grid
    return float(np.max(np.abs(state.u))) / g.dx + float(np.max(np.abs(state.w))) / g.dz


def wave_rate(ss, params):
    """Buoyancy/rotation frequency scale bounding the explicit wave terms."""
    npsi = max(float(np.max(np.abs(ss.Psi_x))), float(np.max(np.abs(ss.Psi_z))))
    nbuoy = np.sqrt(max(0.0, float(np.max(np.abs(ss.delta_values)))) * max(npsi, 1e-300))
    return max(params.f + abs(params.alpha0), nbuoy)


def _diffuse_cn(omega_star, u_star, grid, nu, dt, alpha):
    """Crank-Nicolson viscous half: one tridiagonal solve per x mode, with the
    wall rows pinned to the lagged boundary values (0 at top, -alpha u at
    bottom)."""
    Nz = grid.Nz
    dz2 = grid.dz * grid.dz
    a = 0.5 * nu * dt
    r = omega_star + a * laplacian_values(omega_star, grid)
    rhat = np.fft.rfft(r, axis=0)
    bot_hat = np.fft.rfft(-alpha * u_star[:, 0])
    nk = rhat.shape[0]
    k2 = (grid.kx * grid.kx)[:, None]

    d_modes = np.empty((nk, Nz))
    d_modes[:] = 1.0 + a * (2.0 / dz2 + k2)
    d_modes[:, 0] = 1.0
    d_modes[:, -1] = 1.0
    dl = np.full((nk, Nz), -a / dz2)
    du = np.full((nk, Nz), -a / dz2)
    dl[:, -1] = 0.0
    du[:, 0] = 0.0

    b = rhat.copy()
    b[:, 0] = bot_hat
    b[:, -1] = 0.0

    dl2 = np.concatenate([dl, dl], axis=0)
    du2 = np.concatenate([du, du], axis=0)
    d2 = np.concatenate([d_modes, d_modes], axis=0)
    b2 = np.concatenate([b.real, b.imag], axis=0)
    sol = kernels.solve_tridiag_batch(dl2, d2, du2, b2)
    om_hat = sol[:nk] + 1j * sol[nk:]
    return np.fft.irfft(om_hat, n=grid.Nx, axis=0)


def step(state, ss, params, cfg, dt):
    """Advance one step of size dt; returns a new State.

    Raises CflViolation when a nonlinear step exceeds the advective bound and
    NanGuard when the result loses finiteness.
    """
    g = state.grid
    if cfg.mode == "nonlinear":
        rate = advective_rate(state)
        if dt * rate > cfg.cfl_target * (1.0 + 1e-9):
            raise CflViolation(
                "dt=%.3e violates the advective bound %.3e at t=%.6g"
                % (dt, cfg.cfl_target / max(rate, 1e-300), state.t)
            )

    alpha = params.alpha

    def F(rho, v, omega, u, w):
        return _tendencies(rho, v, omega, u, w, ss, params, cfg.mode, cfg.dealias, g)

    def close(rho, v, omega):
        psi, u, w = _close_velocity(omega, g)
        _set_wall_vorticity(omega, u, alpha)
        return rho, v, omega, psi, u, w

    rho0, v0, om0 = state.rho, state.v, state.omega
    u0, w0 = state.u, state.w

    # SSP-RK3 (Shu-Osher form) on the explicit terms.
    k1 = F(rho0, v0, om0, u0, w0)
    r1, vv1, o1, _, uu1, ww1 = close(rho0 + dt * k1[0], v0 + dt * k1[1], om0 + dt * k1[2])

    k2 = F(r1, vv1, o1, uu1, ww1)
    r2 = 0.75 * rho0 + 0.25 * (r1 + dt * k2[0])
    v2 = 0.75 * v0 + 0.25 * (vv1 + dt * k2[1])
    o2 = 0.75 * om0 + 0.25 * (o1 + dt * k2[2])
    r2, v2, o2, _, uu2, ww2 = close(r2, v2, o2)

    k3 = F(r2, v2, o2, uu2, ww2)
    third = 1.0 / 3.0
    rs = third * rho0 + (2.0 * third) * (r2 + dt * k3[0])
    vs = third * v0 + (2.0 * third) * (v2 + dt * k3[1])
    os_ = third * om0 + (2.0 * third) * (o2 + dt * k3[2])
    rs, vs, os_, _, us, wsv = close(rs, vs, os_)

    # Implicit viscous half, then the final closure with the new velocity.
    om_new = _diffuse_cn(os_, us, g, params.nu, dt, alpha)
    psi_new, u_new, w_new = _close_velocity(om_new, g)
    _set_wall_vorticity(om_new, u_new, alpha)

    new = State(g, state.t + dt, rs, vs, om_new, psi_new, u_new, w_new)
    guard = (
        np.isfinite(rs).all()
        and np.isfinite(vs).all()
        and np.isfinite(om_new).all()
        and np.isfinite(u_new).all()
    )
    if not guard:
        exc = NanGuard(
            "state lost finiteness at t=%.6g (dt=%.3e); fields max |rho|=%g "
            "|v|=%g |omega|=%g"
            % (
                new.t, dt,
                np.max(np.abs(rs)), np.max(np.abs(vs)), np.max(np.abs(om_new)),
            )
        )
        exc.state = new
        raise exc
    return new


@dataclass
class RunResult:
    """Observer table plus retained snapshots from a run."""

    times: np.ndarray
    table: dict
    states: list
    final: object
    steps: int
    dts: np.ndarray


def run(state, ss, params, cfg, t_end, observers=(), observe_every=1,
        snapshot_every=0, max_steps=10_000_000):
    """March to t_end, collecting observer rows every observe_every steps
    (plus the initial and final instants) and state copies every
    snapshot_every steps (0 keeps only the final state).

    Observers are callables obs(state, ss, params) -> dict of scalar columns.
    """
    if params.alpha0 != ss.a0:
        raise ConfigError(
            "params.alpha0 (%g) must equal the steady shear a0 (%g)"
            % (params.alpha0, ss.a0)
        )
    g = state.grid
    rows = []
    times = []
    states = []
    dts = []

    def observe(st):
        row = {}
        for obs in observers:
            row.update(obs(st, ss, params))
        times.append(st.t)
        rows.append(row)

    wave = wave_rate(ss, params)
    dt_wave = 0.5 / wave if wave > 0 else np.inf

    observe(state)
    if snapshot_every:
        states.append(state.copy())

    steps = 0
    eps = 1e-12 * max(1.0, abs(t_end))
    while state.t < t_end - eps:
        dt = cfg.dt
        if cfg.mode == "nonlinear":
            rate = advective_rate(state)
            if rate > 0:
                dt = min(dt, cfg.cfl_target / rate)
            dt = min(dt, dt_wave)
        dt = min(dt, t_end - state.t)
        state = step(state, ss, params, cfg, dt)
        steps += 1
        dts.append(dt)
        if steps >= max_steps:
            log.warning("run: hit max_steps=%d at t=%.6g", max_steps, state.t)
            break
        if steps % observe_every == 0 or state.t >= t_end - eps:
            observe(state)
        if snapshot_every and steps % snapshot_every == 0:
            states.append(state.copy())
    if not states or states[-1].t < state.t:
        states.append(state.copy())
    if times[-1] < state.t:
        observe(state)

    table = {}
    if rows:
        keys = rows[0].keys()
        table = {k: np.array([r[k] for r in rows]) for k in keys}
    return RunResult(
        times=np.array(times), table=table, states=states, final=state,
        steps=steps, dts=np.array(dts),
    )


def recover_pressure(state, ss, params, mode="nonlinear"):
    """Perturbation pressure from the incompressibility constraint: solves
    the Neumann problem div(grad p) = div(f v e1 - rho grad Psi - (u.grad) u)
    with hydrostatic wall fluxes (the bottom flux carries the Navier-slip
    viscous correction -nu alpha du/dx)."""
    if mode not in MODES:
        raise ConfigError("mode must be one of %s" % (MODES,))
    g = state.grid
    rho, u, w, v = state.rho, state.u, state.w, state.v
    Px, Pz = ss.Psi_x, ss.Psi_z
    rhs = (
        -(ddx_values(rho * Px, g) + ddz_values(rho * Pz, g))
        + params.f * ddx_values(v, g)
    )
    if mode == "nonlinear":
        ux = ddx_values(u, g)
        uz = ddz_values(u, g)
        wx = ddx_values(w, g)
        wz = ddz_values(w, g)
        rhs = rhs - (
            ddx_values(u * ux + w * uz, g) + ddz_values(u * wx + w * wz, g)
        )
        ux_bottom = ux[:, 0]
    else:
        ux_bottom = ddx_values(u, g)[:, 0]
    flux_bottom = -rho[:, 0] * Pz[:, 0] - params.nu * params.alpha * ux_bottom
    flux_top = -rho[:, -1] * Pz[:, -1]
    return poisson_neumann(
        ScalarField(g, rhs), BoundaryPair(g, flux_bottom, flux_top)
    )


def single_mode_values(grid, amplitude, m=1, n=1, phase=0.0):
    """amp * sin(n pi z / h) * cos(2 pi m x / Lx + phase), wall-compatible."""
    k = 2.0 * np.pi * m / grid.Lx
    return (
        amplitude
        * np.sin(np.pi * n * grid.z / grid.h)[None, :]
        * np.cos(k * grid.x + phase)[:, None]
    )


def random_smooth_values(grid, amplitude, rng, kmax=None):
    """Seeded smooth noise: x modes up to kmax (default Nx // 6), a
    sin(pi z / h) wall envelope, scaled to the requested max amplitude."""
    if kmax is None:
        kmax = max(1, grid.Nx // 6)
    noise = rng.standard_normal((grid.Nx, grid.Nz))
    nh = np.fft.rfft(noise, axis=0)
    nh[kmax + 1:, :] = 0.0
    smooth = np.fft.irfft(nh, n=grid.Nx, axis=0)
    smooth *= np.sin(np.pi * grid.z / grid.h)[None, :]
    peak = np.max(np.abs(smooth))
    if peak > 0:
        smooth *= amplitude / peak
    return smooth


def make_initial_state(grid, ss, params, ic, rng=None, t0=0.0):
    """Build the initial perturbation state from an IC description dict.

    kinds: single_mode {field, amplitude, m, n, phase},
           random {fields, amplitude, kmax}, zero {}.
    Fields not named start at zero.
    """
    zero = np.zeros((grid.Nx, grid.Nz))
    fields = {"rho": zero.copy(), "v": zero.copy(), "omega": zero.copy()}
    kind = ic.get("kind", "single_mode")
    if kind == "single_mode":
        name = ic.get("field", "omega")
        if name not in fields:
            raise ConfigError("ic.field must be rho, v or omega")
        fields[name] = single_mode_values(
            grid, ic.get("amplitude", 0.01), ic.get("m", 1), ic.get("n", 1),
            ic.get("phase", 0.0),
        )
    elif kind == "random":
        if rng is None:
            raise ConfigError("random initial conditions need a seeded rng")
        for name in ic.get("fields", ["omega"]):
            if name not in fields:
                raise ConfigError("ic.fields entries must be rho, v or omega")
            fields[name] = random_smooth_values(
                grid, ic.get("amplitude", 0.01), rng, ic.get("kmax")
            )
    elif kind == "zero":
        pass
    else:
        raise ConfigError("ic.kind must be single_mode, random, zero or file")
    return State.from_fields(
        grid, fields["rho"], fields["v"], fields["omega"], params.alpha, t=t0
    )
