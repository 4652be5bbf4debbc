import numpy as np
import pytest

from bsnq.errors import ConfigError, NonIntegrableGradient, PotentialNotHarmonic
from bsnq.grid import build_grid, integrate_values
from bsnq.steady import (
    ConstantDelta,
    DeltaOfPsi,
    HarmonicMode,
    LinearZ,
    PhysicalParams,
    SteadyState,
    TabulatedDelta,
    TabulatedPotential,
    balance_residuals,
    p0_profile,
    periodicity_defect,
    validate_exactness,
    validate_harmonic,
)


def test_linear_potential_constant_delta_exact():
    g = build_grid(2.0 * np.pi, 1.0, 16, 17)
    ss = SteadyState.build(g, ConstantDelta(-1.0), LinearZ(2.0))
    # grad rho_s = delta grad Psi with the anchor rho_s(0, 0) = 0
    want_rho = -2.0 * g.z[None, :] * np.ones((g.Nx, 1))
    assert np.max(np.abs(ss.rho_s.values - want_rho)) < 1e-11
    # hydrostatic pressure is quadratic in z, exactly representable:
    # dp/dz = -rho_s dPsi/dz = 4z, zero-mean gauge
    want_p = 2.0 * g.z ** 2
    want_p = want_p - integrate_values(
        want_p[None, :] * np.ones((g.Nx, 1)), g
    ) / g.area
    assert np.max(np.abs(ss.p_s.values - want_p[None, :])) < 1e-10


def test_delta_of_psi_quadratic_density():
    # D(Psi) = Psi gives grad rho_s = Psi grad Psi = grad(Psi^2 / 2); with the
    # linear potential the density is quadratic in z and the solve is exact
    g = build_grid(2.0 * np.pi, 1.0, 16, 33)
    ss = SteadyState.build(g, DeltaOfPsi([0.0, 1.0]), LinearZ(1.0))
    want = 0.5 * g.z[None, :] ** 2 * np.ones((g.Nx, 1))
    assert np.max(np.abs(ss.rho_s.values - want)) < 1e-10


def test_harmonic_mode_psi_squared_second_order():
    # same identity rho_s = Psi^2/2 - Psi(0,0)^2/2 for the wavy potential;
    # now the truth is non-polynomial so the error converges at 2nd order
    errs = []
    for nz in (17, 33):
        g = build_grid(2.0 * np.pi, 1.0, 32, nz)
        pot = HarmonicMode(1.0, 0.3, 1)
        ss = SteadyState.build(g, DeltaOfPsi([0.0, 1.0]), pot)
        want = 0.5 * ss.Psi ** 2
        want = want - want[0, 0]
        errs.append(np.max(np.abs(ss.rho_s.values - want)))
    assert 2.5 < errs[0] / errs[1] < 6.0


def test_rho_ref_anchor():
    g = build_grid(2.0 * np.pi, 1.0, 16, 17)
    ss = SteadyState.build(g, ConstantDelta(-1.0), LinearZ(1.0), rho_ref=3.5)
    assert abs(ss.rho_s.values[0, 0] - 3.5) < 1e-12


def test_validate_harmonic_accepts_and_rejects():
    g = build_grid(2.0 * np.pi, 1.0, 32, 33)
    validate_harmonic(LinearZ(1.0), g)
    validate_harmonic(HarmonicMode(1.0, 0.2, 2), g)
    bad = TabulatedPotential((g.z ** 2)[None, :] * np.ones((g.Nx, 1)))
    with pytest.raises(PotentialNotHarmonic):
        validate_harmonic(bad, g)


def test_validate_exactness_structural_vs_discrete():
    g = build_grid(2.0 * np.pi, 1.0, 32, 33)
    pot = HarmonicMode(1.0, 0.3, 1)
    # quadratic dependence on Psi: the structural route cancels by the chain
    # rule (roundoff only), the discrete route carries truncation error
    assert validate_exactness(DeltaOfPsi([0.0, 0.0, 1.0]), pot, g) < 1e-14
    d = validate_exactness(DeltaOfPsi([0.0, 0.0, 1.0]), pot, g, structural=False)
    assert 1e-14 < d < 1e-2


def test_periodicity_defect_and_nonintegrable():
    g = build_grid(2.0 * np.pi, 1.0, 16, 17)
    assert periodicity_defect(ConstantDelta(1.0), LinearZ(1.0), g) < 1e-13
    # x-dependent delta times a z-gravity field has a curl: no steady density
    vals = (1.0 + 0.5 * np.cos(g.x))[:, None] * np.ones((1, g.Nz))
    with pytest.raises(NonIntegrableGradient):
        SteadyState.build(g, TabulatedDelta(vals), LinearZ(1.0))


def test_p0_profile():
    x = np.linspace(0.0, 2.0, 5)
    got = p0_profile(2.0, 3.0, 4.0, x)
    want = (2.0 * 3.0 / 2.0) * x ** 2 + 2.0 * 4.0 * x
    assert np.allclose(got, want, atol=1e-14)


def test_balance_residuals_small_and_converging():
    res = []
    for nz in (33, 65):
        g = build_grid(2.0 * np.pi, 1.0, 32, nz)
        ss = SteadyState.build(g, DeltaOfPsi([0.0, 1.0]), HarmonicMode(1.0, 0.2, 1))
        res.append(balance_residuals(ss))
    assert res[0]["r_hyd"] / res[1]["r_hyd"] > 3.0
    assert res[1]["r_geo"] < 1e-3
    assert res[1]["r_hyd"] < 1e-3


def test_params_validation():
    PhysicalParams(f=1.0, nu=0.1, alpha=1.0, alpha0=0.0, gamma=1.0, beta=2.0)
    with pytest.raises(ConfigError):
        PhysicalParams(f=1.0, nu=-0.1, alpha=1.0, alpha0=0.0, gamma=1.0, beta=2.0)
    with pytest.raises(ConfigError):
        PhysicalParams(f=-1.0, nu=0.1, alpha=1.0, alpha0=0.0, gamma=1.0, beta=2.0)
    with pytest.raises(ConfigError):
        PhysicalParams(f=1.0, nu=0.1, alpha=-1.0, alpha0=0.0, gamma=1.0, beta=2.0)
    with pytest.raises(ConfigError):
        PhysicalParams(f=1.0, nu=0.1, alpha=1.0, alpha0=0.0, gamma=0.0, beta=2.0)


def test_v_s_and_delta_range():
    g = build_grid(2.0 * np.pi, 1.0, 16, 17)
    ss = SteadyState.build(g, ConstantDelta(-1.0), LinearZ(1.0), a0=0.5, a1=2.0)
    vs = ss.v_s()
    assert np.allclose(vs[:, 0], 0.5 * g.x + 2.0)
    assert ss.delta_max() == ss.delta_min() == -1.0
