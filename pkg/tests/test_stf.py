from __future__ import annotations

import numpy as np
import pytest

from landau_tf import stf

# Frozen oracle: neutral STF at Z = B = 1 from shooting the radial ODE for
# chi = r phi, chi'' = (2B/pi) sqrt(r chi), chi(0) = Z, with chi and chi'
# vanishing together at r_S. The attraction equals chi'(0).
ODE_ENERGY = -0.4354415024
ODE_RADIUS = 3.668846688
ODE_ATTRACTION = -0.7837947072


def test_neutral_energy_matches_ode(stf_unit):
    rho, energy = stf_unit
    assert energy.total == pytest.approx(ODE_ENERGY, rel=2e-5)
    assert energy.attraction == pytest.approx(ODE_ATTRACTION, rel=2e-5)


def test_neutral_support_matches_ode(stf_unit):
    rho, _ = stf_unit
    info = stf.support_radius(rho)
    assert info.r_S == pytest.approx(ODE_RADIUS, rel=2e-3)
    assert info.r_S <= stf.support_radius_bound(1.0, 1.0)
    assert 3.5 <= info.edge_exponent <= 4.5


def test_neutral_solution_properties(stf_unit):
    rho, energy = stf_unit
    assert rho.nu == 0.0
    assert rho.N == pytest.approx(1.0, abs=1e-9)
    assert rho.diagnostics["tf_residual"] < 1e-6
    assert np.all(rho.rho >= 0)
    assert stf.semiclassical_energy_form(rho) == pytest.approx(energy.total, rel=1e-6)


def test_energy_terms_virial(stf_unit):
    # rho -> t^3 rho(t x) keeps N; the kinetic term scales as t^6, both Coulomb terms as t
    _, e = stf_unit
    assert 6 * e.kinetic_like + e.attraction + e.repulsion == pytest.approx(0.0, abs=1e-5)


@pytest.mark.parametrize("Z,B", [(10.0, 10.0), (3.0, 200.0)])
def test_energy_scaling(stf_unit, Z, B):
    _, e1 = stf_unit
    _, e = stf.solve_stf(Z, B)
    assert e.total / (Z ** 1.8 * B ** 0.4) == pytest.approx(e1.total, rel=1e-6)


def test_ion_has_negative_chemical_potential(stf_unit):
    rho, e = stf.solve_stf(2.0, 3.0, N=1.0)
    assert rho.N == pytest.approx(1.0, rel=1e-8)
    assert rho.nu < 0
    assert e.N == pytest.approx(1.0, rel=1e-8)
    _, neutral = stf.solve_stf(2.0, 3.0)
    assert e.total > neutral.total


def test_chemical_potential_is_energy_slope():
    dN = 1e-3
    rho, _ = stf.solve_stf(2.0, 3.0, N=1.0)
    ep = stf.solve_stf(2.0, 3.0, N=1.0 + dN)[1].total
    em = stf.solve_stf(2.0, 3.0, N=1.0 - dN)[1].total
    assert (ep - em) / (2 * dN) == pytest.approx(rho.nu, rel=1e-3)


@pytest.mark.parametrize("kw", [dict(N=2.0), dict(N=-1.0), dict(mixing=0.0)])
def test_invalid_arguments(kw):
    with pytest.raises(ValueError):
        stf.solve_stf(1.0, 1.0, **kw)


def test_nonpositive_field_rejected():
    with pytest.raises(ValueError):
        stf.solve_stf(1.0, 0.0)


def test_grid_too_short_detected():
    grid = stf.RadialGrid.hybrid(1e-6, 0.5, 1.0, n=400)
    with pytest.raises((stf.GridExtensionError, stf.ConvergenceError)):
        stf.solve_stf(1.0, 1.0, grid=grid)
