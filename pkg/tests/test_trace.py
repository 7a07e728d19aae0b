from __future__ import annotations

import numpy as np
import pytest
from scipy.integrate import quad

from landau_tf import kernels, trace
from landau_tf.grids import UniformGrid


@pytest.fixture(scope="module")
def phi(stf_unit):
    return trace.RadialPotential.from_density(stf_unit[0])


@pytest.mark.parametrize("m", [0, 3, 10])
def test_channel_potential_matches_plane_quadrature(phi, m):
    z = np.array([0.0, 0.3, 1.7])
    fast = trace.channel_potential(phi, m, 1.0, z)
    ref = [trace.channel_potential_direct(phi, m, 1.0, float(t)) for t in z]
    # the neutral potential cancels to ~1e-11 outside the support
    np.testing.assert_allclose(fast, ref, rtol=1e-8, atol=1e-9)


@pytest.mark.parametrize("m,B", [(0, 1.0), (5, 2.0), (25, 10.0)])
def test_channel_potential_of_bare_coulomb_is_kernel(m, B):
    z = np.array([0.0, 0.1, 2.0, 9.0])
    bare = trace.RadialPotential(3.0)
    np.testing.assert_allclose(trace.channel_potential(bare, m, B, z), 3.0 * kernels.v_single(m, B, z), rtol=1e-8)


def test_channel_potential_of_constant():
    c = trace.RadialPotential.constant(-2.5)
    np.testing.assert_allclose(trace.channel_potential(c, 7, 3.0, np.linspace(-1, 1, 5)), -2.5, rtol=1e-12)


@pytest.mark.parametrize("w", np.concatenate([[-1.0, 0.0], np.geomspace(1e-4, 1e3, 18)]))
def test_p_integral_closed_form(w):
    if w <= 0:
        assert trace.p_integral(w) == 0.0
        return
    k = np.sqrt(w)
    ref, _ = quad(lambda p: p * p - w, -k, k, epsabs=0, epsrel=1e-13)
    assert trace.p_integral(w) == pytest.approx(ref, rel=1e-10)


def test_semiclassical_count_is_particle_number(stf_unit):
    rho, _ = stf_unit
    assert trace.semiclassical_count(rho, rho.B, rho.nu) == pytest.approx(rho.N, rel=1e-5)


def test_semiclassical_trace_energy_relation(stf_unit):
    rho, e = stf_unit
    sc = trace.semiclassical_trace(rho, rho.B, rho.nu)
    assert sc == pytest.approx(e.total - rho.nu * rho.N + e.repulsion, rel=1e-4)


def test_semiclassical_relations_for_ion():
    from landau_tf import stf

    rho, e = stf.solve_stf(2.0, 3.0, N=1.2)
    # an ionic density has a square-root edge, which the radial grid resolves to O(h^1.5)
    assert trace.semiclassical_count(rho, rho.B, rho.nu) == pytest.approx(1.2, rel=1e-4)
    sc = trace.semiclassical_trace(rho, rho.B, rho.nu)
    assert sc == pytest.approx(e.total - rho.nu * rho.N + e.repulsion, rel=1e-4)


def test_boxcar_identity(stf_unit, phi):
    grid = UniformGrid(12.0, 601)
    rep = trace.quantum_trace(phi, 1.0, 1.0, 0.0, grid, m_policy=4, semiclassical=0.0, richardson=False)
    boxed = trace.boxcar_trace(trace.tilde_potential(phi, 1.0, grid, 4))
    assert boxed == pytest.approx(rep.quantum_trace, rel=1e-13)
    assert rep.channels_used == 5
    assert rep.difference == rep.quantum_trace


def test_counts_agree_with_trace(phi):
    grid = UniformGrid(12.0, 601)
    rep = trace.quantum_trace(phi, 1.0, 1.0, -0.01, grid, m_policy=3, semiclassical=0.0, richardson=False)
    cd = trace.counting_difference(phi, 1.0, 1.0, -0.01, grid, 3)
    assert cd["quantum"] == sum(c.count for c in rep.per_channel)
    assert cd["difference"] == pytest.approx(cd["quantum"] - cd["semiclassical"])
    assert trace.lambda_N(rep, 1) == min(c.eigenvalues.min() for c in rep.per_channel if c.count)
    with pytest.raises(ValueError):
        trace.lambda_N(rep, 10 ** 6)


def test_auto_channel_policy_terminates(phi):
    grid = UniformGrid(12.0, 301)
    rep = trace.quantum_trace(phi, 1.0, 1.0, 0.0, grid, richardson=False, threshold=1e-3)
    assert 1 <= rep.channels_used < 100
    assert rep.quantum_trace < 0


def test_positive_shift_rejected(phi):
    with pytest.raises(ValueError):
        trace.quantum_trace(phi, 1.0, 1.0, 0.1, UniformGrid(5.0, 101))
    with pytest.raises(ValueError):
        trace.semiclassical_trace(phi, 1.0, 0.1)


def test_fit_slope_recovers_power_law():
    Z = np.array([8.0, 16.0, 32.0, 64.0])
    fit = trace.fit_slope(Z, 3.0 * Z ** 1.9, 1.5)
    assert fit.slope == pytest.approx(1.9, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert fit.predicted_slope == pytest.approx(1.8)


def test_sweep_needs_four_points():
    with pytest.raises(trace.InsufficientPointsError):
        trace.fit_slope([1, 2, 3], [1, 2, 3], 1.5)
    with pytest.raises(trace.InsufficientPointsError):
        trace.error_scaling_sweep([8, 16, 32], 1.5)


def test_trace_grid_resolution():
    g = trace.trace_grid(8.0, 8.0 ** 1.5, 1.0)
    assert g.z_max == pytest.approx(8.0)
    assert g.h <= (8.0 ** -0.75) / 30 + 1e-15
    capped = trace.trace_grid(8.0, 1e6, 10.0, max_nodes=1001)
    assert capped.n == 1001
