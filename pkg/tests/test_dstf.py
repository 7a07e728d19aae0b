from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landau_tf import dstf, kernels
from landau_tf.grids import UniformGrid
from landau_tf.validate import random_profiles

# Frozen oracle: E_w^{1D}(1, 1), cross-checked by L-BFGS-B minimization of the
# repulsion-free functional on a fine grid (agreement 1.5e-6).
WEAK_1D_UNIT = -1.0970306095085

Z, B = 2.0, 5.0


@pytest.fixture(scope="module")
def table():
    return kernels.build_kernel_table(B, 8, dstf.default_dstf_grid(Z, B))


@pytest.fixture(scope="module")
def critical(table):
    return dstf.solve_dstf(Z, B, None, table)


def test_fft_convolution_matches_direct():
    grid = UniformGrid(3.0, 61)
    K = kernels.build_kernel_table(2.0, 3, grid)
    rng = np.random.default_rng(4)
    rho = dstf.ChannelDensity(grid, rng.random((4, grid.n)), 1.0, 2.0)
    np.testing.assert_allclose(dstf.interaction_potential(rho, K), dstf.interaction_potential_direct(rho, K),
                               rtol=1e-12, atol=1e-12)


def test_mstf_equals_dstf_on_channel_densities(table):
    rng = np.random.default_rng(0)
    g = table.grid
    for _ in range(5):
        rho = rng.random((table.channels, g.n)) * np.exp(-(4 * g.z / g.z_max) ** 2)
        d = dstf.ChannelDensity(g, rho, Z, B)
        a, b = dstf.dstf_functional(d, table), dstf.mstf_energy(d, table)
        assert b.total == pytest.approx(a.total, rel=1e-12)
        assert b.N == pytest.approx(a.N, rel=1e-12)


def test_mstf_3d_of_boxcar_density(table):
    # a density constant on each annulus is reproduced exactly by the boxcar average
    g = table.grid
    prof = np.exp(-g.z ** 2)

    def rho3d(r, z):
        m = np.floor(0.5 * B * r ** 2)
        return (B / (2 * np.pi)) * np.exp(-z ** 2) * np.where(m <= table.m_max, 1.0 / (1.0 + m), 0.0)

    chan = dstf.boxcar_average(rho3d, B, g, table.m_max)
    expected = prof[None, :] / (1.0 + np.arange(table.channels))[:, None]
    np.testing.assert_allclose(chan, expected, rtol=1e-12, atol=1e-15)
    e3d = dstf.mstf_functional_3d(rho3d, table, Z)
    d = dstf.ChannelDensity(g, expected, Z, B)
    assert e3d == pytest.approx(dstf.mstf_energy(d, table).total, rel=1e-10)


def test_channel_mismatch_detected(table):
    other = kernels.build_kernel_table(B, 1, UniformGrid(2.0, 41))
    d = dstf.ChannelDensity(table.grid, np.zeros((2, table.grid.n)), Z, B)
    with pytest.raises(dstf.ChannelMismatchError):
        dstf.dstf_functional(d, other)
    with pytest.raises(dstf.ChannelMismatchError):
        dstf.ChannelDensity(table.grid, np.zeros((2, 5)), Z, B)
    with pytest.raises(dstf.ChannelMismatchError):
        dstf.solve_dstf(Z, 2 * B, 1.0, table)


def test_critical_solution(critical):
    d = critical.density
    assert d.mu == 0.0
    assert d.diagnostics["tf_residual"] < 1e-8
    assert Z <= d.total_mass() <= 4 * Z
    assert d.channel_masses()[-1] < 1e-4 * d.total_mass()


@pytest.mark.parametrize("N", [0.5, 1.0, 1.5])
def test_constrained_solution(table, N):
    r = dstf.solve_dstf(Z, B, N, table)
    assert r.density.total_mass() == pytest.approx(N, rel=1e-10)
    assert r.density.mu < 0
    assert not r.saturated
    assert r.density.diagnostics["tf_residual"] < 1e-8


def test_energy_slope_is_chemical_potential(table):
    N, dN = 1.2, 1e-3
    r = dstf.solve_dstf(Z, B, N, table)
    ep = dstf.solve_dstf(Z, B, N + dN, table).energy.total
    em = dstf.solve_dstf(Z, B, N - dN, table).energy.total
    assert (ep - em) / (2 * dN) == pytest.approx(r.density.mu, rel=1e-3)


def test_energy_decreasing_and_convex(table, critical):
    Ns = np.array([0.4, 0.8, 1.2, 1.6])
    E = np.array([dstf.solve_dstf(Z, B, N, table).energy.total for N in Ns] + [critical.energy.total])
    Ns = np.append(Ns, critical.density.total_mass())
    assert np.all(np.diff(E) < 0)
    slopes = np.diff(E) / np.diff(Ns)
    assert np.all(np.diff(slopes) > 0)


def test_excess_charge_saturates(table, critical):
    r = dstf.solve_dstf(Z, B, 3.0, table)
    assert r.saturated
    assert r.density.total_mass() == pytest.approx(critical.density.total_mass(), rel=1e-8)
    assert r.energy.total == pytest.approx(critical.energy.total, rel=1e-10)


def test_critical_number_truncation_error():
    K = kernels.build_kernel_table(B, 0, dstf.default_dstf_grid(Z, B))
    with pytest.raises(dstf.ChannelTruncationError):
        dstf.critical_particle_number(Z, B, kernels.build_kernel_table(B, 1, K.grid))


def test_adaptive_channel_growth():
    # an ion (mu < 0) keeps compact support even while channels are missing
    res, K = dstf.solve_dstf_adaptive(Z, B, 1.5, m_start=2)
    assert K.m_max > 2
    m = res.density.channel_masses()
    assert m[-1] < 1e-4 * m.sum()


@pytest.mark.parametrize("kw", [dict(N=-1.0), dict(N=1.0, mixing=1.5)])
def test_invalid_arguments(table, kw):
    with pytest.raises(ValueError):
        dstf.solve_dstf(Z, B, K=table, **kw)


def test_weak_energy_oracle():
    assert dstf.weak_1d_energy(1.0, 1.0) == pytest.approx(WEAK_1D_UNIT, rel=1e-10)


@pytest.mark.parametrize("Zs,Bs", [(5.0, 10.0), (20.0, 100.0), (0.5, 3.0)])
def test_weak_energy_scaling(Zs, Bs):
    assert dstf.weak_1d_energy(Zs, Bs) / (Zs ** 1.5 * Bs ** 0.25) == pytest.approx(WEAK_1D_UNIT, rel=1e-8)


def test_one_d_energy_within_bounds():
    Zs, Bs = 5.0, 1.0
    K1 = kernels.build_kernel_table(Bs, 0, dstf.default_1d_grid(Zs, Bs))
    r = dstf.solve_1dstf(Zs, Bs, K1)
    b = dstf.energy_bounds_1d(Zs, Bs)
    assert b["lower"] <= r.energy.total <= b["upper"]
    assert r.density.total_mass() <= 2 * Zs


def test_one_d_without_repulsion_reaches_weak_energy():
    K1 = kernels.build_kernel_table(1.0, 0, dstf.default_1d_grid(1.0, 1.0))
    rho = np.sqrt(np.maximum(K1.v_single[0], 0) / (3 * dstf.KAPPA))
    boxed = dstf.functional_1d(rho, K1, 1.0, coupling=0.0)
    # beyond the box V_0 ~ 1/|z|: the missing piece is (2/(3 pi)) * 2 * 2 / sqrt(L)
    tail = (2.0 / (3.0 * np.pi)) * 4.0 / np.sqrt(K1.grid.z_max)
    # remaining gap: trapezoid error at the kink of V_0 at z = 0 and 1/z^2 tail corrections
    assert boxed - tail == pytest.approx(WEAK_1D_UNIT, rel=5e-4)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 31), Zs=st.floats(0.5, 10.0), Bs=st.floats(0.5, 50.0))
def test_one_d_scaling_identity(seed, Zs, Bs):
    g1 = UniformGrid(10.0, 201)
    gB = UniformGrid(10.0 / np.sqrt(Bs), 201)
    K1 = kernels.build_kernel_table(1.0, 0, g1)
    KB = kernels.build_kernel_table(Bs, 0, gB)
    lam = 2.0 * Bs ** 0.25 * Zs ** 0.5
    rho = random_profiles(g1, 1, seed)[0]
    lhs = dstf.functional_1d(Bs ** 0.25 * Zs ** 0.5 * rho, KB, Zs)
    rhs = Bs ** 0.25 * Zs ** 1.5 * dstf.scaled_functional_1d(rho, K1, lam)
    assert lhs == pytest.approx(rhs, rel=1e-8)
