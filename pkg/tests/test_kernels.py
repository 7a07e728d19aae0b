from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landau_tf import kernels
from landau_tf.grids import UniformGrid


def _v_single_oracle(m, B, z):
    # plain radial quadrature of the Landau orbital density against 1/|x|
    B, z = mp.mpf(B), mp.mpf(z)
    rho = lambda r: B / (2 * mp.pi) * (B * r * r / 2) ** m / mp.factorial(m) * mp.exp(-B * r * r / 2)
    return float(mp.quad(lambda r: 2 * mp.pi * r * rho(r) / mp.sqrt(r * r + z * z), [0, 1, 4, 12, mp.inf]))


def test_v0_at_origin_closed_form():
    assert kernels.v_single(0, 1.0, 0.0) == pytest.approx(math.sqrt(math.pi / 2), abs=1e-12)


@pytest.mark.parametrize("m,B,z", [(0, 1.0, 0.3), (1, 1.0, 0.0), (3, 2.0, 0.7), (7, 10.0, 0.05), (15, 0.5, 4.0)])
def test_v_single_matches_radial_quadrature(m, B, z):
    assert kernels.v_single(m, B, z) == pytest.approx(_v_single_oracle(m, B, z), rel=1e-8)


def test_v0_erfc_form():
    # V_0 at B = 1 is sqrt(pi/2) exp(z^2/2) erfc(z/sqrt 2)
    z = np.linspace(0, 6, 13)
    ref = [float(mp.sqrt(mp.pi / 2) * mp.exp(t * t / 2) * mp.erfc(t / mp.sqrt(2))) for t in z]
    np.testing.assert_allclose(kernels.v_single(0, 1.0, z), ref, rtol=1e-9)


@pytest.mark.parametrize("B", [1.0, 10.0])
@pytest.mark.parametrize("m", [0, 5, 20])
def test_tail_is_coulomb(m, B):
    z = 100.0 * max(1.0, math.sqrt(2 * m / B))
    assert abs(z * kernels.v_single(m, B, z) - 1.0) < 0.02
    assert z * kernels.v_single(m, B, z) <= 1.0


def test_v_single_is_even_and_decreasing():
    z = np.linspace(0, 5, 41)
    v = kernels.v_single(2, 3.0, z)
    np.testing.assert_allclose(v, kernels.v_single(2, 3.0, -z), rtol=1e-13)
    assert np.all(np.diff(v) < 0)


@pytest.mark.parametrize("m,n,B,zeta", [(0, 0, 1.0, 0.0), (0, 3, 1.0, 0.4), (2, 5, 4.0, 1.3), (6, 6, 0.5, 0.0)])
def test_v_pair_matches_elliptic_route(m, n, B, zeta):
    assert kernels.v_pair(m, n, B, zeta) == pytest.approx(kernels.v_pair_direct(m, n, B, zeta), rel=1e-7)


def test_v00_at_origin_equals_bound():
    assert kernels.v_pair(0, 0, 1.0, 0.0) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-12)


def test_v00_bounded():
    zeta = np.concatenate([[0.0], np.geomspace(1e-3, 1e3, 200)])
    v = kernels.v_pair(0, 0, 1.0, zeta)
    with np.errstate(divide="ignore"):
        bound = np.minimum(1 / np.abs(zeta), math.sqrt(math.pi / 4))
    assert np.all(v <= bound * (1 + 1e-12))


def test_v00_monte_carlo():
    # orbital-smeared pair: x1 - x2 is a 2D Gaussian with variance 2/B per coordinate
    rng = np.random.default_rng(12345)
    B = 1.0
    d = rng.normal(scale=math.sqrt(2 / B), size=(10_000_000, 2))
    mc = float(np.mean(1.0 / np.hypot(d[:, 0], d[:, 1])))
    assert abs(mc - kernels.v_pair(0, 0, B, 0.0)) < 1e-2


def test_v_pair_symmetric():
    zeta = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(kernels.v_pair(1, 4, 2.0, zeta), kernels.v_pair(4, 1, 2.0, zeta), rtol=1e-12)
    np.testing.assert_allclose(kernels.v_pair(1, 4, 2.0, zeta), kernels.v_pair(1, 4, 2.0, -zeta), rtol=1e-12)


@pytest.mark.parametrize("B", [0.5, 7.0, 100.0])
def test_field_scaling_covariance(B):
    z = np.array([0.0, 0.2, 1.5, 8.0])
    s = math.sqrt(B)
    np.testing.assert_allclose(kernels.v_single(3, B, z), s * kernels.v_single(3, 1.0, s * z), rtol=1e-9)
    np.testing.assert_allclose(kernels.v_pair(2, 5, B, z), s * kernels.v_pair(2, 5, 1.0, s * z), rtol=1e-9)


@pytest.mark.parametrize("m", [0, 1, 4, 12])
def test_orbital_normalized(m):
    from scipy.integrate import quad

    B = 3.0
    total, _ = quad(lambda r: 2 * np.pi * r * kernels.orbital_density(m, B, r), 0, np.inf, limit=200)
    assert total == pytest.approx(1.0, abs=1e-10)


def test_orbital_completeness():
    # summing all lowest-band orbitals fills the plane at density B/(2 pi)
    B = 2.0
    r = np.linspace(0.0, 3.0, 7)
    total = sum(kernels.orbital_density(m, B, r) for m in range(200))
    np.testing.assert_allclose(total, B / (2 * np.pi), rtol=1e-10)


def test_inequality_residual_tends_to_one():
    z = np.array([1e2, 1e3, 1e4])
    res = kernels.kernel_inequality_residual(0, 0, 1.0, z, -z)
    assert np.all(np.diff(np.abs(np.asarray(res) - 1.0)) < 0)
    assert abs(res[-1] - 1.0) < 1e-3


@settings(max_examples=40, deadline=None)
@given(m=st.integers(0, 10), n=st.integers(0, 10), B=st.sampled_from([0.5, 1.0, 10.0]),
       z=st.floats(-20, 20), zp=st.floats(-20, 20))
def test_inequality_residual_nonnegative(m, n, B, z, zp):
    assert kernels.kernel_inequality_residual(m, n, B, z / math.sqrt(B), zp / math.sqrt(B)) >= -1e-6


def test_kernel_table_roundtrip_and_cache(tmp_path):
    grid = UniformGrid(3.0, 61)
    K = kernels.build_kernel_table(2.0, 3, grid, cache_dir=tmp_path)
    assert K.v_single.shape == (4, 61)
    files = list(tmp_path.iterdir())
    assert len(files) == 1
    again = kernels.build_kernel_table(2.0, 3, grid, cache_dir=tmp_path)
    np.testing.assert_array_equal(K.v_pair, again.v_pair)
    K.save(tmp_path / "t.npz")
    loaded = kernels.KernelTable.load(tmp_path / "t.npz")
    np.testing.assert_array_equal(loaded.v_single, K.v_single)
    assert loaded.cache_key() == K.cache_key()
    small = K.restrict(1)
    assert small.channels == 2
    np.testing.assert_array_equal(small.pair_matrix(0, 1), K.pair_matrix(0, 1))


def test_kernel_table_values_match_pointwise():
    grid = UniformGrid(2.0, 21)
    K = kernels.build_kernel_table(1.0, 2, grid)
    np.testing.assert_allclose(K.v_single[2], kernels.v_single(2, 1.0, grid.z), rtol=1e-10)
    np.testing.assert_allclose(K.v_pair[1, 2], kernels.v_pair(1, 2, 1.0, grid.difference_z()), rtol=1e-10)
