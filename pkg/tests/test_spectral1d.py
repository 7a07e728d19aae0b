from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from landau_tf import spectral1d as sp
from landau_tf.grids import UniformGrid
from landau_tf.validate import square_well_levels, square_well_potential

# frozen transcendental roots for V0 = 10, a = 1
SQUARE_WELL_10_1 = np.array([-8.59278528, -4.62419409, -4.01926245e-3])


def test_square_well_oracle_is_frozen():
    np.testing.assert_allclose(square_well_levels(10.0, 1.0), SQUARE_WELL_10_1, rtol=1e-8, atol=1e-11)


def test_harmonic_oscillator_levels():
    res = sp.negative_spectrum(lambda z: -z * z, UniformGrid(10.0, 2001), cutoff=np.inf, max_count=5)
    np.testing.assert_allclose(res.eigenvalues, [1, 3, 5, 7, 9], atol=1e-4)
    assert res.extrapolated


def test_square_well_levels():
    res = sp.negative_spectrum(square_well_potential(10.0, 1.0), UniformGrid(200.0, 40001))
    assert len(res) == 3
    np.testing.assert_allclose(res.eigenvalues, square_well_levels(10.0, 1.0), atol=1e-6)


def test_richardson_improves_accuracy():
    W = lambda z: -z * z
    g = UniformGrid(8.0, 401)
    plain = sp.negative_spectrum(W, g, cutoff=np.inf, max_count=3, richardson=False).eigenvalues
    extra = sp.negative_spectrum(W, g, cutoff=np.inf, max_count=3).eigenvalues
    exact = np.array([1.0, 3.0, 5.0])
    assert np.max(np.abs(extra - exact)) < 0.05 * np.max(np.abs(plain - exact))


def test_richardson_needs_callable():
    g = UniformGrid(5.0, 101)
    with pytest.raises(ValueError):
        sp.negative_spectrum(np.zeros(g.n), g, richardson=True)


def test_infinite_cutoff_needs_count():
    with pytest.raises(ValueError):
        sp.negative_spectrum(lambda z: 0 * z, UniformGrid(5.0, 101), cutoff=np.inf)


def test_small_box_detected_and_expanded():
    # a wide well nearly filling the box: the upper states press against the walls
    W = square_well_potential(50.0, 1.9)
    g = UniformGrid(2.0, 401)
    with pytest.raises(sp.GridTooSmallError):
        sp.negative_spectrum(W, g, check_box=True)
    res = sp.negative_spectrum(W, g, check_box=True, expand_box=3)
    ref = square_well_levels(50.0, 1.9)
    assert len(res) == ref.size
    np.testing.assert_allclose(res.eigenvalues[:3], ref[:3], atol=1e-2)


def test_shallow_levels_split_off():
    res = sp.negative_spectrum(square_well_potential(10.0, 1.0), UniformGrid(200.0, 40001), shallow_eps=1e-2)
    assert len(res) == 2
    assert res.shallow.size == 1


def test_sum_neg_and_counting():
    W = square_well_potential(10.0, 1.0)
    g = UniformGrid(60.0, 12001)
    assert sp.counting(W, g) == 3
    assert sp.counting(W, g, nu=-5.0) == 1
    assert sp.sum_neg(W, g, richardson=False) == pytest.approx(SQUARE_WELL_10_1.sum(), rel=1e-3)
    shifted = sp.sum_neg(W, g, nu=-4.0, richardson=False)
    assert shifted == pytest.approx(np.sum(SQUARE_WELL_10_1[:2] + 4.0), rel=1e-3)
    with pytest.raises(ValueError):
        sp.sum_neg(W, g, nu=1.0)


def test_non_finite_potential_rejected():
    g = UniformGrid(1.0, 11)
    with pytest.raises(ValueError):
        sp.negative_spectrum(np.full(g.n, np.nan), g, richardson=False)


def test_diagonal_density_integrates_to_count():
    W = square_well_potential(10.0, 1.0)
    g = UniformGrid(30.0, 6001)
    dens = sp.diagonal_density(W, g)
    assert np.sum(dens) * g.h == pytest.approx(sp.counting(W, g), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(depth=st.lists(st.floats(0.0, 30.0), min_size=5, max_size=5), nu=st.floats(-20.0, 0.0))
def test_sturm_matches_bisection(depth, nu):
    g = UniformGrid(4.0, 201)
    W = np.interp(g.z, np.linspace(-4, 4, 5), depth)
    diag, off = sp.tridiagonal(W, g)
    lam = np.linalg.eigvalsh(np.diag(diag) + np.diag(off, 1) + np.diag(off, -1))
    if np.min(np.abs(lam - nu)) > 1e-8:
        assert sp.sturm_count(diag, off, nu) == int(np.sum(lam < nu))
        assert sp.counting(W, g, nu) == int(np.sum(lam < nu))
