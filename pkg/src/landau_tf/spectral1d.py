"""Negative spectra of 1D Schroedinger operators -d^2/dz^2 - W(z) on a Dirichlet box.

Three-point finite differences on the interior nodes of a ``UniformGrid``;
eigenvalues below a cutoff are located by Sturm-sequence bisection
(LAPACK ``stebz`` through ``scipy.linalg.eigh_tridiagonal``) and, when W is
given as a callable, Richardson-extrapolated from spacings h and h/2.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .grids import UniformGrid


class GridTooSmallError(RuntimeError):
    """A returned eigenfunction leaks into the outer part of the box."""


class DiscretizationWarning(UserWarning):
    """Halving the spacing moved an eigenvalue by more than the configured tolerance."""


class SpectrumError(RuntimeError):
    """The two eigenvalue-counting paths disagree."""


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    cutoff: float
    potential_id: str = ""
    extrapolated: bool = False
    shallow: np.ndarray = field(default_factory=lambda: np.empty(0))
    max_correction: float = 0.0

    def __len__(self):
        return self.eigenvalues.size


def sample(W, grid: UniformGrid) -> np.ndarray:
    if callable(W):
        vals = np.asarray(W(grid.z), dtype=float)
        if vals.shape != (grid.n,):
            vals = np.broadcast_to(vals, (grid.n,)).copy()
    else:
        vals = np.asarray(W, dtype=float)
        if vals.shape != (grid.n,):
            raise ValueError(f"potential has {vals.size} samples, grid has {grid.n} nodes")
    if not np.all(np.isfinite(vals)):
        raise ValueError("potential must be finite on the grid")
    return vals


def tridiagonal(W, grid: UniformGrid):
    """Diagonal and off-diagonal of -d^2/dz^2 - W on the interior nodes."""
    w = sample(W, grid)[1:-1]
    h2 = grid.h ** 2
    diag = 2.0 / h2 - w
    off = np.full(w.size - 1, -1.0 / h2)
    return diag, off


def sturm_count(diag, off, x: float) -> int:
    """Number of eigenvalues < x of the symmetric tridiagonal matrix (diag, off)."""
    count = 0
    q = diag[0] - x
    if q < 0:
        count += 1
    off2 = np.asarray(off) ** 2
    tiny = np.finfo(float).tiny
    for d, b2 in zip(diag[1:], off2):
        if q == 0.0:
            q = tiny
        q = d - x - b2 / q
        if q < 0:
            count += 1
    return count


def _eig_tol(W_scale: float) -> float:
    return 1e-10 * max(1.0, W_scale)


def _eigs_below(diag, off, cutoff, tol, max_count=None, vectors=False):
    if np.isfinite(cutoff):
        lower = float(np.min(diag)) - 2.0 * float(np.max(np.abs(off), initial=0.0)) - 1.0
        if cutoff <= lower:
            return np.empty(0), np.empty((diag.size, 0))
        select, rng = "v", (lower, cutoff)
    else:
        if max_count is None:
            raise ValueError("an infinite cutoff needs max_count")
        select, rng = "i", (0, min(max_count, diag.size) - 1)
    if vectors:
        vals, vecs = eigh_tridiagonal(diag, off, select=select, select_range=rng)
    else:
        vals = eigh_tridiagonal(diag, off, eigvals_only=True, select=select, select_range=rng,
                                lapack_driver="stebz", tol=tol)
        vecs = np.empty((diag.size, 0))
    keep = vals < cutoff
    if max_count is not None:
        keep &= np.arange(vals.size) < max_count
    return vals[keep], vecs[:, keep] if vectors else vecs


def _eigs_by_index(diag, off, k, tol):
    if k == 0:
        return np.empty(0)
    return eigh_tridiagonal(diag, off, eigvals_only=True, select="i",
                            select_range=(0, k - 1), lapack_driver="stebz", tol=tol)


def _check_box(vecs, frac_edge=0.1, max_mass=0.01):
    if vecs.shape[1] == 0:
        return
    n = vecs.shape[0]
    k = max(1, int(np.ceil(frac_edge * 0.5 * n)))
    mass = np.sum(vecs[:k] ** 2, axis=0) + np.sum(vecs[-k:] ** 2, axis=0)
    total = np.sum(vecs ** 2, axis=0)
    worst = float(np.max(mass / total))
    if worst > max_mass:
        raise GridTooSmallError(
            f"eigenfunction holds {worst:.2%} of its mass in the outer 10% of the box")


def negative_spectrum(W, grid: UniformGrid, cutoff: float = 0.0, *, richardson: bool | None = None,
                      check_box: bool = False, disc_tol: float | None = None,
                      max_count: int | None = None, shallow_eps: float = 0.0,
                      potential_id: str = "", expand_box: int = 0) -> SpectralResult:
    """Eigenvalues of -d^2/dz^2 - W below ``cutoff`` (cutoff <= 0 for bound states).

    ``cutoff=inf`` together with ``max_count`` returns the lowest eigenvalues
    regardless of sign (diagnostic mode). With ``richardson`` (default: on when
    W is callable) the eigenvalues at spacings h and h/2 are combined as
    (4 lam_{h/2} - lam_h) / 3. Eigenvalues in [cutoff - shallow_eps, cutoff)
    are moved to ``shallow``. With ``check_box`` and ``expand_box > 0`` a
    leaking eigenfunction doubles the box (same spacing, W callable) up to
    ``expand_box`` times before ``GridTooSmallError`` propagates.
    """
    if check_box and expand_box > 0 and callable(W):
        try:
            return negative_spectrum(W, grid, cutoff, richardson=richardson, check_box=True, disc_tol=disc_tol,
                                     max_count=max_count, shallow_eps=shallow_eps, potential_id=potential_id)
        except GridTooSmallError:
            return negative_spectrum(W, grid.doubled_box(), cutoff, richardson=richardson, check_box=True,
                                     disc_tol=disc_tol, max_count=max_count, shallow_eps=shallow_eps,
                                     potential_id=potential_id, expand_box=expand_box - 1)
    if richardson is None:
        richardson = callable(W)
    if richardson and not callable(W):
        raise ValueError("Richardson extrapolation needs W as a callable")
    fine_grid = grid.refined() if richardson else grid
    w_fine = sample(W, fine_grid)
    tol = _eig_tol(float(np.max(np.abs(w_fine))))
    diag_f, off_f = tridiagonal(w_fine, fine_grid)
    lam_f, vecs = _eigs_below(diag_f, off_f, cutoff, tol, max_count, vectors=check_box)
    if check_box:
        _check_box(vecs)
    correction = 0.0
    if richardson:
        diag_c, off_c = tridiagonal(W, grid)
        lam_c = _eigs_by_index(diag_c, off_c, lam_f.size, tol)
        diff = lam_f - lam_c
        lam = lam_f + diff / 3.0
        if diff.size:
            correction = float(np.max(np.abs(diff)))
            if disc_tol is not None:
                bad = np.abs(diff) > disc_tol * np.maximum(1.0, np.abs(lam))
                if np.any(bad):
                    warnings.warn(
                        f"halving h moved {int(bad.sum())} eigenvalue(s) by up to {correction:.3g}",
                        DiscretizationWarning, stacklevel=2)
        lam = np.sort(lam[lam < cutoff])
    else:
        lam = np.asarray(lam_f)
    shallow = lam[lam >= cutoff - shallow_eps] if shallow_eps > 0 else np.empty(0)
    if shallow_eps > 0:
        lam = lam[lam < cutoff - shallow_eps]
    return SpectralResult(np.asarray(lam, dtype=float), float(cutoff), potential_id,
                          bool(richardson), shallow, correction)


def sum_neg(W, grid: UniformGrid, nu: float = 0.0, **kw) -> float:
    """sum_i [lam_i - nu]_- over the discrete spectrum."""
    if nu > 0:
        raise ValueError("shift nu must be nonpositive")
    res = negative_spectrum(W, grid, cutoff=nu, **kw)
    return float(np.sum(res.eigenvalues - nu))


def counting(W, grid: UniformGrid, nu: float = 0.0) -> int:
    """Number of eigenvalues < nu on ``grid`` (no extrapolation).

    Computed twice, by bisection and by a direct Sturm-sequence sweep; a
    mismatch raises ``SpectrumError``.
    """
    diag, off = tridiagonal(W, grid)
    tol = _eig_tol(float(np.max(np.abs(sample(W, grid)))))
    n_bisect = _eigs_below(diag, off, nu, tol)[0].size
    n_sturm = sturm_count(diag, off, nu)
    if n_bisect != n_sturm:
        # an eigenvalue within tol of nu may fall on either side
        lam, _ = _eigs_below(diag, off, nu + 10 * tol, tol)
        if not np.any(np.abs(lam - nu) <= 10 * tol):
            raise SpectrumError(f"bisection count {n_bisect} != Sturm count {n_sturm} at nu={nu}")
    return n_sturm


def diagonal_density(W, grid: UniformGrid, nu: float = 0.0) -> np.ndarray:
    """sum_{lam_i < nu} |psi_i(z)|^2 with sum_j |psi_i(z_j)|^2 h = 1; zero on the walls."""
    diag, off = tridiagonal(W, grid)
    _, vecs = _eigs_below(diag, off, nu, 0.0, vectors=True)
    dens = np.zeros(grid.n)
    if vecs.shape[1]:
        dens[1:-1] = np.sum(vecs ** 2, axis=1) / grid.h
    return dens
