"""Strong Thomas-Fermi theory for a spherically symmetric atom in the lowest Landau band.

Functional: (4 pi^4 / 3B^2) int rho^3 - int Z/|x| rho + D(rho, rho).
TF equation: (4 pi^4 / B^2) rho^2 = [phi + nu]_+, phi = Z/|x| - rho * |x|^-1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .grids import RadialGrid

log = logging.getLogger(__name__)

SUPPORT_RADIUS_CONST = 3.3 * np.pi ** 2


class ConvergenceError(RuntimeError):
    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


class GridExtensionError(RuntimeError):
    """The density reaches the end of the radial grid."""


@dataclass(frozen=True)
class EnergyReport:
    kinetic_like: float
    attraction: float
    repulsion: float
    total: float
    N: float
    chemical_potential: float

    @classmethod
    def from_terms(cls, kinetic, attraction, repulsion, N, mu):
        return cls(float(kinetic), float(attraction), float(repulsion),
                   float(kinetic + attraction + repulsion), float(N), float(mu))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RadialDensity:
    grid: RadialGrid
    rho: np.ndarray = field(repr=False)
    Z: float
    B: float
    N: float
    nu: float = 0.0
    diagnostics: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if np.any(self.rho < 0):
            raise ValueError("density must be nonnegative")

    @property
    def r(self) -> np.ndarray:
        return self.grid.r

    def screening(self) -> np.ndarray:
        """rho * |x|^-1 on the grid."""
        return _newton_matrix(self.grid) @ self.rho

    def phi(self, r=None):
        """phi(r) = Z/r - (rho * |x|^-1)(r); outside the grid the screening is N/r."""
        if r is None:
            return self.Z / self.r - self.screening()
        r = np.asarray(r, dtype=float)
        return self.Z / r - self.screening_at(r)

    def screening_at(self, r):
        r = np.asarray(r, dtype=float)
        spline = self.diagnostics.get("_spline")
        if spline is None:
            spline = CubicSpline(self.r, self.screening())
            self.diagnostics["_spline"] = spline
        rr = np.clip(r, self.r[0], self.r[-1])
        out = spline(rr)
        return np.where(r > self.r[-1], self.N / np.maximum(r, 1e-300), out)


def support_radius_bound(Z: float, B: float) -> float:
    """Upper bound 3.3 pi^2 Z^(1/5) B^(-2/5) on the support radius."""
    return SUPPORT_RADIUS_CONST * Z ** 0.2 * B ** -0.4


def length_scale(Z: float, B: float) -> float:
    return Z ** 0.2 * B ** -0.4


def default_radial_grid(Z: float, B: float, n: int = 2000, r_max_factor: float = 2.0) -> RadialGrid:
    """Geometric from 1e-6 l to 0.4 l, uniform to 5 l, geometric again to r_max_factor x the radius bound.

    The neutral support radius is ~3.7 l (ions are smaller), the bound ~32.6 l;
    the uniform band carries the density and its edge.
    """
    ell = length_scale(Z, B)
    bound = support_radius_bound(Z, B)
    return RadialGrid.hybrid(1e-6 * ell, 0.4 * ell, r_max_factor * bound, n=n,
                             n_geometric=n // 4, r_outer=5.0 * ell, n_outer=n // 8)


def radial_weights(r: np.ndarray) -> np.ndarray:
    """Trapezoid weights for int_0^r_max f(r) dr, taking f(0) = 0 on the first segment."""
    edges = np.concatenate([[0.0], r])
    w = np.zeros_like(r)
    seg = np.diff(edges)
    w += 0.5 * seg
    w[:-1] += 0.5 * seg[1:]
    return w


_NEWTON_CACHE: dict[str, np.ndarray] = {}


def _newton_matrix(grid: RadialGrid) -> np.ndarray:
    """Matrix K with (K rho)_i = (4pi/r_i) int_0^r_i s^2 rho + 4pi int_r_i^inf s rho."""
    key = grid.key()
    K = _NEWTON_CACHE.get(key)
    if K is not None:
        return K
    r = grid.r
    n = r.size
    edges = np.concatenate([[0.0], r])
    seg = np.diff(edges)
    # C[i, j]: weight of node j in int_0^{r_i}
    full = np.zeros(n)
    full[:] = 0.5 * seg
    full[:-1] += 0.5 * seg[1:]
    C = np.tril(np.broadcast_to(full, (n, n))).copy()
    C[np.arange(n), np.arange(n)] = 0.5 * seg
    inner = C * (r * r)[None, :]
    outer = (full[None, :] - C) * r[None, :]
    K = 4.0 * np.pi * (inner / r[:, None] + outer)
    if len(_NEWTON_CACHE) > 8:
        _NEWTON_CACHE.clear()
    _NEWTON_CACHE[key] = K
    K.setflags(write=False)
    return K


def newton_radial_potential(rho: RadialDensity, r=None):
    """phi(r) = Z/r - (4pi/r) int_0^r s^2 rho - 4pi int_r^inf s rho (shell theorem)."""
    return rho.phi(r)


def mass(grid: RadialGrid, rho: np.ndarray) -> float:
    r = grid.r
    return float(4.0 * np.pi * np.dot(radial_weights(r), r * r * rho))


def _kin_coeff(B):
    return 4.0 * np.pi ** 4 / B ** 2


def tf_residual(Z, B, grid: RadialGrid, rho, nu) -> float:
    """sup_r |4 pi^4 rho^2 / B^2 - [phi + nu]_+| / (Z/r)."""
    r = grid.r
    phi = Z / r - _newton_matrix(grid) @ rho
    return float(np.max(np.abs(_kin_coeff(B) * rho ** 2 - np.maximum(phi + nu, 0.0)) * r / Z))


def _density_from(Z, B, r, screening, nu):
    return B / (2.0 * np.pi ** 2) * np.sqrt(np.maximum(Z / r - screening + nu, 0.0))


def _normalizing_nu(Z, B, grid, screening, N, wmass):
    """nu <= 0 with mass(rho(screening, nu)) = N, or 0 if even nu = 0 falls short."""
    r = grid.r

    def excess(nu):
        return float(np.dot(wmass, _density_from(Z, B, r, screening, nu))) - N

    if excess(0.0) <= 0.0:
        return 0.0
    lo = -1.0
    while excess(lo) > 0.0:
        lo *= 2.0
    return brentq(excess, lo, 0.0, xtol=1e-15, rtol=1e-15)


def _anderson_stage(Z, B, grid, N, mixing, tol, max_iter, depth=8, neutral=False):
    """Damped fixed-point iteration on the screening potential, Anderson-accelerated.

    nu is re-normalized to the target mass on every sweep.
    """
    r = grid.r
    K = _newton_matrix(grid)
    wmass = 4.0 * np.pi * radial_weights(r) * r * r
    psi = np.zeros_like(r)
    xs, fs, history = [], [], []
    nu = 0.0
    for it in range(max_iter):
        nu = 0.0 if neutral else _normalizing_nu(Z, B, grid, psi, N, wmass)
        rho = _density_from(Z, B, r, psi, nu)
        f = K @ rho - psi
        res = float(np.max(np.abs(f) * r / Z))
        history.append(res)
        if res < tol:
            return psi, nu, history, True
        xs.append(psi.copy())
        fs.append(f)
        if len(xs) > depth + 1:
            xs.pop(0)
            fs.pop(0)
        if len(xs) > 1:
            dF = np.diff(np.array(fs), axis=0).T
            dX = np.diff(np.array(xs), axis=0).T
            gamma, *_ = np.linalg.lstsq(dF, f, rcond=None)
            psi = psi + mixing * f - (dX + mixing * dF) @ gamma
        else:
            psi = psi + mixing * f
    return psi, nu, history, False


def _newton_stage(Z, B, grid, rho, nu, N, fix_nu, tol, max_iter=80):
    """Active-set Newton on min(rho, kappa rho^2 - [Z/r - K rho + nu]) = 0.

    With ``fix_nu`` False, nu is an unknown bordered by the mass equation.
    """
    r = grid.r
    n = r.size
    K = _newton_matrix(grid)
    kap = _kin_coeff(B)
    wmass = 4.0 * np.pi * radial_weights(r) * r * r
    scale = Z / r

    def residual(rho, nu):
        G = kap * rho ** 2 - (Z / r - K @ rho + nu)
        F = np.minimum(rho * scale, G) / scale
        if fix_nu:
            return F, G
        return np.concatenate([F, [(np.dot(wmass, rho) - N) / max(N, 1e-300)]]), G

    history = []
    F, G = residual(rho, nu)
    for _ in range(max_iter):
        res = float(np.max(np.abs(F)))
        history.append(res)
        if res < tol:
            return rho, nu, history, True
        active = G < rho * scale
        J = np.where(active[:, None], (2.0 * kap * rho)[:, None] * np.eye(n) + K, np.eye(n) * scale[:, None])
        J /= scale[:, None]
        if fix_nu:
            step = np.linalg.solve(J, -F)
            d_rho, d_nu = step, 0.0
        else:
            col = np.where(active, -1.0, 0.0) / scale
            full = np.zeros((n + 1, n + 1))
            full[:n, :n] = J
            full[:n, n] = col
            full[n, :n] = wmass / max(N, 1e-300)
            step = np.linalg.solve(full, -F)
            d_rho, d_nu = step[:n], step[n]
        lam = 1.0
        while True:
            rho_new = np.maximum(rho + lam * d_rho, 0.0)
            nu_new = min(nu + lam * d_nu, 0.0)
            F_new, G_new = residual(rho_new, nu_new)
            if np.max(np.abs(F_new)) < (1.0 - 1e-4 * lam) * res or lam < 1e-8:
                break
            lam *= 0.5
        if lam < 1e-8:
            break
        rho, nu, F, G = rho_new, nu_new, F_new, G_new
    history.append(float(np.max(np.abs(F))))
    return rho, nu, history, history[-1] < tol


def solve_stf(Z: float, B: float, N: float | None = None, grid: RadialGrid | None = None,
              mixing: float = 0.5, tol: float = 1e-9, max_iter: int = 400):
    """Minimize the STF functional at particle number N (N=None or N=Z: neutral, nu = 0).

    Returns (RadialDensity, EnergyReport). Raises ConvergenceError with the
    residual history when neither stage reaches ``tol``.
    """
    if not (Z > 0 and B > 0):
        raise ValueError("Z and B must be positive")
    if N is None:
        N = Z
    if N <= 0:
        raise ValueError("N must be positive")
    if N > Z * (1.0 + 1e-12):
        raise ValueError(f"STF binds at most Z electrons; N={N} > Z={Z}")
    if not 0.0 < mixing <= 1.0:
        raise ValueError("mixing must lie in (0, 1]")
    neutral = N >= Z * (1.0 - 1e-12)
    if grid is None:
        grid = default_radial_grid(Z, B)
    r = grid.r

    psi, nu, hist_a, ok = _anderson_stage(Z, B, grid, N, mixing, tol, max_iter)
    rho = _density_from(Z, B, r, psi, nu)
    hist_n = []
    if not ok or neutral:
        # polish (neutral: pins nu = 0 exactly) or rescue a stalled mixing stage
        rho_n, nu_n, hist_n, ok_n = _newton_stage(Z, B, grid, rho, 0.0 if neutral else nu, N,
                                                  fix_nu=neutral, tol=tol)
        if ok_n or not ok:
            rho, nu, ok = rho_n, nu_n, ok_n
    history = hist_a + hist_n
    if not ok:
        raise ConvergenceError(f"STF solve (Z={Z}, B={B}, N={N}) stalled at residual {history[-1]:.3g}",
                               history)
    # outside a neutral atom phi cancels to roundoff, which can leave ~1e-16 density there
    rho = np.where(rho > 1e-12 * float(np.max(rho)), rho, 0.0)
    if rho[-1] > 0:
        raise GridExtensionError("density support reaches r_max; extend the radial grid")
    N_got = mass(grid, rho)
    diag = dict(iterations_mixing=len(hist_a), iterations_newton=len(hist_n),
                residual_history=history, tf_residual=tf_residual(Z, B, grid, rho, nu))
    dens = RadialDensity(grid, rho, float(Z), float(B), N_got, float(nu), diag)
    return dens, stf_energy(dens)


def stf_energy(rho: RadialDensity) -> EnergyReport:
    r = rho.r
    w = radial_weights(r) * 4.0 * np.pi * r * r
    dens = rho.rho
    kinetic = _kin_coeff(rho.B) / 3.0 * np.dot(w, dens ** 3)
    attraction = -rho.Z * np.dot(w, dens / r)
    repulsion = 0.5 * np.dot(w, dens * rho.screening())
    return EnergyReport.from_terms(kinetic, attraction, repulsion, np.dot(w, dens), rho.nu)


def semiclassical_energy_form(rho: RadialDensity) -> float:
    """-(B/3pi^2) int [phi + nu]_+^(3/2) + nu N - D(rho, rho)."""
    r = rho.r
    w = radial_weights(r) * 4.0 * np.pi * r * r
    u = np.maximum(rho.phi() + rho.nu, 0.0)
    repulsion = 0.5 * np.dot(w, rho.rho * rho.screening())
    N = np.dot(w, rho.rho)
    return float(-(rho.B / (3.0 * np.pi ** 2)) * np.dot(w, u ** 1.5) + rho.nu * N - repulsion)


@dataclass(frozen=True)
class SupportInfo:
    r_S: float
    last_node: float
    edge_exponent: float


def support_radius(rho: RadialDensity, fit_window: tuple[float, float] = (0.04, 0.25)) -> SupportInfo:
    """Support radius and fitted vanishing exponent of [phi + nu]_+ at the edge.

    r_S is refined by a linear fit of sqrt(rho) (which vanishes linearly at a
    quartic edge) over the last nodes inside the support; the exponent p is
    the slope of log(V_eff) against log(r_S - r) for r_S - r in
    ``fit_window`` x r_S.
    """
    r = rho.r
    dens = rho.rho
    thresh = 1e-12 * float(np.max(dens))
    inside = np.flatnonzero(dens > thresh)
    if inside.size == 0:
        raise ValueError("empty density")
    last = inside[-1]
    if last == r.size - 1:
        raise GridExtensionError("support reaches r_max")
    veff = rho.phi() + rho.nu
    # sqrt(rho) ~ (r_S - r): fit over the outer 3% of the support
    sel = inside[(r[inside] > 0.97 * r[last]) & (r[inside] <= r[last])]
    if sel.size >= 3:
        slope, icpt = np.polyfit(r[sel], np.sqrt(dens[sel]), 1)
        r_S = -icpt / slope if slope < 0 else float(r[last])
        r_S = float(np.clip(r_S, r[last], r[last + 1]))
    else:
        r_S = float(r[last])
    d = r_S - r
    lo, hi = fit_window
    sel = (d > lo * r_S) & (d < hi * r_S) & (veff > 0)
    if np.count_nonzero(sel) < 4:
        exponent = float("nan")
    else:
        exponent = float(np.polyfit(np.log(d[sel]), np.log(veff[sel] * r[sel]), 1)[0])
    return SupportInfo(r_S, float(r[last]), exponent)


def residual_history(rho: RadialDensity):
    return list(rho.diagnostics.get("residual_history", []))
