"""Lowest-Landau-band orbitals and the Coulomb kernels of angular-momentum channels.

The kernels are evaluated through their Fourier-Bessel representation. The 2D
Fourier transform of the orbital density |phi_m|^2 is exp(-t) L_m(t) with
t = k^2 / 2B, and the transverse transform of 1/|x| is 2 pi exp(-k|z|) / k, so

    V_m(z)       = sqrt(2B) int_0^inf exp(-a q) exp(-q^2) L_m(q^2) dq
    V_{m,n}(z)   = sqrt(2B) int_0^inf exp(-a q) exp(-2q^2) L_m(q^2) L_n(q^2) dq

with a = sqrt(2B) |z|. Both integrands are entire and bounded by exp(-q^2/2),
so a Gauss-Legendre rule on a truncated q-range converges geometrically for every
a; for large a the range shrinks to the e-folding region of exp(-a q). The position-space route (radial Gauss-Laguerre in the
orbital weight plus the elliptic-integral azimuthal average) is kept in
``v_pair_direct`` as an independent check.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.special as sps
from scipy.integrate import IntegrationWarning, quad

from .grids import UniformGrid

KERNEL_CACHE_VERSION = "landau_tf-kernels-1"

# exp(-Q^2/2) < 1e-20 bounds both integrands beyond Q
_Q_CUT = 9.6
_TAIL = 46.0
_MAX_ORDER = 8192


class QuadratureError(RuntimeError):
    """Successive quadrature orders failed to agree within tolerance."""


class EllipticError(ValueError):
    """Complete elliptic integral requested at k^2 >= 1."""


@dataclass(frozen=True)
class OrbitalParams:
    m: int
    B: float

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise ValueError(f"m must be a nonnegative integer, got {self.m}")
        if not self.B > 0:
            raise ValueError(f"B must be positive, got {self.B}")


def orbital_density(m: int, B: float, r):
    """|phi_m(x_perp)|^2 at radius r, evaluated in log space."""
    OrbitalParams(m, B)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("r must be nonnegative")
    t = 0.5 * B * r * r
    with np.errstate(divide="ignore"):
        log_t = np.log(t)
    if m == 0:
        log_val = -t
    else:
        log_val = np.where(t > 0, m * log_t - t, -np.inf)
    out = B / (2.0 * np.pi) * np.exp(log_val - sps.gammaln(m + 1))
    return out if out.ndim else float(out)


def agm_ellipk(k2):
    """Complete elliptic integral of the first kind K(k), argument k^2, via the AGM."""
    k2 = np.asarray(k2, dtype=float)
    if np.any(k2 >= 1.0):
        raise EllipticError("K(k) diverges at k^2 >= 1")
    a = np.ones_like(k2)
    b = np.sqrt(1.0 - k2)
    for _ in range(64):
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        if np.all(np.abs(a - b) <= 4e-16 * a):
            break
    out = np.pi / (2.0 * a)
    return out if out.ndim else float(out)


@lru_cache(maxsize=None)
def _legendre(order: int):
    x, w = sps.roots_legendre(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _hankel_at_order(pairs, a, order):
    """Gauss-Legendre on [0, L(a)], L = min(Q, 46/a): exp(-aq) < 1e-20 past 46/a."""
    x, w = _legendre(order)
    length = np.minimum(_Q_CUT, _TAIL / np.maximum(a, 1e-300))
    q = np.outer(x, length)
    t = q * q
    base = (w[:, None] * length[None, :]) * np.exp(-a[None, :] * q)
    ms = sorted({m for p in pairs for m in p if m is not None})
    lag = {m: sps.eval_laguerre(m, t) for m in ms}
    e1 = base * np.exp(-t)
    e2 = base * np.exp(-2.0 * t)
    out = np.empty((len(pairs), a.size))
    for i, (m, n) in enumerate(pairs):
        if n is None:
            out[i] = np.einsum("kd,kd->d", e1, lag[m])
        else:
            out[i] = np.einsum("kd,kd,kd->d", e2, lag[m], lag[n])
    return out


def _hankel(pairs, a, order, tol):
    """Integrals for each (m, n) in pairs at each a; order doubled until converged.

    Returns (values, achieved relative change, final order).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    prev = _hankel_at_order(pairs, a, order)
    while True:
        order *= 2
        if order > _MAX_ORDER:
            raise QuadratureError(
                f"kernel quadrature did not reach rel. tol {tol:g} by order {_MAX_ORDER}")
        cur = _hankel_at_order(pairs, a, order)
        change = float(np.max(np.abs(cur - prev) / np.abs(cur))) if cur.size else 0.0
        if change < tol:
            return cur, change, order
        prev = cur


def v_single(m: int, B: float, z, order: int = 64, tol: float = 1e-8):
    """V_m(z): Coulomb potential of the nucleus averaged over the orbital |phi_m|^2."""
    OrbitalParams(m, B)
    z = np.asarray(z, dtype=float)
    a = np.sqrt(2.0 * B) * np.abs(z).ravel()
    vals, _, _ = _hankel([(m, None)], a, order, tol)
    out = np.sqrt(2.0 * B) * vals[0].reshape(z.shape)
    return out if out.ndim else float(out)


def v_pair(m: int, n: int, B: float, zeta, order: int = 64, tol: float = 1e-8):
    """V_{m,n}(zeta): Coulomb interaction of two orbital densities at axial separation zeta."""
    OrbitalParams(m, B)
    OrbitalParams(n, B)
    m, n = min(m, n), max(m, n)
    zeta = np.asarray(zeta, dtype=float)
    a = np.sqrt(2.0 * B) * np.abs(zeta).ravel()
    vals, _, _ = _hankel([(m, n)], a, order, tol)
    out = np.sqrt(2.0 * B) * vals[0].reshape(zeta.shape)
    return out if out.ndim else float(out)


def _ring_kernel(r, rp, zeta):
    """Azimuthal average of 1/|x - x'| for rings of radii r, rp at axial separation zeta."""
    d2 = (r + rp) ** 2 + zeta * zeta
    return (2.0 / np.pi) * agm_ellipk(4.0 * r * rp / d2) / np.sqrt(d2)


def v_pair_direct(m: int, n: int, B: float, zeta: float, order: int = 48) -> float:
    """V_{m,n}(zeta) in position space.

    Outer radial integral: generalized Gauss-Laguerre with weight u^m e^-u / m!.
    Inner radial integral: adaptive quadrature split at r' = r, where the
    elliptic kernel has its logarithmic singularity when zeta = 0.
    Slow; intended as a cross-check of ``v_pair``.
    """
    OrbitalParams(m, B)
    OrbitalParams(n, B)
    if m > 150 or n > 150:
        raise ValueError("direct route limited to m, n <= 150")
    u, w = sps.roots_genlaguerre(order, m)
    w = w / sps.gamma(m + 1)
    scale = 2.0 / B
    log_norm = -sps.gammaln(n + 1)

    def inner(uu):
        r = np.sqrt(scale * uu)

        def f(up):
            if up <= 0.0:
                return 0.0 if n > 0 else float(_ring_kernel(r, 0.0, zeta))
            rp = np.sqrt(scale * up)
            k2 = 4.0 * r * rp / ((r + rp) ** 2 + zeta * zeta)
            if k2 >= 1.0:
                return 0.0
            weight = np.exp(n * np.log(up) - up + log_norm)
            return weight * float(_ring_kernel(r, rp, zeta))

        hi = max(uu, n) + 60.0 + 10.0 * np.sqrt(n + 1.0)
        with warnings.catch_warnings():
            # the logarithmic singularity at r' = r trips quad's roundoff detector
            warnings.simplefilter("ignore", IntegrationWarning)
            val, _ = quad(f, 0.0, hi, points=[uu], limit=400, epsabs=1e-13, epsrel=1e-11)
        return val

    return float(sum(wi * inner(ui) for ui, wi in zip(u, w)))


def kernel_inequality_residual(m: int, n: int, B: float, z, zp, **kw):
    """(1/V_m(z) + 1/V_n(z) + 1/V_m(z') + 1/V_n(z')) V_{m,n}(z - z') - 1."""
    z = np.asarray(z, dtype=float)
    zp = np.asarray(zp, dtype=float)
    inv = (1.0 / v_single(m, B, z, **kw) + 1.0 / v_single(n, B, z, **kw)
           + 1.0 / v_single(m, B, zp, **kw) + 1.0 / v_single(n, B, zp, **kw))
    return inv * v_pair(m, n, B, z - zp, **kw) - 1.0


@dataclass(frozen=True)
class KernelTable:
    """Tabulated V_m on the grid and V_{m,n} on its difference grid.

    ``v_pair[m, n, k]`` is V_{m,n} at ``grid.difference_z()[k]``; entry
    ``k = (grid.n - 1) + i - j`` couples nodes i and j.
    """

    B: float
    m_max: int
    grid: UniformGrid
    v_single: np.ndarray = field(repr=False)
    v_pair: np.ndarray = field(repr=False)
    quadrature_order: int
    achieved_tol: float

    def __post_init__(self):
        for arr in (self.v_single, self.v_pair):
            arr.setflags(write=False)

    @property
    def channels(self) -> int:
        return self.m_max + 1

    def pair_matrix(self, m: int, n: int) -> np.ndarray:
        """Toeplitz matrix V_{m,n}(z_i - z_j) on the grid."""
        k = (self.grid.n - 1) + np.subtract.outer(np.arange(self.grid.n), np.arange(self.grid.n))
        return self.v_pair[m, n][k]

    def restrict(self, m_max: int) -> "KernelTable":
        if m_max > self.m_max:
            raise ValueError(f"table only covers m <= {self.m_max}")
        return KernelTable(self.B, m_max, self.grid,
                           np.array(self.v_single[: m_max + 1]),
                           np.array(self.v_pair[: m_max + 1, : m_max + 1]),
                           self.quadrature_order, self.achieved_tol)

    def cache_key(self) -> str:
        return kernel_cache_key(self.B, self.m_max, self.grid, self.quadrature_order)

    def save(self, path) -> None:
        meta = dict(version=KERNEL_CACHE_VERSION, B=self.B, m_max=self.m_max,
                    z_max=self.grid.z_max, n=self.grid.n,
                    quadrature_order=self.quadrature_order, achieved_tol=self.achieved_tol)
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)),
                     v_single=self.v_single, v_pair=self.v_pair)

    @classmethod
    def load(cls, path) -> "KernelTable":
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != KERNEL_CACHE_VERSION:
                raise ValueError(f"kernel cache {path} has version {meta.get('version')!r}")
            return cls(meta["B"], meta["m_max"], UniformGrid(meta["z_max"], meta["n"]),
                       np.array(data["v_single"]), np.array(data["v_pair"]),
                       meta["quadrature_order"], meta["achieved_tol"])


def kernel_cache_key(B: float, m_max: int, grid: UniformGrid, order: int) -> str:
    raw = f"{KERNEL_CACHE_VERSION}|{B!r}|{m_max}|{grid.key()}|{order}"
    return hashlib.sha1(raw.encode()).hexdigest()[:20]


def build_kernel_table(B: float, m_max: int, grid: UniformGrid, quadrature_order: int = 64,
                       tol: float = 1e-8, cache_dir=None) -> KernelTable:
    """Tabulate V_m (m <= m_max) on ``grid`` and V_{m,n} on the difference grid."""
    OrbitalParams(m_max, B)
    if cache_dir is not None:
        path = Path(cache_dir) / f"kernels-{kernel_cache_key(B, m_max, grid, quadrature_order)}.npz"
        if path.exists():
            return KernelTable.load(path)
    # kernels are even: evaluate on z >= 0 and mirror
    z_half = grid.z[grid.center:]
    d_half = grid.difference_z()[grid.n - 1:]
    singles = [(m, None) for m in range(m_max + 1)]
    pairs = [(m, n) for m in range(m_max + 1) for n in range(m, m_max + 1)]
    try:
        vs, tol_s, ord_s = _hankel(singles, np.sqrt(2.0 * B) * z_half, quadrature_order, tol)
        vp, tol_p, ord_p = _hankel(pairs, np.sqrt(2.0 * B) * d_half, quadrature_order, tol)
    except QuadratureError as exc:
        raise QuadratureError(f"kernel table (B={B}, m_max={m_max}): {exc}") from exc
    vs *= np.sqrt(2.0 * B)
    vp *= np.sqrt(2.0 * B)
    v_single_tab = np.concatenate([vs[:, :0:-1], vs], axis=1)
    v_pair_tab = np.empty((m_max + 1, m_max + 1, 2 * grid.n - 1))
    for row, (m, n) in zip(vp, pairs):
        full = np.concatenate([row[:0:-1], row])
        v_pair_tab[m, n] = full
        v_pair_tab[n, m] = full
    bad = np.argwhere(~(v_pair_tab > 0))
    if bad.size:
        m, n, k = bad[0]
        raise QuadratureError(f"nonpositive V_{{{m},{n}}} at zeta={grid.difference_z()[k]}")
    bad = np.argwhere(~(v_single_tab > 0))
    if bad.size:
        m, j = bad[0]
        raise QuadratureError(f"nonpositive V_{m} at z={grid.z[j]}")
    table = KernelTable(float(B), int(m_max), grid, v_single_tab, v_pair_tab,
                        max(ord_s, ord_p), max(tol_s, tol_p))
    if cache_dir is not None:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        table.save(path)
    return table
