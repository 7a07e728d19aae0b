"""Uniform z-grids and hybrid radial grids."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class UniformGrid:
    """Symmetric grid on [-z_max, z_max] with an odd number of nodes (z=0 is a node)."""

    z_max: float
    n: int

    def __post_init__(self):
        if not self.z_max > 0:
            raise ValueError(f"z_max must be positive, got {self.z_max}")
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError(f"n must be odd and >= 3, got {self.n}")

    @classmethod
    def from_spacing(cls, z_max: float, h: float) -> "UniformGrid":
        half = max(1, int(np.ceil(z_max / h - 1e-9)))
        return cls(half * h, 2 * half + 1)

    @property
    def z_min(self) -> float:
        return -self.z_max

    @property
    def h(self) -> float:
        return 2.0 * self.z_max / (self.n - 1)

    @property
    def z(self) -> np.ndarray:
        return np.linspace(-self.z_max, self.z_max, self.n)

    @property
    def center(self) -> int:
        return self.n // 2

    def refined(self) -> "UniformGrid":
        """Same box, half the spacing."""
        return UniformGrid(self.z_max, 2 * self.n - 1)

    def doubled_box(self) -> "UniformGrid":
        """Twice the box at the same spacing."""
        return UniformGrid(2.0 * self.z_max, 2 * self.n - 1)

    def difference_z(self) -> np.ndarray:
        """Nodes of the difference grid z_i - z_j: 2n-1 points, same spacing."""
        return self.h * np.arange(-(self.n - 1), self.n)

    def trapezoid_weights(self) -> np.ndarray:
        w = np.full(self.n, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def key(self) -> str:
        return f"{self.z_max!r}:{self.n}"


@dataclass(frozen=True)
class RadialGrid:
    """Geometric spacing from r_1 up to r_switch, uniform from there to r_max."""

    r: np.ndarray = field(repr=False)

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        if r.ndim != 1 or r.size < 3:
            raise ValueError("radial grid needs at least 3 nodes")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise ValueError("radial nodes must be positive and strictly increasing")
        object.__setattr__(self, "r", r)

    @classmethod
    def hybrid(cls, r1: float, r_switch: float, r_max: float, n: int = 2000,
               n_geometric: int | None = None, r_outer: float | None = None,
               n_outer: int = 0) -> "RadialGrid":
        """Geometric on [r1, r_switch), uniform to r_outer, then geometric again to r_max.

        Without ``r_outer`` the uniform part runs to r_max.
        """
        if not 0 < r1 < r_switch < r_max:
            raise ValueError("need 0 < r1 < r_switch < r_max")
        if n_geometric is None:
            n_geometric = n // 4
        geo = np.geomspace(r1, r_switch, n_geometric, endpoint=False)
        if r_outer is None or n_outer == 0:
            return cls(np.concatenate([geo, np.linspace(r_switch, r_max, n - n_geometric)]))
        if not r_switch < r_outer < r_max:
            raise ValueError("need r_switch < r_outer < r_max")
        uni = np.linspace(r_switch, r_outer, n - n_geometric - n_outer, endpoint=False)
        outer = np.geomspace(r_outer, r_max, n_outer)
        return cls(np.concatenate([geo, uni, outer]))

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def key(self) -> str:
        return hashlib.sha1(self.r.tobytes()).hexdigest()[:16]
