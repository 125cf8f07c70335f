"""Bravais lattice, finite torus and momentum-grid arithmetic.

Sites are always handled as integer coefficient pairs (n1, n2) of the basis
(ell1, ell2); conversion to Cartesian vectors happens at the boundary of each
geometric operation, so torus arithmetic stays exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelValidationError
from .policy import NumericPolicy, get_policy


@dataclass(frozen=True)
class LatticeSpec:
    """Bravais basis, torus side, colors and their displacement vectors."""

    ell1: tuple[float, float]
    ell2: tuple[float, float]
    L: int
    colors: tuple[str, ...]
    displacements: dict[str, tuple[float, float]]

    def __post_init__(self):
        e1, e2 = np.asarray(self.ell1, float), np.asarray(self.ell2, float)
        cross = e1[0] * e2[1] - e1[1] * e2[0]
        if abs(cross) <= 0.0:
            raise ModelValidationError("basis vectors are linearly dependent")
        if self.L < 1:
            raise ModelValidationError(f"torus side must be >= 1, got {self.L}")
        if len(set(self.colors)) != len(self.colors) or not self.colors:
            raise ModelValidationError("colors must be a nonempty set of distinct labels")
        missing = [c for c in self.colors if c not in self.displacements]
        if missing:
            raise ModelValidationError(f"colors without displacement vector: {missing}")
        extra = [c for c in self.displacements if c not in self.colors]
        if extra:
            raise ModelValidationError(f"displacements for unknown colors: {extra}")

    @property
    def cell_area(self) -> float:
        e1, e2 = self.basis
        return abs(e1[0] * e2[1] - e1[1] * e2[0])

    @property
    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.ell1, float), np.asarray(self.ell2, float)

    @property
    def n_colors(self) -> int:
        return len(self.colors)

    @property
    def n_sites(self) -> int:
        return self.L * self.L

    def color_index(self, color: str) -> int:
        return self.colors.index(color)

    def displacement(self, color: str) -> np.ndarray:
        return np.asarray(self.displacements[color], float)

    def site_cartesian(self, n1: int, n2: int) -> np.ndarray:
        e1, e2 = self.basis
        return n1 * e1 + n2 * e2


@dataclass(frozen=True)
class MomentumPoint:
    """Point of the finite Brillouin zone, n1/L*G1 + n2/L*G2."""

    n1: int
    n2: int
    cartesian: tuple[float, float]

    @property
    def vec(self) -> np.ndarray:
        return np.asarray(self.cartesian, float)


def reciprocal_basis(spec: LatticeSpec, policy: NumericPolicy | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectors G1, G2 with G_i . ell_j = 2 pi delta_ij."""
    pol = get_policy(policy)
    e1, e2 = spec.basis
    M = np.array([e1, e2])
    G = 2.0 * np.pi * np.linalg.inv(M).T
    resid = np.abs(M @ G.T - 2.0 * np.pi * np.eye(2)).max()
    if resid > pol.geom_tol:
        raise ModelValidationError(f"reciprocal basis residual {resid:g} above tolerance")
    return G[0].copy(), G[1].copy()


def momentum_grid(spec: LatticeSpec) -> list[MomentumPoint]:
    """All L^2 points of the finite-volume Brillouin zone."""
    G1, G2 = reciprocal_basis(spec)
    L = spec.L
    pts = []
    for n1 in range(L):
        for n2 in range(L):
            k = (n1 / L) * G1 + (n2 / L) * G2
            pts.append(MomentumPoint(n1, n2, (k[0], k[1])))
    return pts


def momentum_point(spec: LatticeSpec, n1: int, n2: int) -> MomentumPoint:
    """Grid point with arbitrary integer coefficients (the extended grid D_L)."""
    G1, G2 = reciprocal_basis(spec)
    k = (n1 / spec.L) * G1 + (n2 / spec.L) * G2
    return MomentumPoint(n1, n2, (k[0], k[1]))


def reduce_coefficient(n: int, L: int) -> int:
    """{n}_L = n - L*floor(n/L + 1/2); values lie in [-L/2, L/2)."""
    return n - L * math.floor(n / L + 0.5)


def torus_difference(x: tuple[int, int], y: tuple[int, int], spec: LatticeSpec) -> np.ndarray:
    """(y - x)_L in Cartesian coordinates, coefficients reduced to [-L/2, L/2)."""
    d1 = reduce_coefficient(y[0] - x[0], spec.L)
    d2 = reduce_coefficient(y[1] - x[1], spec.L)
    e1, e2 = spec.basis
    return d1 * e1 + d2 * e2


def kgrid_cartesian(spec: LatticeSpec, N: int) -> np.ndarray:
    """(N*N, 2) array of Brillouin-zone samples (i/N) G1 + (j/N) G2."""
    G1, G2 = reciprocal_basis(spec)
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    return (i.ravel()[:, None] / N) * G1 + (j.ravel()[:, None] / N) * G2
