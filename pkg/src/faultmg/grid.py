"""Nested Cartesian grid hierarchy on the unit cube and single-domain operators.

Fields are plain ``float64`` arrays of node values indexed ``u[i, j, k]``
with node ``(i, j, k)`` at ``(i*h, j*h, k*h)``.  Boxes need not be cubes
(local recovery problems live on subdomain boxes), but the spacing is the
same along every axis.  Dirichlet nodes are the outer layer of the array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import _kernels as K

BoundaryData = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def default_boundary(x, y, z):
    """Harmonic boundary data ``sin(pi (x + sqrt2 y)) sinh(sqrt3 pi z)``."""
    return np.sin(np.pi * (x + np.sqrt(2.0) * y)) * np.sinh(np.sqrt(3.0) * np.pi * z)


def zero_boundary(x, y, z):
    return np.zeros(np.broadcast(x, y, z).shape)


@dataclass(frozen=True)
class Level:
    index: int
    cells: int

    @property
    def h(self) -> float:
        return 1.0 / self.cells

    @property
    def nodes(self) -> int:
        return self.cells + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nodes,) * 3


@dataclass
class GridHierarchy:
    n0: int
    L: int
    boundary: BoundaryData = default_boundary
    levels: list[Level] = field(init=False)

    def __post_init__(self):
        self.levels = [Level(l, self.n0 * 2**l) for l in range(self.L + 1)]

    @property
    def finest(self) -> Level:
        return self.levels[-1]

    def coordinates(self, level: int):
        x = np.linspace(0.0, 1.0, self.levels[level].nodes)
        return np.meshgrid(x, x, x, indexing="ij")

    def boundary_field(self, level: int | None = None) -> np.ndarray:
        """Zero interior with ``g`` on every Dirichlet node."""
        level = self.L if level is None else level
        X, Y, Z = self.coordinates(level)
        u = np.asarray(self.boundary(X, Y, Z), dtype=float)
        u[1:-1, 1:-1, 1:-1] = 0.0
        return u


def build_hierarchy(n0: int, L: int, boundary: BoundaryData = default_boundary) -> GridHierarchy:
    if n0 < 2:
        raise ValueError(f"coarsest grid needs n0 >= 2 cells per dimension, got {n0}")
    if L < 1:
        raise ValueError(f"hierarchy needs at least two levels (L >= 1), got L={L}")
    return GridHierarchy(n0, L, boundary)


def interior_mask(shape) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    mask[1:-1, 1:-1, 1:-1] = True
    return mask


def _check_same(a, b):
    if a.shape != b.shape:
        raise ValueError(f"level mismatch: fields of shape {a.shape} and {b.shape}")


def apply_operator(u: np.ndarray, h: float) -> np.ndarray:
    """7-point ``(6u - sum of axis neighbours)/h^2`` inside, identity on the boundary."""
    u = np.ascontiguousarray(u, dtype=float)
    out = np.empty_like(u)
    K.apply_laplacian(u.reshape(-1), 1.0 / (h * h), interior_mask(u.shape).reshape(-1),
                      *K.single_block(u.shape)[:2], out.reshape(-1))
    return out


def residual(f: np.ndarray, u: np.ndarray, h: float) -> np.ndarray:
    """``f - A u`` at interior nodes, zero on Dirichlet nodes."""
    _check_same(f, u)
    u = np.ascontiguousarray(u, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    out = np.empty_like(u)
    K.residual(u.reshape(-1), f.reshape(-1), 1.0 / (h * h), interior_mask(u.shape).reshape(-1),
               *K.single_block(u.shape)[:2], out.reshape(-1))
    return out


def norm(r: np.ndarray, h: float) -> float:
    """Discrete L2 norm ``sqrt(h^3 * sum r^2)`` over interior nodes."""
    inner = r[1:-1, 1:-1, 1:-1]
    return math.sqrt(h**3 * float(np.sum(inner * inner)))


def gauss_seidel(u: np.ndarray, f: np.ndarray, h: float, sweeps: int = 1) -> None:
    """In-place lexicographic Gauss-Seidel sweeps over the interior."""
    _check_same(f, u)
    if not (u.flags.c_contiguous and u.dtype == np.float64):
        raise ValueError("gauss_seidel works in place on a C-contiguous float64 array")
    f = np.ascontiguousarray(f, dtype=float)
    mask = interior_mask(u.shape).reshape(-1)
    offs, shapes, _ = K.single_block(u.shape)
    for _ in range(sweeps):
        K.gs_sweep(u.reshape(-1), f.reshape(-1), h * h, mask, offs, shapes)


def coarse_shape(shape) -> tuple[int, int, int]:
    cells = [s - 1 for s in shape]
    if any(c % 2 or c < 2 for c in cells):
        raise ValueError(f"cannot restrict below level 0: {tuple(cells)} cells")
    return tuple(c // 2 + 1 for c in cells)


def restrict(fine: np.ndarray) -> np.ndarray:
    """Full weighting inside; boundary nodes injected (so they keep ``g``)."""
    fine = np.ascontiguousarray(fine, dtype=float)
    cshape = coarse_shape(fine.shape)
    coarse = np.empty(cshape)
    fo, fs, forg = K.single_block(fine.shape)
    co, cs, corg = K.single_block(cshape)
    K.restrict_full_weighting(fine.reshape(-1), coarse.reshape(-1), interior_mask(cshape).reshape(-1),
                              fo, fs, forg, co, cs, corg)
    inj = fine[::2, ::2, ::2]
    bnd = ~interior_mask(cshape)
    coarse[bnd] = inj[bnd]
    return coarse


def prolongate(coarse: np.ndarray) -> np.ndarray:
    """Trilinear interpolation inside; zero on the fine Dirichlet nodes."""
    coarse = np.ascontiguousarray(coarse, dtype=float)
    fshape = tuple(2 * (s - 1) + 1 for s in coarse.shape)
    fine = np.zeros(fshape)
    co, cs, corg = K.single_block(coarse.shape)
    fo, fs, forg = K.single_block(fshape)
    K.prolongate_add(coarse.reshape(-1), fine.reshape(-1), interior_mask(fshape).reshape(-1),
                     co, cs, corg, fo, fs, forg)
    return fine


def interior_values(u: np.ndarray) -> np.ndarray:
    """Interior nodes as a vector in lexicographic order (x fastest, z slowest)."""
    return u[1:-1, 1:-1, 1:-1].ravel(order="F")


def set_interior(u: np.ndarray, values: np.ndarray) -> None:
    inner = tuple(s - 2 for s in u.shape)
    u[1:-1, 1:-1, 1:-1] = np.reshape(values, inner, order="F")


def laplacian_matrix(shape, h: float) -> sp.csc_matrix:
    """Sparse matrix of the interior 7-point operator, unknowns ordered as in ``interior_values``."""
    mx, my, mz = (s - 2 for s in shape)

    def second_diff(m):
        return sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])

    ix, iy, iz = sp.identity(mx), sp.identity(my), sp.identity(mz)
    A = (sp.kron(iz, sp.kron(iy, second_diff(mx)))
         + sp.kron(iz, sp.kron(second_diff(my), ix))
         + sp.kron(second_diff(mz), sp.kron(iy, ix)))
    return (A / (h * h)).tocsc()


def boundary_coupling(u: np.ndarray, h: float) -> np.ndarray:
    """Right-hand-side contribution of the Dirichlet values: ``-A u_bnd`` on the interior."""
    ub = np.array(u, dtype=float)
    ub[1:-1, 1:-1, 1:-1] = 0.0
    return -interior_values(apply_operator(ub, h))
