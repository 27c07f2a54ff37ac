"""Compiled stencil kernels over block-packed storage.

Every kernel works on a flat buffer holding one C-ordered 3D block per
rank.  Block ``b`` starts at ``offs[b]``, has shape ``shapes[b]`` and its
local node ``(0, 0, 0)`` sits at global index ``origins[b]``.  A plain
single-domain array is the one-block special case, so serial and
partitioned code paths share these loops (and their rounding).

Node loops run z-outer, x-inner (lexicographic with x fastest).
"""

import numba as nb
import numpy as np

_jit = {"nogil": True, "cache": True}


@nb.njit(**_jit)
def gs_sweep(u, f, h2, mask, offs, shapes):
    """One lexicographic Gauss-Seidel sweep over the masked nodes of every block.

    Unmasked entries (ghosts, Dirichlet nodes) are read but never written,
    so each block sees its ghost layer frozen for the whole sweep.
    """
    for b in range(offs.shape[0]):
        o = offs[b]
        sx, sy, sz = shapes[b, 0], shapes[b, 1], shapes[b, 2]
        di = sy * sz
        for k in range(1, sz - 1):
            for j in range(1, sy - 1):
                for i in range(1, sx - 1):
                    p = o + i * di + j * sz + k
                    if mask[p]:
                        u[p] = (h2 * f[p] + u[p - di] + u[p + di] + u[p - sz]
                                + u[p + sz] + u[p - 1] + u[p + 1]) / 6.0


@nb.njit(**_jit)
def residual(u, f, inv_h2, mask, offs, shapes, out):
    """``out = f - A u`` on masked nodes, zero elsewhere."""
    for b in range(offs.shape[0]):
        o = offs[b]
        sx, sy, sz = shapes[b, 0], shapes[b, 1], shapes[b, 2]
        di = sy * sz
        for p in range(o, o + sx * sy * sz):
            out[p] = 0.0
        for k in range(1, sz - 1):
            for j in range(1, sy - 1):
                for i in range(1, sx - 1):
                    p = o + i * di + j * sz + k
                    if mask[p]:
                        out[p] = f[p] - (6.0 * u[p] - (u[p - di] + u[p + di] + u[p - sz]
                                                       + u[p + sz] + u[p - 1] + u[p + 1])) * inv_h2


@nb.njit(**_jit)
def apply_laplacian(u, inv_h2, mask, offs, shapes, out):
    """``out = A u`` on masked nodes; identity rows elsewhere."""
    for b in range(offs.shape[0]):
        o = offs[b]
        sx, sy, sz = shapes[b, 0], shapes[b, 1], shapes[b, 2]
        di = sy * sz
        for p in range(o, o + sx * sy * sz):
            out[p] = u[p]
        for k in range(1, sz - 1):
            for j in range(1, sy - 1):
                for i in range(1, sx - 1):
                    p = o + i * di + j * sz + k
                    if mask[p]:
                        out[p] = (6.0 * u[p] - (u[p - di] + u[p + di] + u[p - sz]
                                                + u[p + sz] + u[p - 1] + u[p + 1])) * inv_h2


@nb.njit(**_jit)
def restrict_full_weighting(fine, coarse, cmask,
                            f_offs, f_shapes, f_origins,
                            c_offs, c_shapes, c_origins):
    """27-point full weighting into masked coarse nodes; other coarse entries zeroed.

    Coarse global node C reads fine global nodes 2C-1 .. 2C+1 from the same
    block, which must hold them (closed box plus one ghost layer).
    """
    w = np.array([0.5, 1.0, 0.5])
    for b in range(c_offs.shape[0]):
        co = c_offs[b]
        cx, cy, cz = c_shapes[b, 0], c_shapes[b, 1], c_shapes[b, 2]
        fo = f_offs[b]
        fy, fz = f_shapes[b, 1], f_shapes[b, 2]
        for p in range(co, co + cx * cy * cz):
            coarse[p] = 0.0
        # local fine index of the fine node under local coarse node (0, 0, 0)
        bx = 2 * c_origins[b, 0] - f_origins[b, 0]
        by = 2 * c_origins[b, 1] - f_origins[b, 1]
        bz = 2 * c_origins[b, 2] - f_origins[b, 2]
        for k in range(cz):
            for j in range(cy):
                for i in range(cx):
                    p = co + (i * cy + j) * cz + k
                    if not cmask[p]:
                        continue
                    s = 0.0
                    for c in range(3):
                        fk = bz + 2 * k + c - 1
                        for bb in range(3):
                            fj = by + 2 * j + bb - 1
                            for a in range(3):
                                fi = bx + 2 * i + a - 1
                                s += w[a] * w[bb] * w[c] * fine[fo + (fi * fy + fj) * fz + fk]
                    coarse[p] = s / 8.0


@nb.njit(**_jit)
def prolongate_add(coarse, fine, fmask,
                   c_offs, c_shapes, c_origins,
                   f_offs, f_shapes, f_origins):
    """Add the trilinear interpolant of ``coarse`` to masked fine nodes."""
    for b in range(f_offs.shape[0]):
        fo = f_offs[b]
        fx, fy, fz = f_shapes[b, 0], f_shapes[b, 1], f_shapes[b, 2]
        co = c_offs[b]
        cy, cz = c_shapes[b, 1], c_shapes[b, 2]
        for k in range(fz):
            gk = f_origins[b, 2] + k
            k0 = gk // 2 - c_origins[b, 2]
            k1 = (gk + 1) // 2 - c_origins[b, 2]
            for j in range(fy):
                gj = f_origins[b, 1] + j
                j0 = gj // 2 - c_origins[b, 1]
                j1 = (gj + 1) // 2 - c_origins[b, 1]
                for i in range(fx):
                    p = fo + (i * fy + j) * fz + k
                    if not fmask[p]:
                        continue
                    gi = f_origins[b, 0] + i
                    i0 = gi // 2 - c_origins[b, 0]
                    i1 = (gi + 1) // 2 - c_origins[b, 0]
                    # pairwise tree: coincident nodes (all parents equal) copy exactly
                    s = (((coarse[co + (i0 * cy + j0) * cz + k0] + coarse[co + (i1 * cy + j0) * cz + k0])
                          + (coarse[co + (i0 * cy + j1) * cz + k0] + coarse[co + (i1 * cy + j1) * cz + k0]))
                         + ((coarse[co + (i0 * cy + j0) * cz + k1] + coarse[co + (i1 * cy + j0) * cz + k1])
                            + (coarse[co + (i0 * cy + j1) * cz + k1] + coarse[co + (i1 * cy + j1) * cz + k1])))
                    fine[p] += 0.125 * s


def single_block(shape):
    """Block descriptor ``(offs, shapes, origins)`` for one plain array."""
    return (np.zeros(1, dtype=np.int64),
            np.asarray([shape], dtype=np.int64),
            np.zeros((1, 3), dtype=np.int64))
