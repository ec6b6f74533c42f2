"""Pure-numpy kernels for dense boundary operator assembly.

Reference implementation and fallback for machines without numba; the
numba backend mirrors these signatures exactly.  Kernel ids: 0 for the
weakly singular kernel 1/(4 pi r), 1 for the dipole kernel
n_y . (x - y) / (4 pi r^3).
"""

import numpy as np

INV4PI = 1.0 / (4.0 * np.pi)


def _kern_batch(kernel_id, d, nb):
    r2 = np.einsum("...x,...x->...", d, d)
    r = np.sqrt(r2)
    if kernel_id == 0:
        return INV4PI / r
    return INV4PI * np.einsum("...x,x->...", d, nb) / (r2 * r)


def galerkin_fill(out, XA, WA, SA, rowmap, XB, WB, SB, colmap, NB, kernel_id, skip):
    """Accumulate Galerkin pair integrals for all non-skipped triangle pairs.

    Rows of ``rowmap`` must be disjoint across test triangles (discontinuous
    test space); columns may repeat.
    """
    nta = XA.shape[0]
    TB = WB[:, :, None] * SB[None, :, :]  # (ntb, qb, nsb)
    for ea in range(nta):
        keep = np.nonzero(skip[ea] == 0)[0]
        if keep.size == 0:
            continue
        d = XA[ea][:, None, None, :] - XB[keep][None, :, :, :]  # (qa, nk, qb, 3)
        r2 = np.einsum("akqx,akqx->akq", d, d)
        r = np.sqrt(r2)
        if kernel_id == 0:
            kern = INV4PI / r
        else:
            kern = INV4PI * np.einsum("akqx,kx->akq", d, NB[keep]) / (r2 * r)
        u = np.einsum("akq,a,as->ksq", kern, WA[ea], SA)
        blocks = np.einsum("ksq,kqb->skb", u, TB[keep])  # (nsa, nk, nsb)
        rows = rowmap[ea]
        cols = colmap[keep]
        np.add.at(out, (rows[:, None, None], cols[None, :, :]), blocks)


def pair_fill(out, pairs, XA, WA, SA, rowmap, XB, WB, SB, colmap, NB, kernel_id):
    """Accumulate Galerkin integrals for an explicit pair list."""
    for ea, eb in pairs:
        d = XA[ea][:, None, :] - XB[eb][None, :, :]  # (qa, qb, 3)
        kern = _kern_batch(kernel_id, d, NB[eb])
        w = WA[ea][:, None] * WB[eb][None, :] * kern
        block = SA.T @ w @ SB  # (nsa, nsb)
        np.add.at(out, (rowmap[ea][:, None], colmap[eb][None, :]), block)


def singular_fill(out, vx, vy, rows, cols, ny, scale, xref, yref, wts, sx, sy, kernel_id):
    """Accumulate singular pair integrals from a substitution table.

    ``vx``/``vy`` hold the permuted vertex triples (a, b, c) defining the
    ordered-triangle parametrisation of each pair; ``scale`` is
    ``4 area_x area_y``.
    """
    npair = vx.shape[0]
    for p in range(npair):
        ax, bx, cx = vx[p]
        ay, by, cy = vy[p]
        X = ax + xref[:, :1] * (bx - ax) + xref[:, 1:] * (cx - bx)
        Y = ay + yref[:, :1] * (by - ay) + yref[:, 1:] * (cy - by)
        d = X - Y
        kern = _kern_batch(kernel_id, d, ny[p])
        vals = scale[p] * wts * kern
        block = sx.T @ (vals[:, None] * sy)
        np.add.at(out, (rows[p][:, None], cols[p][None, :]), block)


def potential_fill(points, XB, WB, SB, NB, kernel_id):
    """Potential matrix mapping panel densities to values at points.

    Returns an array of shape (n_points, ntb, nsb).
    """
    d = points[:, None, None, :] - XB[None, :, :, :]  # (np, ntb, qb, 3)
    r2 = np.einsum("pkqx,pkqx->pkq", d, d)
    r = np.sqrt(r2)
    if kernel_id == 0:
        kern = INV4PI / r
    else:
        kern = INV4PI * np.einsum("pkqx,kx->pkq", d, NB) / (r2 * r)
    return np.einsum("pkq,kq,qb->pkb", kern, WB, SB)
