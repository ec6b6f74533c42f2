"""Numba-compiled kernels, mirroring the signatures of ``_numpy``.

The all-pairs fill parallelises over test triangles; each test triangle
owns a disjoint row range so no writes race and results are independent
of the thread count.
"""

import numpy as np
from numba import njit, prange

INV4PI = 1.0 / (4.0 * np.pi)


@njit(cache=True, parallel=True)
def galerkin_fill(out, XA, WA, SA, rowmap, XB, WB, SB, colmap, NB, kernel_id, skip):
    nta = XA.shape[0]
    ntb = XB.shape[0]
    qa = XA.shape[1]
    qb = XB.shape[1]
    nsa = SA.shape[1]
    nsb = SB.shape[1]
    for ea in prange(nta):
        block = np.empty((nsa, nsb))
        for eb in range(ntb):
            if skip[ea, eb]:
                continue
            for s in range(nsa):
                for b in range(nsb):
                    block[s, b] = 0.0
            nbx = NB[eb, 0]
            nby = NB[eb, 1]
            nbz = NB[eb, 2]
            for ia in range(qa):
                wa = WA[ea, ia]
                pax = XA[ea, ia, 0]
                pay = XA[ea, ia, 1]
                paz = XA[ea, ia, 2]
                for ib in range(qb):
                    dx = pax - XB[eb, ib, 0]
                    dy = pay - XB[eb, ib, 1]
                    dz = paz - XB[eb, ib, 2]
                    r2 = dx * dx + dy * dy + dz * dz
                    r = np.sqrt(r2)
                    if kernel_id == 0:
                        kern = INV4PI / r
                    else:
                        kern = INV4PI * (dx * nbx + dy * nby + dz * nbz) / (r2 * r)
                    val = wa * WB[eb, ib] * kern
                    for s in range(nsa):
                        vs = val * SA[ia, s]
                        for b in range(nsb):
                            block[s, b] += vs * SB[ib, b]
            for s in range(nsa):
                r_ = rowmap[ea, s]
                for b in range(nsb):
                    out[r_, colmap[eb, b]] += block[s, b]


@njit(cache=True)
def pair_fill(out, pairs, XA, WA, SA, rowmap, XB, WB, SB, colmap, NB, kernel_id):
    qa = XA.shape[1]
    qb = XB.shape[1]
    nsa = SA.shape[1]
    nsb = SB.shape[1]
    block = np.empty((nsa, nsb))
    for p in range(pairs.shape[0]):
        ea = pairs[p, 0]
        eb = pairs[p, 1]
        for s in range(nsa):
            for b in range(nsb):
                block[s, b] = 0.0
        nbx = NB[eb, 0]
        nby = NB[eb, 1]
        nbz = NB[eb, 2]
        for ia in range(qa):
            wa = WA[ea, ia]
            pax = XA[ea, ia, 0]
            pay = XA[ea, ia, 1]
            paz = XA[ea, ia, 2]
            for ib in range(qb):
                dx = pax - XB[eb, ib, 0]
                dy = pay - XB[eb, ib, 1]
                dz = paz - XB[eb, ib, 2]
                r2 = dx * dx + dy * dy + dz * dz
                r = np.sqrt(r2)
                if kernel_id == 0:
                    kern = INV4PI / r
                else:
                    kern = INV4PI * (dx * nbx + dy * nby + dz * nbz) / (r2 * r)
                val = wa * WB[eb, ib] * kern
                for s in range(nsa):
                    vs = val * SA[ia, s]
                    for b in range(nsb):
                        block[s, b] += vs * SB[ib, b]
        for s in range(nsa):
            r_ = rowmap[ea, s]
            for b in range(nsb):
                out[r_, colmap[eb, b]] += block[s, b]


@njit(cache=True)
def singular_fill(out, vx, vy, rows, cols, ny, scale, xref, yref, wts, sx, sy, kernel_id):
    npair = vx.shape[0]
    m = wts.shape[0]
    nsa = sx.shape[1]
    nsb = sy.shape[1]
    block = np.empty((nsa, nsb))
    for p in range(npair):
        for s in range(nsa):
            for b in range(nsb):
                block[s, b] = 0.0
        nbx = ny[p, 0]
        nby = ny[p, 1]
        nbz = ny[p, 2]
        for k in range(m):
            x1 = xref[k, 0]
            x2 = xref[k, 1]
            y1 = yref[k, 0]
            y2 = yref[k, 1]
            px = vx[p, 0, 0] + x1 * (vx[p, 1, 0] - vx[p, 0, 0]) + x2 * (vx[p, 2, 0] - vx[p, 1, 0])
            py = vx[p, 0, 1] + x1 * (vx[p, 1, 1] - vx[p, 0, 1]) + x2 * (vx[p, 2, 1] - vx[p, 1, 1])
            pz = vx[p, 0, 2] + x1 * (vx[p, 1, 2] - vx[p, 0, 2]) + x2 * (vx[p, 2, 2] - vx[p, 1, 2])
            qx = vy[p, 0, 0] + y1 * (vy[p, 1, 0] - vy[p, 0, 0]) + y2 * (vy[p, 2, 0] - vy[p, 1, 0])
            qy = vy[p, 0, 1] + y1 * (vy[p, 1, 1] - vy[p, 0, 1]) + y2 * (vy[p, 2, 1] - vy[p, 1, 1])
            qz = vy[p, 0, 2] + y1 * (vy[p, 1, 2] - vy[p, 0, 2]) + y2 * (vy[p, 2, 2] - vy[p, 1, 2])
            dx = px - qx
            dy = py - qy
            dz = pz - qz
            r2 = dx * dx + dy * dy + dz * dz
            r = np.sqrt(r2)
            if kernel_id == 0:
                kern = INV4PI / r
            else:
                kern = INV4PI * (dx * nbx + dy * nby + dz * nbz) / (r2 * r)
            val = scale[p] * wts[k] * kern
            for s in range(nsa):
                vs = val * sx[k, s]
                for b in range(nsb):
                    block[s, b] += vs * sy[k, b]
        for s in range(nsa):
            r_ = rows[p, s]
            for b in range(nsb):
                out[r_, cols[p, b]] += block[s, b]


@njit(cache=True, parallel=True)
def potential_fill(points, XB, WB, SB, NB, kernel_id):
    npts = points.shape[0]
    ntb = XB.shape[0]
    qb = XB.shape[1]
    nsb = SB.shape[1]
    out = np.zeros((npts, ntb, nsb))
    for p in prange(npts):
        px = points[p, 0]
        py = points[p, 1]
        pz = points[p, 2]
        for eb in range(ntb):
            nbx = NB[eb, 0]
            nby = NB[eb, 1]
            nbz = NB[eb, 2]
            for ib in range(qb):
                dx = px - XB[eb, ib, 0]
                dy = py - XB[eb, ib, 1]
                dz = pz - XB[eb, ib, 2]
                r2 = dx * dx + dy * dy + dz * dz
                r = np.sqrt(r2)
                if kernel_id == 0:
                    kern = INV4PI / r
                else:
                    kern = INV4PI * (dx * nbx + dy * nby + dz * nbz) / (r2 * r)
                val = WB[eb, ib] * kern
                for b in range(nsb):
                    out[p, eb, b] += val * SB[ib, b]
    return out
