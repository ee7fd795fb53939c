"""Numba kernels for dense Galerkin assembly of V and K.

Work is split by test triangle (matrix row), so every thread writes to a
disjoint set of rows and no synchronization is needed.
"""

import os

import numba
import numpy as np

# prefer OpenMP: the bundled TBB is often too old and only produces warnings
if "NUMBA_THREADING_LAYER" not in os.environ and "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

INV_4PI = 1.0 / (4.0 * np.pi)


@numba.njit(parallel=True, cache=True, fastmath=False)
def assemble_regular(
    tris, normals, areas, centroids, diameters, skip,
    pts_lo, w_lo, bary_lo, pts_hi, w_hi, bary_hi, near_ratio,
    V, K,
):
    nt = tris.shape[0]
    for a in numba.prange(nt):
        for b in range(nt):
            if skip[a, b]:
                continue
            dx = centroids[a, 0] - centroids[b, 0]
            dy = centroids[a, 1] - centroids[b, 1]
            dz = centroids[a, 2] - centroids[b, 2]
            dist = np.sqrt(dx * dx + dy * dy + dz * dz)
            diam = max(diameters[a], diameters[b])
            if dist < near_ratio * diam:
                px = pts_hi[a]
                wx = w_hi
                py = pts_hi[b]
                wy = w_hi
                by = bary_hi
            else:
                px = pts_lo[a]
                wx = w_lo
                py = pts_lo[b]
                wy = w_lo
                by = bary_lo
            n0 = normals[b, 0]
            n1 = normals[b, 1]
            n2 = normals[b, 2]
            v = 0.0
            k0 = 0.0
            k1 = 0.0
            k2 = 0.0
            for i in range(px.shape[0]):
                xi0 = px[i, 0]
                xi1 = px[i, 1]
                xi2 = px[i, 2]
                for j in range(py.shape[0]):
                    d0 = py[j, 0] - xi0
                    d1 = py[j, 1] - xi1
                    d2 = py[j, 2] - xi2
                    r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                    ww = wx[i] * wy[j]
                    inv = 1.0 / r
                    v += ww * inv
                    kd = ww * (d0 * n0 + d1 * n1 + d2 * n2) * inv * inv * inv
                    k0 += kd * by[j, 0]
                    k1 += kd * by[j, 1]
                    k2 += kd * by[j, 2]
            scale = INV_4PI * areas[a] * areas[b]
            V[a, b] = scale * v
            K[a, tris[b, 0]] += scale * k0
            K[a, tris[b, 1]] += scale * k1
            K[a, tris[b, 2]] += scale * k2


@numba.njit(parallel=True, cache=True, fastmath=False)
def assemble_singular(
    vertices, tris, normals, areas,
    rowptr, pair_b, pair_case, perm_a, perm_b,
    bx_v, by_v, w_v, bx_e, by_e, w_e, bx_c, by_c, w_c,
    V, K,
):
    nt = tris.shape[0]
    for a in numba.prange(nt):
        for p in range(rowptr[a], rowptr[a + 1]):
            b = pair_b[p]
            case = pair_case[p]
            if case == 1:
                bx = bx_v
                by = by_v
                w = w_v
            elif case == 2:
                bx = bx_e
                by = by_e
                w = w_e
            else:
                bx = bx_c
                by = by_c
                w = w_c
            A0 = vertices[tris[a, perm_a[p, 0]]]
            A1 = vertices[tris[a, perm_a[p, 1]]]
            A2 = vertices[tris[a, perm_a[p, 2]]]
            B0 = vertices[tris[b, perm_b[p, 0]]]
            B1 = vertices[tris[b, perm_b[p, 1]]]
            B2 = vertices[tris[b, perm_b[p, 2]]]
            n0 = normals[b, 0]
            n1 = normals[b, 1]
            n2 = normals[b, 2]
            v = 0.0
            k0 = 0.0
            k1 = 0.0
            k2 = 0.0
            for q in range(w.shape[0]):
                d0 = (by[q, 0] * B0[0] + by[q, 1] * B1[0] + by[q, 2] * B2[0]) - (
                    bx[q, 0] * A0[0] + bx[q, 1] * A1[0] + bx[q, 2] * A2[0])
                d1 = (by[q, 0] * B0[1] + by[q, 1] * B1[1] + by[q, 2] * B2[1]) - (
                    bx[q, 0] * A0[1] + bx[q, 1] * A1[1] + bx[q, 2] * A2[1])
                d2 = (by[q, 0] * B0[2] + by[q, 1] * B1[2] + by[q, 2] * B2[2]) - (
                    bx[q, 0] * A0[2] + bx[q, 1] * A1[2] + bx[q, 2] * A2[2])
                r = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                inv = 1.0 / r
                v += w[q] * inv
                if case != 3:
                    kd = w[q] * (d0 * n0 + d1 * n1 + d2 * n2) * inv * inv * inv
                    k0 += kd * by[q, 0]
                    k1 += kd * by[q, 1]
                    k2 += kd * by[q, 2]
            scale = INV_4PI * areas[a] * areas[b]
            V[a, b] = scale * v
            # local slot k of the rule belongs to vertex tris[b, perm_b[k]]
            K[a, tris[b, perm_b[p, 0]]] += scale * k0
            K[a, tris[b, perm_b[p, 1]]] += scale * k1
            K[a, tris[b, perm_b[p, 2]]] += scale * k2
