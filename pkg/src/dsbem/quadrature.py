"""Quadrature on triangles and on pairs of triangles.

Single-triangle rules are conical (Stroud) products of Gauss-Legendre and
Gauss-Jacobi rules, written in barycentric coordinates with weights that sum
to one, so ``area * sum(w * f)`` approximates an integral over a physical
triangle.

Pair rules for triangles that touch use the Sauter-Schwab regularizing
transformations of the 4-D integration domain.  They are written for the
reference triangle ``{0 <= t2 <= t1 <= 1}`` with the parametrization
``x = (1 - t1) P0 + (t1 - t2) P1 + t2 P2`` and converted to barycentric
coordinates.  The local vertex order of both triangles must put the shared
vertices first and in the same order (see :func:`pair_case`).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

INV_4PI = 1.0 / (4.0 * np.pi)


class PairCase(IntEnum):
    DISJOINT = 0
    COMMON_VERTEX = 1
    COMMON_EDGE = 2
    COINCIDENT = 3

    @classmethod
    def parse(cls, value) -> "PairCase":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            return cls[value.upper()]
        return cls(value)


@dataclass(frozen=True)
class TriangleRule:
    points: np.ndarray   # (n, 3) barycentric coordinates
    weights: np.ndarray  # (n,), sums to one
    order: int

    def __len__(self) -> int:
        return len(self.weights)

    def physical_points(self, corners: np.ndarray) -> np.ndarray:
        """Map to triangles given as (..., 3, 3) corner arrays."""
        return np.einsum("qk,...kd->...qd", self.points, corners)


@dataclass(frozen=True)
class PairRule:
    case: PairCase
    bary_x: np.ndarray   # (n, 3)
    bary_y: np.ndarray   # (n, 3)
    weights: np.ndarray  # (n,), sums to one
    order: int

    def __len__(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class QuadConfig:
    """Quadrature orders used during assembly.

    ``regular_order`` and ``near_order`` are polynomial degrees of the
    triangle rules used for pairs without a shared vertex; ``near_order``
    applies when the centroid distance is below ``near_ratio`` times the larger
    diameter.  ``singular_order`` is the number of Gauss points per axis of
    the 4-D Sauter-Schwab rules.
    """

    regular_order: int = 4
    near_order: int = 8
    singular_order: int = 6
    near_ratio: float = 2.0

    def as_dict(self) -> dict:
        return {
            "regular_order": self.regular_order,
            "near_order": self.near_order,
            "singular_order": self.singular_order,
            "near_ratio": self.near_ratio,
        }


def _gauss01(n: int):
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_triangle_rule(order: int) -> TriangleRule:
    """Triangle rule exact for polynomials of total degree ``order``.

    Conical product: ``n = ceil((order + 1) / 2)`` Gauss-Jacobi points in the
    collapsed direction times ``n`` Gauss-Legendre points.  Order 1 reduces to
    the centroid rule.
    """
    if int(order) != order or not 1 <= order <= 10:
        raise ValueError(f"unsupported triangle rule order {order!r} (1..10)")
    n = (int(order) + 2) // 2
    # s carries weight (1 - s) on [0, 1]
    s, ws = roots_jacobi(n, 1.0, 0.0)
    s = 0.5 * (s + 1.0)
    ws = ws / ws.sum()
    t, wt = _gauss01(n)
    S, Tt = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt).ravel()
    l1 = S.ravel()
    l2 = ((1.0 - S) * Tt).ravel()
    pts = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    W = W / W.sum()
    pts.setflags(write=False)
    W.setflags(write=False)
    return TriangleRule(pts, W, int(order))


def _ss_to_bary(t1, t2):
    return np.stack([1.0 - t1, t1 - t2, t2], axis=1)


@lru_cache(maxsize=None)
def pair_rule(case, order: int) -> PairRule:
    """Quadrature rule for the product of two triangles.

    ``DISJOINT`` returns the tensor product of :func:`gauss_triangle_rule`
    of degree ``order``.  The touching cases return Sauter-Schwab rules with
    ``order`` Gauss points per axis, which remove the ``1/|x - y|``
    singularity through the Jacobian of the transformation.
    """
    case = PairCase.parse(case)
    if case is PairCase.DISJOINT:
        r = gauss_triangle_rule(order)
        n = len(r)
        bx = np.repeat(r.points, n, axis=0)
        by = np.tile(r.points, (n, 1))
        w = np.outer(r.weights, r.weights).ravel()
        return PairRule(case, bx, by, w, int(order))

    if int(order) != order or not 1 <= order <= 20:
        raise ValueError(f"unsupported singular rule order {order!r} (1..20)")
    x, w = _gauss01(int(order))
    grid = np.stack(np.meshgrid(x, x, x, x, indexing="ij"), -1).reshape(-1, 4)
    W = np.einsum("i,j,k,l->ijkl", w, w, w, w).ravel()
    xi, e1, e2, e3 = grid.T

    if case is PairCase.COINCIDENT:
        J = xi**3 * e1**2 * e2
        regions = [
            ((xi, xi * (1 - e1 + e1 * e2)), (xi * (1 - e1 * e2 * e3), xi * (1 - e1)), J),
            ((xi * (1 - e1 * e2 * e3), xi * (1 - e1)), (xi, xi * (1 - e1 + e1 * e2)), J),
            ((xi, xi * e1 * (1 - e2 + e2 * e3)), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), J),
            ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * (1 - e2 + e2 * e3)), J),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * (1 - e2)), J),
            ((xi, xi * e1 * (1 - e2)), (xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), J),
        ]
    elif case is PairCase.COMMON_EDGE:
        J1 = xi**3 * e1**2
        J = J1 * e2
        regions = [
            ((xi, xi * e1 * e3), (xi * (1 - e1 * e2), xi * e1 * (1 - e2)), J1),
            ((xi, xi * e1), (xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), J),
            ((xi * (1 - e1 * e2), xi * e1 * (1 - e2)), (xi, xi * e1 * e2 * e3), J),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3)), (xi, xi * e1), J),
            ((xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3)), (xi, xi * e1 * e2), J),
        ]
    else:
        J = xi**3 * e2
        regions = [
            ((xi, xi * e1), (xi * e2, xi * e2 * e3), J),
            ((xi * e2, xi * e2 * e3), (xi, xi * e1), J),
        ]

    if case is PairCase.COMMON_EDGE:
        # the edge regions are not closed under x <-> y; add the mirror image
        # so symmetric kernels give symmetric matrices
        regions = [(rx, ry, 0.5 * jac) for rx, ry, jac in regions] + [(ry, rx, 0.5 * jac) for rx, ry, jac in regions]
    bx = np.concatenate([_ss_to_bary(*rx) for rx, _, _ in regions])
    by = np.concatenate([_ss_to_bary(*ry) for _, ry, _ in regions])
    # both reference triangles have area 1/2
    wts = 4.0 * np.concatenate([W * jac for _, _, jac in regions])
    for arr in (bx, by, wts):
        arr.setflags(write=False)
    return PairRule(case, bx, by, wts, int(order))


def pair_case(ta, tb):
    """Adjacency case and local vertex orders for two index triples.

    Returns ``(case, perm_a, perm_b)`` where ``ta[perm_a]`` and ``tb[perm_b]``
    list the shared vertices first, in the same order.
    """
    ta = [int(v) for v in ta]
    tb = [int(v) for v in tb]
    shared = sorted(v for v in ta if v in tb)
    n = len(shared)
    if n == 0:
        return PairCase.DISJOINT, (0, 1, 2), (0, 1, 2)
    if n == 3:
        return PairCase.COINCIDENT, tuple(ta.index(v) for v in shared), tuple(tb.index(v) for v in shared)
    if n == 2:
        u, v = shared
        ia = (ta.index(u), ta.index(v))
        ib = (tb.index(u), tb.index(v))
        pa = ia + tuple({0, 1, 2} - set(ia))
        pb = ib + tuple({0, 1, 2} - set(ib))
        return PairCase.COMMON_EDGE, pa, pb
    s = shared[0]
    ia, ib = ta.index(s), tb.index(s)
    pa = (ia,) + tuple(k for k in range(3) if k != ia)
    pb = (ib,) + tuple(k for k in range(3) if k != ib)
    return PairCase.COMMON_VERTEX, pa, pb


def _vertex_keys(tri):
    return [tuple(float(c) for c in p) for p in tri]


def integrate_kernel_pair(tri_a, tri_b, kernel: str = "single_layer", basis_a=None, basis_b=None, order=None):
    """Integrate ``basis_a(x) k(x, y) basis_b(y)`` over two flat triangles.

    Parameters
    ----------
    tri_a, tri_b : (3, 3) array_like
        Corner coordinates; coincident corners identify shared vertices.
        The normal of ``tri_b`` follows its winding.
    kernel : {"single_layer", "double_layer"}
        ``1/(4 pi |x-y|)`` or ``(y-x).n_y / (4 pi |x-y|^3)``.
    basis_a, basis_b : None or int
        ``None`` for the constant basis, ``k`` for the linear hat function of
        local corner ``k``.
    order : int, optional
        Defaults to 4 for disjoint triangles and 6 otherwise.
    """
    A = np.asarray(tri_a, dtype=float)
    B = np.asarray(tri_b, dtype=float)
    ka, kb = _vertex_keys(A), _vertex_keys(B)
    # number vertices in sorted coordinate order so that swapping the two
    # triangles reuses the same parametrization of the shared vertices
    keys = {k: i for i, k in enumerate(sorted(set(ka + kb)))}
    case, pa, pb = pair_case([keys[k] for k in ka], [keys[k] for k in kb])
    na = np.cross(A[1] - A[0], A[2] - A[0])
    nb = np.cross(B[1] - B[0], B[2] - B[0])
    area_a, area_b = 0.5 * np.linalg.norm(na), 0.5 * np.linalg.norm(nb)
    if area_a <= 0 or area_b <= 0:
        raise ValueError("degenerate triangle")
    nb = nb / (2.0 * area_b)
    if order is None:
        order = 4 if case is PairCase.DISJOINT else 6
    rule = pair_rule(case, order)

    pa, pb = list(pa), list(pb)
    x = rule.bary_x @ A[pa]
    y = rule.bary_y @ B[pb]
    fa = np.ones(len(rule)) if basis_a is None else rule.bary_x[:, pa.index(basis_a)]
    fb = np.ones(len(rule)) if basis_b is None else rule.bary_y[:, pb.index(basis_b)]
    d = y - x
    r = np.linalg.norm(d, axis=1)
    if kernel == "single_layer":
        k = INV_4PI / r
    elif kernel == "double_layer":
        if case is PairCase.COINCIDENT:
            return 0.0
        k = INV_4PI * (d @ nb) / r**3
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    return float(area_a * area_b * np.sum(rule.weights * fa * k * fb))
