"""Closed-form reference solutions for verification.

Everything here is independent of the Galerkin machinery: real spherical
harmonics built from Cartesian solid-harmonic recurrences, the operator
eigenvalues on the unit sphere, point-source fields, two-sided transmission
solutions on the unit sphere and a brute-force potential evaluator that uses
its own quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from .mesh import SurfaceMesh, distance_to_surface
from .quadrature import gauss_triangle_rule
from .spaces import DensityP0

INV_4PI = 1.0 / (4.0 * np.pi)
MAX_DEGREE = 4

# ----------------------------------------------------------------------------
# solid harmonics as polynomials {(i, j, k): coeff} meaning coeff x^i y^j z^k


def _padd(*terms):
    out: dict = {}
    for scale, poly in terms:
        for mono, c in poly.items():
            out[mono] = out.get(mono, 0.0) + scale * c
    return {k: v for k, v in out.items() if v != 0.0}


def _pmul_var(poly, axis):
    out = {}
    for (i, j, k), c in poly.items():
        e = [i, j, k]
        e[axis] += 1
        out[tuple(e)] = c
    return out


def _pmul_r2(poly):
    return _padd(*((1.0, _pmul_var(_pmul_var(poly, a), a)) for a in range(3)))


def _pdiff(poly, axis):
    out = {}
    for (i, j, k), c in poly.items():
        e = [i, j, k]
        if e[axis]:
            c = c * e[axis]
            e[axis] -= 1
            out[tuple(e)] = out.get(tuple(e), 0.0) + c
    return out


def _peval(poly, pts):
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    out = np.zeros(pts.shape[:-1])
    for (i, j, k), c in poly.items():
        out = out + c * x**i * y**j * z**k
    return out


@lru_cache(maxsize=None)
def _solid_table(lmax: int) -> dict:
    """Racah-normalized real regular solid harmonics ``S_l^m``.

    ``S_0^0 = 1``, ``S_1^0 = z``, ``S_1^1 = x``, ``S_1^-1 = y``, and
    ``int S_l^m(x)^2 dOmega = 4 pi / (2l + 1)`` on the unit sphere.
    """
    S = {(0, 0): {(0, 0, 0): 1.0}}
    for l in range(lmax):
        d = 1.0 if l == 0 else 0.0
        f = np.sqrt((2.0 ** d) * (2 * l + 1) / (2 * l + 2))
        top, bot = S[(l, l)], S[(l, -l)]
        S[(l + 1, l + 1)] = _padd((f, _pmul_var(top, 0)), (-f * (1 - d), _pmul_var(bot, 1)))
        S[(l + 1, -l - 1)] = _padd((f, _pmul_var(top, 1)), (f * (1 - d), _pmul_var(bot, 0)))
        for m in range(-l, l + 1):
            a = (2 * l + 1) / np.sqrt((l + m + 1) * (l - m + 1))
            terms = [(a, _pmul_var(S[(l, m)], 2))]
            if abs(m) <= l - 1:
                b = np.sqrt((l + m) * (l - m)) / np.sqrt((l + m + 1) * (l - m + 1))
                terms.append((-b, _pmul_r2(S[(l - 1, m)])))
            S[(l + 1, m)] = _padd(*terms)
    return S


@dataclass(frozen=True)
class HarmonicMode:
    """Real orthonormal spherical harmonic ``Y_n^m`` on the unit sphere.

    ``m > 0`` selects the cosine-type harmonic, ``m < 0`` the sine-type one
    (``Y_1^1 ~ x``, ``Y_1^-1 ~ y``, ``Y_1^0 ~ z``).
    """

    n: int
    m: int = 0

    def __post_init__(self):
        if not 0 <= self.n <= MAX_DEGREE or abs(self.m) > self.n:
            raise ValueError(f"unsupported harmonic (n={self.n}, m={self.m}); need 0 <= n <= {MAX_DEGREE}, |m| <= n")

    @property
    def norm(self) -> float:
        return float(np.sqrt((2 * self.n + 1) * INV_4PI))

    @property
    def _poly(self):
        return _solid_table(MAX_DEGREE)[(self.n, self.m)]

    def solid(self, x) -> np.ndarray:
        """Homogeneous harmonic polynomial ``r^n Y(x / r)``."""
        return self.norm * _peval(self._poly, np.asarray(x, dtype=float))

    def solid_gradient(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.norm * np.stack([_peval(_pdiff(self._poly, a), x) for a in range(3)], axis=-1)

    def __call__(self, x) -> np.ndarray:
        """``Y`` evaluated at the radial projection of ``x``."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return self.solid(x) / r**self.n

    def racah(self, x) -> np.ndarray:
        """``Y / norm``: the unit-pole normalization (``1``, ``z``, ``x``, ...)."""
        return self(x) / self.norm


def sphere_operator_eigenvalue(op: str, n: int) -> float:
    """Eigenvalue of ``V``, ``K`` or ``T`` on degree-``n`` harmonics of the unit sphere."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    op = op.upper()
    if op == "V":
        return 1.0 / (2 * n + 1)
    if op == "K":
        return 1.0 / (2.0 * (2 * n + 1))
    if op == "T":
        return n * (n + 1) / (2 * n + 1)
    raise ValueError(f"unknown operator {op!r}")


# ----------------------------------------------------------------------------
# point sources


def point_source_field(x0, x) -> np.ndarray | float:
    """``1 / (4 pi |x - x0|)`` for one point or an (m, 3) array."""
    d = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(x0, dtype=float), axis=-1)
    if np.any(d == 0):
        raise ValueError("evaluation point coincides with the source")
    v = INV_4PI / d
    return float(v) if np.ndim(v) == 0 else v


def point_source_gradient(x0, x) -> np.ndarray:
    d = np.asarray(x, dtype=float) - np.asarray(x0, dtype=float)
    r = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise ValueError("evaluation point coincides with the source")
    return -INV_4PI * d / r**3


# ----------------------------------------------------------------------------
# two-sided reference solutions


class _TwoSided:
    """A pair of harmonic functions, one for each side of the surface."""

    def interior(self, x):
        raise NotImplementedError

    def exterior(self, x):
        raise NotImplementedError

    def interior_gradient(self, x):
        raise NotImplementedError

    def exterior_gradient(self, x):
        raise NotImplementedError

    def field(self, x, inside) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.broadcast_to(np.asarray(inside, dtype=bool), (len(x),))
        out = np.empty(len(x))
        if inside.any():
            out[inside] = self.interior(x[inside])
        if (~inside).any():
            out[~inside] = self.exterior(x[~inside])
        return out

    def normal_derivatives_p0(self, mesh: SurfaceMesh, quad_order: int = 6):
        """Triangle averages of ``grad w . n`` on each side, for flat triangles."""
        rule = gauss_triangle_rule(quad_order)
        pts = rule.physical_points(mesh.corners)
        n = np.asarray(mesh.normals)[:, None, :]
        gi = np.sum(self.interior_gradient(pts) * n, axis=-1) @ rule.weights
        ge = np.sum(self.exterior_gradient(pts) * n, axis=-1) @ rule.weights
        return DensityP0(gi), DensityP0(ge)


@dataclass(frozen=True)
class TransmissionReference(_TwoSided):
    """``w_i = a r^n Y`` inside and ``w_e = b r^-(n+1) Y`` outside the unit sphere.

    ``Y`` uses the unit-pole normalization of :meth:`HarmonicMode.racah`, so
    ``n = 0`` gives ``Y = 1`` and ``(n, m) = (1, 0)`` gives ``Y = z``.
    """

    n: int
    m: int
    a: float
    b: float

    @property
    def mode(self) -> HarmonicMode:
        return HarmonicMode(self.n, self.m)

    def _solid(self, x):
        return self.mode.solid(x) / self.mode.norm

    def _solid_gradient(self, x):
        return self.mode.solid_gradient(x) / self.mode.norm

    def _y(self, x):
        return self.mode.racah(x)

    def interior(self, x):
        return self.a * self._solid(x)

    def exterior(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return self.b * self._solid(x) / r ** (2 * self.n + 1)

    def interior_gradient(self, x):
        return self.a * self._solid_gradient(x)

    def exterior_gradient(self, x):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)[..., None]
        k = 2 * self.n + 1
        s = self._solid(x)[..., None]
        return self.b * (self._solid_gradient(x) / r**k - k * s * x / r ** (k + 2))

    # traces on the unit sphere, as functions of the point (radially projected)
    def f_i(self, x):
        return self.a * self._y(x)

    def f_e(self, x):
        return self.b * self._y(x)

    def g_i(self, x):
        return self.n * self.a * self._y(x)

    def g_e(self, x):
        return -(self.n + 1) * self.b * self._y(x)


def transmission_reference(n: int, m: int = 0, a: float = 1.0, b: float = 1.0) -> TransmissionReference:
    if n < 0:
        raise ValueError("degree must be nonnegative")
    return TransmissionReference(int(n), int(m), float(a), float(b))


@dataclass(frozen=True)
class PointSourceReference(_TwoSided):
    """Source outside for the interior field and inside for the exterior field.

    ``w_i = G(., x0_ext)`` is harmonic in the interior domain and
    ``w_e = G(., x0_int)`` is harmonic and decaying in the exterior domain.
    """

    x0_ext: tuple = (0.0, 0.0, 2.0)
    x0_int: tuple = (0.0, 0.0, 0.3)

    def interior(self, x):
        return point_source_field(self.x0_ext, x)

    def exterior(self, x):
        return point_source_field(self.x0_int, x)

    def interior_gradient(self, x):
        return point_source_gradient(self.x0_ext, x)

    def exterior_gradient(self, x):
        return point_source_gradient(self.x0_int, x)

    def f_i(self, x):
        return self.interior(x)

    def f_e(self, x):
        return self.exterior(x)


# ----------------------------------------------------------------------------
# independent quadrature


@lru_cache(maxsize=None)
def _duffy_rule(n: int):
    """Collapsed tensor Gauss-Legendre rule on the unit right triangle.

    Returns barycentric points and weights summing to one.
    """
    x, w = leggauss(n)
    u, wu = 0.5 * (x + 1), 0.5 * w
    U, Vv = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * U  # Jacobian of (u, v) -> (u, u v)
    s, t = U.ravel(), (U * Vv).ravel()
    bary = np.stack([1 - s, s - t, t], axis=1)
    W = W.ravel()
    return bary, W / W.sum()


def _subdivide_bary(levels: int) -> np.ndarray:
    tris = np.eye(3)[None]
    for _ in range(levels):
        a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tris = np.concatenate(
            [np.stack(t, axis=1) for t in ((a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca))]
        )
    return tris


def brute_force_potential(mesh: SurfaceMesh, density, x, dense_order: int = 10, levels: int = 2) -> float:
    """Layer potential of ``density`` at ``x`` by dense per-triangle quadrature.

    A P0 density gives the simple-layer potential, a P1 density the
    double-layer potential.  Each triangle is split uniformly into
    ``4**levels`` pieces carrying a collapsed Gauss rule with ``dense_order``
    points per direction; no singular transformation is used, so ``x`` must be
    at least one mesh size away from the surface.
    """
    x = np.asarray(x, dtype=float)
    if distance_to_surface(mesh, x[None])[0] < mesh.h:
        raise ValueError("point closer to the surface than the mesh size")
    bary, w = _duffy_rule(int(dense_order))
    sub = _subdivide_bary(levels)
    # barycentric coordinates w.r.t. the parent triangle of all points
    lam = np.einsum("qk,skj->sqj", bary, sub).reshape(-1, 3)
    wq = np.tile(w, len(sub)) / len(sub)
    pts = np.einsum("pj,tjd->tpd", lam, mesh.corners)
    d = pts - x
    r = np.linalg.norm(d, axis=-1)
    area = np.asarray(mesh.areas)[:, None]
    c = np.asarray(density.coefficients)
    if density.space == "p0":
        vals = c[:, None] / r
    else:
        nq = np.einsum("tpd,td->tp", d, np.asarray(mesh.normals))
        vals = (c[mesh.triangles] @ lam.T) * nq / r**3
    return float(INV_4PI * np.sum(area * wq * vals))


def sphere_integrate(mesh: SurfaceMesh, f, quad_order: int = 8) -> float:
    """``int_S2 f dOmega`` via radial projection of a star-shaped mesh.

    Uses the solid-angle measure ``(x . n) / |x|^3 dA``, which maps the
    polyhedron onto the unit sphere exactly, so only ``f`` is approximated.
    """
    rule = gauss_triangle_rule(quad_order)
    pts = rule.physical_points(mesh.corners)
    r = np.linalg.norm(pts, axis=-1)
    dens = np.einsum("tqd,td->tq", pts, np.asarray(mesh.normals)) / r**3
    vals = np.asarray(f(pts / r[..., None]), dtype=float)
    return float(np.sum(np.asarray(mesh.areas)[:, None] * rule.weights * dens * vals))
