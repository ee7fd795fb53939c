"""Galerkin boundary operators and layer-potential evaluation.

Conventions (outward normal ``n``, kernel ``G(x, y) = 1 / (4 pi |x - y|)``):

* simple layer ``U sigma(x) = int G(x, y) sigma(y) dy``
* double layer ``W q(x) = int (y - x) . n_y / (4 pi |x - y|^3) q(y) dy``,
  so that ``W 1`` is the indicator of the interior domain and the Dirichlet
  trace of ``W q`` jumps by ``+q`` from exterior to interior.

Assembled matrices (``chi`` = P0 basis, ``phi`` = P1 basis)::

    V[a, b] = <U chi_b, chi_a>
    K[a, j] = <W phi_j, chi_a>                  (principal value)
    T[j, k] = <curl phi_k, G curl phi_j>        (hypersingular, >= 0)

On the unit sphere ``V``, ``K`` and ``T`` act on spherical harmonics of
degree ``n`` with eigenvalues ``1/(2n+1)``, ``1/(2(2n+1))`` and
``n(n+1)/(2n+1)``.  The weak traces of ``w = U sigma + W q`` are::

    f_i =  V sigma + (M01/2 + K) q        f_e = V sigma - (M01/2 - K) q
    g_i =  (M01/2 - K)^T sigma + T q      g_e = -(M01/2 + K)^T sigma + T q
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import _kernels
from .mesh import MeshError, SurfaceMesh, distance_to_surface, validate, winding_number
from .quadrature import INV_4PI, PairCase, QuadConfig, gauss_triangle_rule, pair_case, pair_rule
from .spaces import DensityP0, DensityP1, MassMatrices, mass_matrices

logger = logging.getLogger(__name__)

CACHE_VERSION = 2
ON_SURFACE_TOL = 1e-10


class OnSurfaceError(ValueError):
    """An evaluation point lies on the boundary surface."""


@dataclass(frozen=True, eq=False)
class OperatorSet:
    mesh: SurfaceMesh
    V: np.ndarray
    K: np.ndarray
    T: np.ndarray
    masses: MassMatrices
    quad: QuadConfig
    diagnostics: dict = field(default_factory=dict)
    # factorizations reused by the drivers; filled lazily
    factors: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def Kt(self) -> np.ndarray:
        return self.K.T

    @property
    def M00(self):
        return self.masses.M00

    @property
    def M01(self):
        return self.masses.M01

    @property
    def M11(self):
        return self.masses.M11

    @property
    def fingerprint(self) -> str:
        return self.mesh.fingerprint

    @cached_property
    def B_int(self) -> np.ndarray:
        """``M01/2 + K``: maps q to its interior Dirichlet-trace contribution."""
        return 0.5 * self.masses.M01.toarray() + self.K

    @cached_property
    def C_ext(self) -> np.ndarray:
        """``M01/2 - K``."""
        return 0.5 * self.masses.M01.toarray() - self.K

    @cached_property
    def areas(self) -> np.ndarray:
        return np.asarray(self.mesh.areas)

    @cached_property
    def hat_integrals(self) -> np.ndarray:
        return np.asarray(self.masses.M01.sum(axis=0)).ravel()


# ----------------------------------------------------------------------------
# assembly


def _singular_pairs(mesh: SurfaceMesh):
    """Touching triangle pairs grouped by test triangle."""
    vt = mesh.vertex_triangles
    tris = mesh.triangles
    rows, cols, cases, pas, pbs = [], [], [], [], []
    rowptr = [0]
    for a in range(mesh.n_triangles):
        partners = sorted({int(b) for v in tris[a] for b in vt[v]})
        for b in partners:
            case, pa, pb = pair_case(tris[a], tris[b])
            rows.append(a)
            cols.append(b)
            cases.append(int(case))
            pas.append(pa)
            pbs.append(pb)
        rowptr.append(len(cols))
    return (
        np.array(rowptr, dtype=np.int64),
        np.array(rows, dtype=np.int64),
        np.array(cols, dtype=np.int64),
        np.array(cases, dtype=np.int64),
        np.array(pas, dtype=np.int64).reshape(-1, 3),
        np.array(pbs, dtype=np.int64).reshape(-1, 3),
    )


def surface_curls(mesh: SurfaceMesh) -> np.ndarray:
    """(nt, 3, 3) surface curls of the three hat functions on each triangle.

    ``curl phi_k = n x grad phi_k = (P_{k+1} - P_{k+2}) / (2 area)``.
    """
    c = mesh.corners
    two_a = 2.0 * np.asarray(mesh.areas)[:, None]
    return np.stack([(c[:, (k + 1) % 3] - c[:, (k + 2) % 3]) / two_a for k in range(3)], axis=1)


def _hypersingular_from_single_layer(mesh: SurfaceMesh, V: np.ndarray) -> np.ndarray:
    curls = surface_curls(mesh)
    nt, nv = mesh.n_triangles, mesh.n_vertices
    rows = np.repeat(np.arange(nt), 3)
    cols = mesh.triangles.ravel()
    T = np.zeros((nv, nv))
    for d in range(3):
        C = sp.csr_matrix((curls[:, :, d].ravel(), (rows, cols)), shape=(nt, nv))
        VC = (C.T @ V.T).T  # V @ C, dense
        T += (C.T @ VC)
    return 0.5 * (T + T.T)


def assemble(mesh: SurfaceMesh, quad: QuadConfig | None = None, cache_dir=None, threads: int | None = None) -> OperatorSet:
    """Assemble ``V``, ``K``, ``T`` and the mass matrices on ``mesh``.

    Pairs of triangles sharing at least one vertex use Sauter-Schwab rules;
    other pairs use tensor Gauss rules, escalated to ``quad.near_order`` for
    close pairs.  After assembly ``V`` is symmetrized and every row of ``K``
    is corrected so that ``K 1 = areas / 2`` holds exactly (the solid-angle
    identity for a closed polyhedron); the size of the correction is kept in
    ``diagnostics["k_rowsum_defect"]``.

    If ``cache_dir`` is given, the matrices are stored in / read from a
    versioned ``.npz`` file keyed by the mesh fingerprint and ``quad``.
    """
    quad = quad or QuadConfig()
    report = validate(mesh)
    if not report.ok:
        raise MeshError(f"cannot assemble on an invalid mesh: {report}")
    if cache_dir is not None:
        cached = _load_cached(mesh, quad, cache_dir)
        if cached is not None:
            return cached
    if threads:
        import numba

        numba.set_num_threads(int(threads))

    nt, nv = mesh.n_triangles, mesh.n_vertices
    verts = np.ascontiguousarray(mesh.vertices)
    tris = np.ascontiguousarray(mesh.triangles)
    normals = np.ascontiguousarray(mesh.normals)
    areas = np.ascontiguousarray(mesh.areas)
    V = np.zeros((nt, nt))
    K = np.zeros((nt, nv))

    rowptr, prow, pcol, pcase, pa, pb = _singular_pairs(mesh)
    skip = np.zeros((nt, nt), dtype=np.bool_)
    skip[prow, pcol] = True

    lo = gauss_triangle_rule(quad.regular_order)
    hi = gauss_triangle_rule(quad.near_order)
    corners = mesh.corners
    _kernels.assemble_regular(
        tris, normals, areas, np.ascontiguousarray(mesh.centroids), np.ascontiguousarray(mesh.diameters), skip,
        np.ascontiguousarray(lo.physical_points(corners)), np.ascontiguousarray(lo.weights), np.ascontiguousarray(lo.points),
        np.ascontiguousarray(hi.physical_points(corners)), np.ascontiguousarray(hi.weights), np.ascontiguousarray(hi.points),
        float(quad.near_ratio), V, K,
    )
    rv = pair_rule(PairCase.COMMON_VERTEX, quad.singular_order)
    re = pair_rule(PairCase.COMMON_EDGE, quad.singular_order)
    rc = pair_rule(PairCase.COINCIDENT, quad.singular_order)
    c = np.ascontiguousarray
    _kernels.assemble_singular(
        verts, tris, normals, areas, rowptr, pcol, pcase, pa, pb,
        c(rv.bary_x), c(rv.bary_y), c(rv.weights),
        c(re.bary_x), c(re.bary_y), c(re.weights),
        c(rc.bary_x), c(rc.bary_y), c(rc.weights),
        V, K,
    )
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(K))):
        raise FloatingPointError("quadrature produced non-finite matrix entries")

    asym = float(np.abs(V - V.T).max() / np.abs(V).max())
    V = 0.5 * (V + V.T)
    defect = 0.5 * areas - K.sum(axis=1)
    np.add.at(K, (np.repeat(np.arange(nt), 3), tris.ravel()), np.repeat(defect / 3.0, 3))
    T = _hypersingular_from_single_layer(mesh, V)

    diagnostics = {
        "v_asymmetry_before_symmetrization": asym,
        "k_rowsum_defect": float(np.abs(defect).max() / areas.max()),
        "n_singular_pairs": int(len(pcol)),
    }
    logger.debug("assembled operators on %d triangles: %s", nt, diagnostics)
    ops = OperatorSet(mesh, V, K, T, mass_matrices(mesh), quad, diagnostics)
    if cache_dir is not None:
        _store_cached(ops, cache_dir)
    return ops


def _cache_path(mesh: SurfaceMesh, quad: QuadConfig, cache_dir) -> Path:
    key = json.dumps(quad.as_dict(), sort_keys=True)
    import hashlib

    qh = hashlib.sha256(key.encode()).hexdigest()[:12]
    return Path(cache_dir) / f"ops-v{CACHE_VERSION}-{mesh.fingerprint}-{qh}.npz"


def _store_cached(ops: OperatorSet, cache_dir) -> None:
    path = _cache_path(ops.mesh, ops.quad, cache_dir)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(
        path,
        version=CACHE_VERSION,
        fingerprint=ops.mesh.fingerprint,
        quad=json.dumps(ops.quad.as_dict(), sort_keys=True),
        diagnostics=json.dumps(ops.diagnostics, sort_keys=True),
        V=ops.V,
        K=ops.K,
        T=ops.T,
    )


def _load_cached(mesh: SurfaceMesh, quad: QuadConfig, cache_dir):
    path = _cache_path(mesh, quad, cache_dir)
    if not path.exists():
        return None
    with np.load(path) as data:
        if int(data["version"]) != CACHE_VERSION or str(data["fingerprint"]) != mesh.fingerprint:
            return None
        if json.loads(str(data["quad"])) != quad.as_dict():
            return None
        V, K, T = data["V"], data["K"], data["T"]
        diagnostics = json.loads(str(data["diagnostics"]))
    logger.info("loaded cached operators from %s", path)
    return OperatorSet(mesh, V, K, T, mass_matrices(mesh), quad, diagnostics)


# ----------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class WeakTraces:
    """Tested traces of ``w``: Dirichlet ones against P0, Neumann ones against P1."""

    f_i: np.ndarray
    f_e: np.ndarray
    g_i: np.ndarray
    g_e: np.ndarray


def _coeffs(x, n, name):
    c = np.asarray(getattr(x, "coefficients", x), dtype=float)
    if c.shape != (n,):
        raise ValueError(f"{name} has shape {c.shape}, expected ({n},)")
    return c


def boundary_traces(ops: OperatorSet, sigma, q, gauge_constant: float = 0.0) -> WeakTraces:
    """Weak interior/exterior traces of ``U sigma + W q + c 1_G``."""
    s = _coeffs(sigma, ops.mesh.n_triangles, "sigma")
    qq = _coeffs(q, ops.mesh.n_vertices, "q")
    Vs = ops.V @ s
    f_i = Vs + ops.B_int @ qq + gauge_constant * ops.areas
    f_e = Vs - ops.C_ext @ qq
    Tq = ops.T @ qq
    g_i = ops.C_ext.T @ s + Tq
    g_e = -(ops.B_int.T @ s) + Tq
    return WeakTraces(f_i, f_e, g_i, g_e)


# ----------------------------------------------------------------------------
# off-surface evaluation


@dataclass(frozen=True)
class FieldSample:
    point: tuple
    side: str
    value: float


def _layer_potentials(mesh, points, sigma, q, order, sep=3.0, max_depth=12, chunk=64):
    """Evaluate ``U sigma + W q`` at off-surface points.

    Pairs with ``|x - centroid| >= sep * diameter`` use the order-``order``
    rule directly; closer pairs are subdivided into four children until every
    child is well separated.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    nt = mesh.n_triangles
    want_single = sigma is not None
    want_double = q is not None
    dens0 = np.zeros(nt) if sigma is None else _coeffs(sigma, nt, "sigma")
    dens1 = np.zeros(mesh.n_vertices) if q is None else _coeffs(q, mesh.n_vertices, "q")
    rule = gauss_triangle_rule(order)
    corners = np.asarray(mesh.corners)
    areas = np.asarray(mesh.areas)
    normals = np.asarray(mesh.normals)
    cent = np.asarray(mesh.centroids)
    diam = np.asarray(mesh.diameters)
    tv = mesh.triangles

    out = np.zeros(len(pts))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        dist = np.linalg.norm(p[:, None, :] - cent[None], axis=-1)
        near = dist < sep * diam[None, :]
        # far pairs: zero the densities of near triangles point by point
        far_w = (~near).astype(float)
        qp = rule.physical_points(corners)
        d = qp[None] - p[:, None, None, :]
        r = np.linalg.norm(d, axis=-1)
        w = rule.weights[None, None, :] * areas[None, :, None] * far_w[:, :, None]
        val = np.zeros(len(p))
        if want_single:
            val += np.einsum("mtq,t->m", w / r, dens0)
        if want_double:
            qvals = dens1[tv] @ rule.points.T
            dn = np.einsum("mtqk,tk->mtq", d, normals)
            val += np.einsum("mtq,tq->m", w * dn / r**3, qvals)
        out[s:s + chunk] = INV_4PI * val

        pi, ti = np.nonzero(near)
        if len(pi):
            out[s:s + chunk] += _near_sum(
                p, pi, ti, corners, normals, dens0, dens1[tv], rule, sep, max_depth, want_single, want_double
            )
    return out


_CHILDREN = np.array(
    [
        [[1, 0, 0], [0.5, 0.5, 0], [0.5, 0, 0.5]],
        [[0.5, 0.5, 0], [0, 1, 0], [0, 0.5, 0.5]],
        [[0.5, 0, 0.5], [0, 0.5, 0.5], [0, 0, 1]],
        [[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]],
    ]
)


def _near_sum(p, pi, ti, corners, normals, dens0, vert_dens, rule, sep, max_depth, want_single, want_double):
    """Adaptive subdivision for point-triangle pairs that are too close."""
    out = np.zeros(len(p))
    # sub-triangles carried as barycentric corners relative to the parent
    bary = np.broadcast_to(np.eye(3), (len(pi), 3, 3)).copy()
    for _ in range(max_depth + 1):
        sub = np.einsum("nij,njd->nid", bary, corners[ti])
        c = sub.mean(axis=1)
        e = np.stack([sub[:, 1] - sub[:, 0], sub[:, 2] - sub[:, 1], sub[:, 0] - sub[:, 2]], axis=1)
        dsub = np.linalg.norm(e, axis=-1).max(axis=1)
        ok = np.linalg.norm(p[pi] - c, axis=1) >= sep * dsub
        if np.any(ok):
            s_ok = sub[ok]
            area = 0.5 * np.linalg.norm(np.cross(s_ok[:, 1] - s_ok[:, 0], s_ok[:, 2] - s_ok[:, 0]), axis=1)
            qp = np.einsum("qk,nkd->nqd", rule.points, s_ok)
            d = qp - p[pi[ok]][:, None, :]
            r = np.linalg.norm(d, axis=-1)
            w = rule.weights[None, :] * area[:, None]
            val = np.zeros(ok.sum())
            if want_single:
                val += (w / r).sum(axis=1) * dens0[ti[ok]]
            if want_double:
                # parent barycentrics of the quadrature points
                pb = np.einsum("qk,nkj->nqj", rule.points, bary[ok])
                qv = np.einsum("nqj,nj->nq", pb, vert_dens[ti[ok]])
                dn = np.einsum("nqd,nd->nq", d, normals[ti[ok]])
                val += (w * dn / r**3 * qv).sum(axis=1)
            np.add.at(out, pi[ok], INV_4PI * val)
        if np.all(ok):
            return out
        keep = ~ok
        pi, ti = np.repeat(pi[keep], 4), np.repeat(ti[keep], 4)
        bary = np.einsum("cij,njk->ncik", _CHILDREN, bary[keep]).reshape(-1, 3, 3)
    raise OnSurfaceError("evaluation point too close to the surface for the requested order")


def _check_off_surface(mesh, pts):
    dist = distance_to_surface(mesh, pts)
    bad = dist <= ON_SURFACE_TOL * mesh.h
    if np.any(bad):
        raise OnSurfaceError(f"{int(bad.sum())} evaluation point(s) lie on the surface")
    return dist


def eval_single_layer(mesh: SurfaceMesh, sigma, x, quad_order: int = 6):
    """Simple-layer potential ``U sigma`` at one point or an (m, 3) array."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    _check_off_surface(mesh, pts)
    vals = _layer_potentials(mesh, pts, sigma, None, quad_order)
    return float(vals[0]) if np.ndim(x) == 1 else vals


def eval_double_layer(mesh: SurfaceMesh, q, x, quad_order: int = 6):
    """Double-layer potential ``W q`` at one point or an (m, 3) array."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    _check_off_surface(mesh, pts)
    vals = _layer_potentials(mesh, pts, None, q, quad_order)
    return float(vals[0]) if np.ndim(x) == 1 else vals


def classify_side(mesh: SurfaceMesh, points) -> np.ndarray:
    """``True`` for points in the interior domain, by winding number."""
    wn = winding_number(mesh, points)
    frac = np.abs(wn - np.round(wn))
    if np.any(frac > 0.25) or np.any((np.round(wn) != 0) & (np.round(wn) != 1)):
        raise ValueError("ambiguous inside/outside classification")
    return np.round(wn) == 1


def eval_representation(mesh: SurfaceMesh, sigma, q, points, gauge_constant: float = 0.0, quad_order: int = 6):
    """Field ``w = U sigma + W q (+ c inside)`` at off-surface points.

    Returns one :class:`FieldSample` per point, labelled interior/exterior.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    _check_off_surface(mesh, pts)
    inside = classify_side(mesh, pts)
    vals = _layer_potentials(mesh, pts, sigma, q, quad_order)
    vals = vals + gauge_constant * inside
    return [
        FieldSample(tuple(float(c) for c in p), "interior" if i else "exterior", float(v))
        for p, i, v in zip(pts, inside, vals)
    ]


def sample_values(samples) -> np.ndarray:
    return np.array([s.value for s in samples])


def rayleigh_quotients(ops: OperatorSet, p0: DensityP0 | np.ndarray, p1: DensityP1 | np.ndarray) -> dict:
    """Discrete Rayleigh quotients of ``V``, ``K`` and ``T``.

    ``p0`` and ``p1`` are the P0 projection and P1 interpolant of the same
    boundary function.
    """
    a = _coeffs(p0, ops.mesh.n_triangles, "p0")
    b = _coeffs(p1, ops.mesh.n_vertices, "p1")
    return {
        "V": float(a @ ops.V @ a / (a @ (ops.M00 @ a))),
        "K": float(a @ ops.K @ b / (a @ (ops.M01 @ b))),
        "T": float(b @ ops.T @ b / (b @ (ops.M11 @ b))),
    }
