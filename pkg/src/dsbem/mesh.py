"""Closed triangulated surfaces: loading, generation, validation, statistics.

A :class:`SurfaceMesh` bounds an interior domain ``G``; triangle winding is
counter-clockwise seen from outside, so the per-triangle normals point into
the exterior domain.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MAX_ICOSPHERE_LEVEL = 7


class MeshError(ValueError):
    """Raised when a surface file cannot be turned into a valid closed mesh."""


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    count: int = 1


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __len__(self) -> int:
        return len(self.violations)

    def __str__(self) -> str:
        if self.ok:
            return "mesh valid"
        return "; ".join(f"{v.code}: {v.message}" for v in self.violations)


@dataclass(frozen=True)
class MeshStats:
    h: float
    total_area: float
    signed_volume: float
    n_vertices: int
    n_triangles: int

    def as_dict(self) -> dict:
        return {
            "h": self.h,
            "total_area": self.total_area,
            "signed_volume": self.signed_volume,
            "n_vertices": self.n_vertices,
            "n_triangles": self.n_triangles,
        }


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    """Flat-triangle surface mesh.

    Parameters
    ----------
    vertices : (nv, 3) array_like of float
    triangles : (nt, 3) array_like of int
        Vertex indices, counter-clockwise when seen from the exterior.

    The geometric attributes (``normals``, ``areas``, ``diameters``, ``h``)
    are derived from the winding and cached.  Arrays are read-only so a mesh
    can be shared between threads.
    """

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        t = np.array(self.triangles, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must have shape (n, 3)")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError("triangles must have shape (n, 3)")
        if not np.all(np.isfinite(v)):
            raise MeshError("non-finite vertex coordinate")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle vertex index out of range")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def corners(self) -> np.ndarray:
        """(nt, 3, 3) array of triangle corner coordinates."""
        c = self.vertices[self.triangles]
        c.setflags(write=False)
        return c

    @cached_property
    def _cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    @cached_property
    def areas(self) -> np.ndarray:
        a = 0.5 * np.linalg.norm(self._cross, axis=1)
        a.setflags(write=False)
        return a

    @cached_property
    def normals(self) -> np.ndarray:
        norm = np.linalg.norm(self._cross, axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            n = self._cross / norm[:, None]
        n.setflags(write=False)
        return n

    @cached_property
    def centroids(self) -> np.ndarray:
        c = self.corners.mean(axis=1)
        c.setflags(write=False)
        return c

    @cached_property
    def diameters(self) -> np.ndarray:
        c = self.corners
        e = np.stack(
            [
                np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
                np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
                np.linalg.norm(c[:, 0] - c[:, 2], axis=1),
            ],
            axis=1,
        )
        d = e.max(axis=1)
        d.setflags(write=False)
        return d

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def signed_volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->", c[:, 0], np.cross(c[:, 1], c[:, 2])) / 6.0)

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.vertices).tobytes())
        h.update(np.ascontiguousarray(self.triangles).tobytes())
        return h.hexdigest()[:32]

    @cached_property
    def vertex_triangles(self) -> list[np.ndarray]:
        """Triangles incident to each vertex."""
        order = np.argsort(self.triangles.ravel(), kind="stable")
        verts = self.triangles.ravel()[order]
        splits = np.searchsorted(verts, np.arange(1, self.n_vertices))
        return np.split(order // 3, splits)

    def flipped(self) -> SurfaceMesh:
        """Same surface with every triangle's winding reversed."""
        return SurfaceMesh(self.vertices, self.triangles[:, ::-1])


# ----------------------------------------------------------------------------
# validation


def validate(mesh: SurfaceMesh, area_tol: float = 1e-14) -> ValidationReport:
    """Check closedness, orientation, triangle quality and normal direction.

    Returns a report listing every violated invariant; the report is empty
    iff the mesh is a valid closed, consistently and outward oriented surface.
    """
    out: list[Violation] = []
    tris = mesh.triangles
    if mesh.n_triangles == 0:
        return ValidationReport((Violation("empty", "mesh has no triangles"),))

    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    _, ucounts = np.unique(undirected, axis=0, return_counts=True)
    n_boundary = int(np.sum(ucounts == 1))
    n_nonmanifold = int(np.sum(ucounts > 2))
    if n_boundary:
        out.append(Violation("boundary_edge", f"{n_boundary} edges belong to a single triangle", n_boundary))
    if n_nonmanifold:
        out.append(
            Violation("non_manifold_edge", f"{n_nonmanifold} edges shared by more than two triangles", n_nonmanifold)
        )

    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    n_bad_dir = int(np.sum(dcounts > 1))
    if n_bad_dir:
        out.append(
            Violation(
                "inconsistent_orientation",
                f"{n_bad_dir} directed edges traversed twice (adjacent windings disagree)",
                n_bad_dir,
            )
        )

    degenerate = int(np.sum(mesh.areas <= area_tol * max(mesh.h, 1e-300) ** 2))
    if degenerate:
        out.append(Violation("zero_area", f"{degenerate} triangles with zero area", degenerate))
    else:
        nn = np.linalg.norm(mesh.normals, axis=1)
        bad = int(np.sum(np.abs(nn - 1.0) > 1e-12))
        if bad:
            out.append(Violation("normal_length", f"{bad} normals not of unit length", bad))

    if not (n_boundary or n_nonmanifold or n_bad_dir) and mesh.signed_volume <= 0.0:
        out.append(
            Violation("inward_normals", f"signed volume {mesh.signed_volume:.6g} is not positive")
        )
    return ValidationReport(tuple(out))


def mesh_stats(mesh: SurfaceMesh) -> MeshStats:
    return MeshStats(
        h=mesh.h,
        total_area=mesh.total_area,
        signed_volume=mesh.signed_volume,
        n_vertices=mesh.n_vertices,
        n_triangles=mesh.n_triangles,
    )


def _checked(mesh: SurfaceMesh) -> SurfaceMesh:
    report = validate(mesh)
    codes = report.codes()
    if codes == {"inward_normals"}:
        logger.info("reversing winding to make normals point outward")
        mesh = mesh.flipped()
        report = validate(mesh)
    if not report.ok:
        raise MeshError(str(report))
    return mesh


# ----------------------------------------------------------------------------
# file formats


def _data_lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def _parse_off(text: str):
    lines = list(_data_lines(text))
    if not lines:
        raise MeshError("empty OFF file")
    head = lines[0].split()
    if head[0].upper() != "OFF":
        raise MeshError("missing OFF header")
    rest = head[1:]
    idx = 1
    if not rest:
        rest = lines[1].split()
        idx = 2
    try:
        nv, nf = int(rest[0]), int(rest[1])
        verts = [[float(s) for s in lines[idx + i].split()[:3]] for i in range(nv)]
        faces = []
        for i in range(nf):
            parts = lines[idx + nv + i].split()
            k = int(parts[0])
            if k != 3:
                raise MeshError(f"face {i} has {k} vertices; only triangles are supported")
            faces.append([int(s) for s in parts[1:4]])
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed OFF file: {exc}") from exc
    return verts, faces


def _parse_obj(text: str):
    verts, faces = [], []
    for line in _data_lines(text):
        parts = line.split()
        try:
            if parts[0] == "v":
                verts.append([float(s) for s in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) for p in parts[1:]]
                if len(idx) != 3:
                    raise MeshError("only triangular OBJ faces are supported")
                faces.append([i - 1 if i > 0 else len(verts) + i for i in idx])
        except ValueError as exc:
            raise MeshError(f"malformed OBJ line {line!r}") from exc
    return verts, faces


def load_mesh(path, format: str | None = None, check: bool = True) -> SurfaceMesh:
    """Read an ASCII OFF or OBJ triangle surface and validate it.

    The winding is reversed if needed so that normals point away from the
    enclosed volume; every other violated invariant raises :class:`MeshError`.
    ``check=False`` skips validation (for diagnostics with :func:`validate`).
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    text = path.read_text()
    if fmt == "off":
        verts, faces = _parse_off(text)
    elif fmt == "obj":
        verts, faces = _parse_obj(text)
    else:
        raise MeshError(f"unsupported mesh format {fmt!r}")
    nv = len(verts)
    for i, f in enumerate(faces):
        if any(j < 0 or j >= nv for j in f):
            raise MeshError(f"face {i}: vertex index out of range")
    if any(len(v) != 3 for v in verts):
        raise MeshError("vertex with fewer than three coordinates")
    mesh = SurfaceMesh(np.array(verts, dtype=float), np.array(faces, dtype=np.int64).reshape(-1, 3))
    return _checked(mesh) if check else mesh


def write_off(mesh: SurfaceMesh, path) -> None:
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_triangles} 0"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += ["3 " + " ".join(str(int(i)) for i in t) for t in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


# ----------------------------------------------------------------------------
# generators


def _icosahedron():
    p = (1.0 + 5.0**0.5) / 2.0
    v = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v: np.ndarray, f: np.ndarray):
    edges = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
    uniq, inv = np.unique(edges, axis=0, return_inverse=True)
    inv = inv.ravel()
    mid = 0.5 * (v[uniq[:, 0]] + v[uniq[:, 1]])
    mid /= np.linalg.norm(mid, axis=1, keepdims=True)
    base = len(v)
    nf = len(f)
    m01, m12, m20 = (base + inv[k * nf:(k + 1) * nf] for k in range(3))
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    new = np.concatenate(
        [
            np.stack([a, m01, m20], 1),
            np.stack([m01, b, m12], 1),
            np.stack([m20, m12, c], 1),
            np.stack([m01, m12, m20], 1),
        ]
    )
    return np.vstack([v, mid]), new


def make_icosphere(level: int = 2, radius: float = 1.0) -> SurfaceMesh:
    """Icosahedron refined ``level`` times by midpoint subdivision.

    New vertices are projected back to the sphere after every subdivision, so
    all vertices lie at distance ``radius`` from the origin.
    """
    if level < 0 or int(level) != level:
        raise ValueError("level must be a non-negative integer")
    if level > MAX_ICOSPHERE_LEVEL:
        raise ValueError(f"icosphere level {level} too large (max {MAX_ICOSPHERE_LEVEL})")
    if not radius > 0:
        raise ValueError("radius must be positive")
    v, f = _icosahedron()
    for _ in range(int(level)):
        v, f = _subdivide(v, f)
    # outward winding: normal agrees with the centroid direction on a convex body
    c = v[f]
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
    flip = np.einsum("ij,ij->i", n, c.mean(axis=1)) < 0
    f[flip] = f[flip][:, ::-1]
    return SurfaceMesh(radius * v, f)


def make_box(size=(2.0, 2.0, 2.0), center=(0.0, 0.0, 0.0)) -> SurfaceMesh:
    """Axis-aligned box split into 12 outward-oriented triangles."""
    sx, sy, sz = (0.5 * float(s) for s in size)
    cx, cy, cz = center
    v = np.array(
        [[cx + i * sx, cy + j * sy, cz + k * sz] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)]
    )
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
        (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3),
    ]
    f = []
    for a, b, c, d in quads:
        f += [(a, b, c), (a, c, d)]
    mesh = SurfaceMesh(v, np.array(f))
    return mesh if mesh.signed_volume > 0 else mesh.flipped()


# ----------------------------------------------------------------------------
# point queries


def _closest_point_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Distance from points ``p`` (m,1,3) to triangles (1,nt,3) by region tests."""
    ab, ac = b - a, c - a
    ap = p - a
    d1 = np.einsum("...k,...k->...", ab, ap)
    d2 = np.einsum("...k,...k->...", ac, ap)
    bp = p - b
    d3 = np.einsum("...k,...k->...", ab, bp)
    d4 = np.einsum("...k,...k->...", ac, bp)
    cp = p - c
    d5 = np.einsum("...k,...k->...", ab, cp)
    d6 = np.einsum("...k,...k->...", ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    shape = np.broadcast(d1, d2).shape
    closest = np.empty(shape + (3,))
    done = np.zeros(shape, dtype=bool)

    def take(mask, value):
        nonlocal done
        m = mask & ~done
        closest[m] = np.broadcast_to(value, shape + (3,))[m]
        done |= m

    with np.errstate(invalid="ignore", divide="ignore"):
        take((d1 <= 0) & (d2 <= 0), a)
        take((d3 >= 0) & (d4 <= d3), b)
        take((d6 >= 0) & (d5 <= d6), c)
        v = d1 / (d1 - d3)
        take((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v[..., None] * ab)
        w = d2 / (d2 - d6)
        take((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w[..., None] * ac)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        take((va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0), b + w[..., None] * (c - b))
        denom = 1.0 / (va + vb + vc)
        v = vb * denom
        w = vc * denom
        take(np.ones(shape, dtype=bool), a + v[..., None] * ab + w[..., None] * ac)
    return np.linalg.norm(p - closest, axis=-1)


def distance_to_surface(mesh: SurfaceMesh, points, chunk: int = 256) -> np.ndarray:
    """Euclidean distance from each point to the nearest triangle."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = mesh.corners
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk, None, :]
        d = _closest_point_distance(p, c[None, :, 0], c[None, :, 1], c[None, :, 2])
        out[s:s + chunk] = d.min(axis=1)
    return out


def winding_number(mesh: SurfaceMesh, points, chunk: int = 256) -> np.ndarray:
    """Generalized winding number: 1 inside ``G``, 0 outside.

    Sum of signed solid angles of the triangles (Van Oosterom-Strackee)
    divided by 4*pi.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = mesh.corners
    out = np.empty(len(pts))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk, None, :]
        r1, r2, r3 = c[None, :, 0] - p, c[None, :, 1] - p, c[None, :, 2] - p
        l1, l2, l3 = (np.linalg.norm(r, axis=-1) for r in (r1, r2, r3))
        num = np.einsum("...k,...k->...", r1, np.cross(r2, r3))
        den = (
            l1 * l2 * l3
            + l3 * np.einsum("...k,...k->...", r1, r2)
            + l2 * np.einsum("...k,...k->...", r1, r3)
            + l1 * np.einsum("...k,...k->...", r2, r3)
        )
        out[s:s + chunk] = (2.0 * np.arctan2(num, den)).sum(axis=1) / (4.0 * np.pi)
    return out

