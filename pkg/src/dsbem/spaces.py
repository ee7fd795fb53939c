"""Boundary function spaces on a surface mesh.

``P0`` (one value per triangle) carries Neumann-type data and the simple-layer
density; continuous ``P1`` (one value per vertex) carries Dirichlet-type data
and the double-layer density.  Data that has already been tested against a
basis (the right-hand side of a Galerkin system) is held in :class:`WeakData`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .mesh import SurfaceMesh
from .quadrature import gauss_triangle_rule

Space = Literal["p0", "p1"]
TRACE_KINDS = ("dirichlet", "neumann", "mixed_int_d_ext_n", "mixed_int_n_ext_d")


class _Density:
    space: Space

    def __init__(self, coefficients):
        c = np.array(coefficients, dtype=float).ravel()
        if not np.all(np.isfinite(c)):
            raise ValueError(f"non-finite {self.space} coefficient")
        c.setflags(write=False)
        self.coefficients = c

    def __len__(self):
        return len(self.coefficients)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coefficients, dtype=dtype)

    def _coerce(self, other):
        if isinstance(other, _Density):
            if other.space != self.space:
                raise TypeError(f"cannot combine {self.space} and {other.space} densities")
            return other.coefficients
        return other

    def __add__(self, other):
        return type(self)(self.coefficients + self._coerce(other))

    def __sub__(self, other):
        return type(self)(self.coefficients - self._coerce(other))

    def __mul__(self, s):
        return type(self)(self.coefficients * s)

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(-self.coefficients)

    def __repr__(self):
        return f"{type(self).__name__}(n={len(self)})"

    def to_json(self) -> dict:
        return {self.space: [float(c) for c in self.coefficients]}

    def check(self, mesh: SurfaceMesh):
        n = mesh.n_triangles if self.space == "p0" else mesh.n_vertices
        if len(self) != n:
            raise ValueError(f"{self.space} density has {len(self)} coefficients, mesh needs {n}")
        return self


class DensityP0(_Density):
    """Piecewise-constant density, one coefficient per triangle."""

    space = "p0"


class DensityP1(_Density):
    """Continuous piecewise-linear density, one coefficient per vertex."""

    space = "p1"


def density_from_json(obj: dict) -> _Density:
    if set(obj) == {"p0"}:
        return DensityP0(obj["p0"])
    if set(obj) == {"p1"}:
        return DensityP1(obj["p1"])
    raise ValueError('density must be an object with a single key "p0" or "p1"')


@dataclass(frozen=True)
class WeakData:
    """A boundary function given by its moments against a basis.

    ``values[k]`` is the integral of the function times basis function ``k``
    of the ``tested_with`` space.
    """

    values: np.ndarray
    tested_with: Space

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite weak data")
        if self.tested_with not in ("p0", "p1"):
            raise ValueError("tested_with must be 'p0' or 'p1'")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class TracePair:
    """Boundary data on the interior and exterior side of the surface."""

    kind: str
    interior: object
    exterior: object

    _EXPECTED = {
        "dirichlet": ("p1", "p1"),
        "neumann": ("p0", "p0"),
        "mixed_int_d_ext_n": ("p1", "p0"),
        "mixed_int_n_ext_d": ("p0", "p1"),
    }

    def __post_init__(self):
        if self.kind not in self._EXPECTED:
            raise ValueError(f"unknown trace pair kind {self.kind!r}")
        want = self._EXPECTED[self.kind]
        for side, data, space in zip(("interior", "exterior"), (self.interior, self.exterior), want):
            if not isinstance(data, _Density) or data.space != space:
                raise TypeError(f"{self.kind} pair: {side} component must be a {space.upper()} density")

    def to_json(self) -> dict:
        return {"kind": self.kind, "interior": self.interior.to_json(), "exterior": self.exterior.to_json()}


@dataclass(frozen=True)
class GaugeInfo:
    mean_value: float = 0.0
    gauge: Literal["none", "zero_mean"] = "none"


@dataclass(frozen=True)
class MassMatrices:
    M00: sp.csr_matrix  # P0 x P0 (diagonal, triangle areas)
    M01: sp.csr_matrix  # P0 x P1
    M11: sp.csr_matrix  # P1 x P1


# ----------------------------------------------------------------------------


def _evaluate(f: Callable, points: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(points), dtype=float)
    if vals.shape == ():
        vals = np.full(len(points), float(vals))
    return vals.reshape(len(points), *vals.shape[1:])


def interpolate_p1(mesh: SurfaceMesh, f: Callable) -> DensityP1:
    """Nodal interpolant: ``f`` is evaluated on the (n, 3) vertex array."""
    vals = _evaluate(f, np.asarray(mesh.vertices))
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite value at a mesh vertex")
    return DensityP1(vals)


def project_to_p0(mesh: SurfaceMesh, g: Callable, quad_order: int = 4) -> DensityP0:
    """Triangle averages of ``g`` computed with a Gauss rule."""
    rule = gauss_triangle_rule(quad_order)
    pts = rule.physical_points(mesh.corners)  # (nt, nq, 3)
    vals = _evaluate(g, pts.reshape(-1, 3)).reshape(pts.shape[:2])
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite integrand")
    return DensityP0(vals @ rule.weights)


def mass_matrices(mesh: SurfaceMesh) -> MassMatrices:
    nt, nv = mesh.n_triangles, mesh.n_vertices
    A = np.asarray(mesh.areas)
    T = mesh.triangles
    M00 = sp.diags(A).tocsr()
    rows = np.repeat(np.arange(nt), 3)
    M01 = sp.csr_matrix((np.repeat(A / 3.0, 3), (rows, T.ravel())), shape=(nt, nv))
    local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    ii = np.repeat(T, 3, axis=1).ravel()
    jj = np.tile(T, (1, 3)).ravel()
    vals = (A[:, None, None] * local[None]).ravel()
    M11 = sp.csr_matrix((vals, (ii, jj)), shape=(nv, nv))
    return MassMatrices(M00, M01, M11)


def vertex_weights(mesh: SurfaceMesh) -> np.ndarray:
    """Integrals of the P1 hat functions (one third of the incident areas)."""
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(mesh.areas / 3.0, 3), minlength=mesh.n_vertices)


def mean_value(mesh: SurfaceMesh, density) -> float:
    """Exact surface integral of a P0 or P1 density."""
    density.check(mesh)
    c = density.coefficients
    if density.space == "p0":
        return float(c @ mesh.areas)
    return float(c @ vertex_weights(mesh))


def apply_zero_mean_gauge(mesh: SurfaceMesh, density):
    """Subtract the area-weighted mean; returns ``(density', GaugeInfo)``."""
    mean = mean_value(mesh, density) / mesh.total_area
    shifted = type(density)(density.coefficients - mean)
    return shifted, GaugeInfo(mean_value=mean, gauge="zero_mean")


# ----------------------------------------------------------------------------
# conversion between tested data and densities


def weak_form(mesh: SurfaceMesh, masses: MassMatrices, data, tested_with: Space) -> np.ndarray:
    """Moments of ``data`` (density or :class:`WeakData`) against a basis."""
    if isinstance(data, WeakData):
        if data.tested_with != tested_with:
            raise TypeError(f"weak data tested with {data.tested_with}, expected {tested_with}")
        n = mesh.n_triangles if tested_with == "p0" else mesh.n_vertices
        if len(data) != n:
            raise ValueError(f"weak data has {len(data)} entries, expected {n}")
        return np.asarray(data.values)
    data.check(mesh)
    c = data.coefficients
    if tested_with == "p0":
        return masses.M00 @ c if data.space == "p0" else masses.M01 @ c
    return masses.M01.T @ c if data.space == "p0" else masses.M11 @ c


def p1_from_p0_tested(masses: MassMatrices, values: np.ndarray) -> np.ndarray:
    """P1 coefficients whose triangle moments best match ``values``.

    Weighted least squares in the P0 L2 metric; exact whenever the moments
    come from a P1 function.
    """
    d = 1.0 / np.sqrt(masses.M00.diagonal())
    A = (masses.M01.multiply(d[:, None])).toarray()
    x, *_ = np.linalg.lstsq(A, d * values, rcond=None)
    return x


def p0_from_p1_tested(masses: MassMatrices, values: np.ndarray) -> np.ndarray:
    """P0 coefficients of least L2 norm whose hat-function moments equal ``values``.

    The result is ``M00^-1 M01 y`` with ``(M01^T M00^-1 M01) y = values``,
    i.e. the triangle averages of a P1 function, so smooth data stays smooth
    and the moments are reproduced exactly.
    """
    d = 1.0 / masses.M00.diagonal()
    G = (masses.M01.T @ sp.diags(d) @ masses.M01).tocsc()
    y = spsolve(G, np.asarray(values, dtype=float))
    return d * (masses.M01 @ y)


def density_from_weak(masses: MassMatrices, data: WeakData, space: Space):
    if space == "p1":
        if data.tested_with != "p0":
            return DensityP1(_solve_m11(masses, data.values))
        return DensityP1(p1_from_p0_tested(masses, data.values))
    if data.tested_with == "p0":
        return DensityP0(np.asarray(data.values) / masses.M00.diagonal())
    return DensityP0(p0_from_p1_tested(masses, data.values))


def _solve_m11(masses: MassMatrices, values):
    return spsolve(masses.M11.tocsc(), np.asarray(values, dtype=float))


def weak_norm(masses: MassMatrices, values: np.ndarray, tested_with: Space) -> float:
    """L2 norm of the Riesz representative of tested data."""
    values = np.asarray(values, dtype=float)
    if tested_with == "p0":
        return float(np.sqrt(values @ (values / masses.M00.diagonal())))
    return float(np.sqrt(max(values @ _solve_m11(masses, values), 0.0)))


def relative_weak_error(masses: MassMatrices, values, reference, tested_with: Space) -> float:
    ref = weak_norm(masses, reference, tested_with)
    err = weak_norm(masses, np.asarray(values) - np.asarray(reference), tested_with)
    return err / ref if ref > 0 else err
