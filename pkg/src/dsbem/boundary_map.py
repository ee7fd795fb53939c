"""Maps between double-sided Dirichlet and Neumann data.

``DtN`` sends a value pair ``(f_i, f_e)`` to the normal-derivative pair
``(g_i, g_e)`` of the field with those values; ``NtD`` goes the other way and
is defined up to a constant inside the interior domain.  Both reuse the BVP
drivers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .bvp import COMPAT_TOL, Solution, solve_dirichlet, solve_neumann
from .operators import OperatorSet
from .spaces import DensityP0, DensityP1, TracePair


def _pair(data, kind: str, cls) -> tuple:
    if isinstance(data, TracePair):
        if data.kind != kind:
            raise TypeError(f"expected a {kind} pair, got {data.kind}")
        return data.interior, data.exterior
    a, b = data
    return (a if not isinstance(a, np.ndarray) else cls(a)), (b if not isinstance(b, np.ndarray) else cls(b))


def dtn_solution(ops: OperatorSet, pair, **kwargs) -> Solution:
    f_i, f_e = _pair(pair, "dirichlet", DensityP1)
    return solve_dirichlet(ops, f_i, f_e, **kwargs)


def ntd_solution(ops: OperatorSet, pair, **kwargs) -> Solution:
    g_i, g_e = _pair(pair, "neumann", DensityP0)
    return solve_neumann(ops, g_i, g_e, **kwargs)


def apply_dtn(ops: OperatorSet, pair, **kwargs) -> TracePair:
    """Neumann pair of the field with Dirichlet data ``pair``."""
    return dtn_solution(ops, pair, **kwargs).neumann


def apply_ntd(ops: OperatorSet, pair, **kwargs) -> TracePair:
    """Dirichlet pair of a field with Neumann data ``pair``.

    The interior component is fixed only up to a constant; the returned pair
    uses the zero-mean double-layer density.
    """
    return ntd_solution(ops, pair, **kwargs).dirichlet


def stack(pair: TracePair) -> np.ndarray:
    return np.concatenate([pair.interior.coefficients, pair.exterior.coefficients])


@dataclass(eq=False)
class BoundaryMap:
    """A boundary map on a fixed operator set, optionally as a dense matrix.

    The matrix acts on stacked coefficients ``[interior, exterior]``.  For
    ``NtD`` it is the map composed with the projection of ``g_i`` onto
    zero-mean data, so it agrees with :meth:`apply` on compatible input.
    """

    direction: Literal["DtN", "NtD"]
    ops: OperatorSet = field(repr=False)
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.direction not in ("DtN", "NtD"):
            raise ValueError("direction must be 'DtN' or 'NtD'")

    @property
    def _sizes(self):
        nv, nt = self.ops.mesh.n_vertices, self.ops.mesh.n_triangles
        return (nv, nt) if self.direction == "DtN" else (nt, nv)

    def apply(self, pair, **kwargs) -> TracePair:
        if self.direction == "DtN":
            return apply_dtn(self.ops, pair, **kwargs)
        return apply_ntd(self.ops, pair, **kwargs)

    def apply_matrix(self, pair) -> TracePair:
        if self.matrix is None:
            raise RuntimeError("map not materialized")
        n_in, n_out = self._sizes
        x = stack(pair) if isinstance(pair, TracePair) else np.concatenate([np.asarray(p) for p in pair])
        y = self.matrix @ x
        kind, cls = ("neumann", DensityP0) if self.direction == "DtN" else ("dirichlet", DensityP1)
        return TracePair(kind, cls(y[:n_out]), cls(y[n_out:]))

    def _column(self, k: int) -> np.ndarray:
        n_in, _ = self._sizes
        e = np.zeros(2 * n_in)
        e[k] = 1.0
        a, b = e[:n_in], e[n_in:]
        if self.direction == "DtN":
            return stack(apply_dtn(self.ops, (DensityP1(a), DensityP1(b))))
        areas = self.ops.areas
        a = a - (a @ areas) / areas.sum()
        return stack(apply_ntd(self.ops, (DensityP0(a), DensityP0(b)), compat_tol=COMPAT_TOL))

    def materialize(self, workers: int | None = None) -> np.ndarray:
        """Build the dense matrix column by column on a thread pool."""
        n_in, _ = self._sizes
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cols = list(pool.map(self._column, range(2 * n_in)))
        self.matrix = np.column_stack(cols)
        return self.matrix
