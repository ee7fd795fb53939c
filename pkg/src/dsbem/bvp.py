"""Drivers for the four double-sided Laplace problems.

The unknown field is ``w = U sigma + W q`` (plus a constant ``c`` inside the
interior domain when the double-layer density is gauged).  Interior and
exterior traces ``f_i, f_e`` (values) and ``g_i, g_e`` (outward normal
derivatives) are linked to the densities by the jumps

    f_i - f_e = q + c,        g_i - g_e = sigma.

Each driver takes two of the four traces and returns a :class:`Solution`
holding ``(sigma, q)``, the derived weak traces and recovered density pairs.

Boundary data may be densities (P1 for values, P0 for normal derivatives) or
:class:`~dsbem.spaces.WeakData`: values tested with P0, normal derivatives
tested with P1.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import solvers
from .operators import OperatorSet, WeakTraces, boundary_traces, eval_representation
from .spaces import (
    DensityP0,
    DensityP1,
    GaugeInfo,
    TracePair,
    WeakData,
    apply_zero_mean_gauge,
    p0_from_p1_tested,
    p1_from_p0_tested,
    relative_weak_error,
    vertex_weights,
    weak_form,
)

COMPAT_TOL = 1e-6
PROBLEM_KINDS = ("dirichlet", "neumann", "mixed_int_d_ext_n", "mixed_int_n_ext_d")


class IncompatibleDataError(ValueError):
    """Neumann-type data violating the zero-mean solvability condition."""

    code = "incompatible_neumann_data"

    def __init__(self, defect: float, tol: float):
        super().__init__(
            f"interior Neumann data must integrate to zero: relative defect {defect:.3e} exceeds {tol:.1e}"
        )
        self.defect = defect
        self.tol = tol


@dataclass(frozen=True, eq=False)
class Solution:
    """Densities of the layer representation and everything derived from them.

    Attributes
    ----------
    kind : str
        Problem kind, one of :data:`PROBLEM_KINDS`.
    sigma, q : DensityP0, DensityP1
        Simple- and double-layer densities; ``q`` is zero-mean whenever the
        gauge is ``zero_mean``.
    gauge : GaugeInfo
        ``mean_value`` is the constant ``c`` carried by the field inside the
        interior domain.
    report : SolveReport
    traces : WeakTraces
        Tested traces of the field, including ``c``.
    dirichlet, neumann : TracePair
        Density pairs of values and normal derivatives.  Prescribed components
        are returned as given; derived ones are recovered from their moments
        so that the jumps hold exactly.
    residuals : dict
        Relative weak-form mismatch of each prescribed component.
    compatibility : dict
        Means of the Neumann-type data and the relative solvability defect.
    """

    kind: str
    ops: OperatorSet = field(repr=False)
    sigma: DensityP0
    q: DensityP1
    gauge: GaugeInfo
    report: solvers.SolveReport
    traces: WeakTraces = field(repr=False)
    dirichlet: TracePair = field(repr=False)
    neumann: TracePair = field(repr=False)
    residuals: dict = field(default_factory=dict)
    compatibility: dict = field(default_factory=dict)

    @property
    def gauge_constant(self) -> float:
        return self.gauge.mean_value

    @property
    def q_full(self) -> DensityP1:
        """``q + c``: the actual jump of the field values."""
        return DensityP1(self.q.coefficients + self.gauge_constant)

    def evaluate(self, points, quad_order: int = 6):
        return eval_representation(self.ops.mesh, self.sigma, self.q, points, self.gauge_constant, quad_order)

    def weak_data(self) -> dict:
        t = self.traces
        return {
            "f_i": WeakData(t.f_i, "p0"),
            "f_e": WeakData(t.f_e, "p0"),
            "g_i": WeakData(t.g_i, "p1"),
            "g_e": WeakData(t.g_e, "p1"),
        }

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "gauge": {"gauge": self.gauge.gauge, "constant": self.gauge.mean_value},
            "report": self.report.as_dict(),
            "residuals": dict(self.residuals),
            "compatibility": dict(self.compatibility),
        }


# ----------------------------------------------------------------------------
# helpers

_lock = threading.Lock()


def _factor(ops: OperatorSet, key: str, build):
    with _lock:
        if key not in ops.factors:
            ops.factors[key] = build()
        return ops.factors[key]


def _chol_v(ops):
    return _factor(ops, "chol_V", lambda: solvers.cholesky(ops.V))


def _lu_t(ops):
    m = vertex_weights(ops.mesh)
    return _factor(ops, "lu_T_bordered", lambda: la.lu_factor(solvers.bordered_matrix(ops.T, m)))


def _weak(ops: OperatorSet, data, name: str, space: str, tested_with: str) -> np.ndarray:
    """Moments of a density of ``space`` (or of matching weak data)."""
    if isinstance(data, WeakData):
        if data.tested_with != tested_with:
            raise TypeError(f"{name}: weak data must be tested with {tested_with.upper()}")
    elif getattr(data, "space", None) != space:
        raise TypeError(f"{name}: expected a {space.upper()} density or weak data")
    return weak_form(ops.mesh, ops.masses, data, tested_with)


def _check_compatible(g_i_weak, scale, compat_tol):
    defect = float(abs(np.sum(g_i_weak)) / scale) if scale > 0 else 0.0
    if compat_tol is not None and defect > compat_tol:
        raise IncompatibleDataError(defect, compat_tol)
    return defect


def _method(method: str, direct: str) -> str:
    if method == "direct":
        return direct
    if method == "cg":
        return "cg"
    raise ValueError(f"unknown solver method {method!r} (direct or cg)")


def _finish(ops, kind, sigma, q, c, report, given: dict, compatibility=None) -> Solution:
    """Derive traces and density pairs; ``given`` maps trace name -> (data, weak vector)."""
    traces = boundary_traces(ops, sigma, q, c)
    jump_f = q.coefficients + c
    jump_g = sigma.coefficients

    def density(name, space):
        d = given.get(name, (None,))[0]
        return d if d is not None and not isinstance(d, WeakData) and d.space == space else None

    fi, fe = density("f_i", "p1"), density("f_e", "p1")
    if fi is None and fe is None:
        fe = DensityP1(p1_from_p0_tested(ops.masses, traces.f_e))
    if fi is None:
        fi = DensityP1(fe.coefficients + jump_f)
    if fe is None:
        fe = DensityP1(fi.coefficients - jump_f)

    gi, ge = density("g_i", "p0"), density("g_e", "p0")
    if gi is None and ge is None:
        ge = DensityP0(p0_from_p1_tested(ops.masses, traces.g_e))
    if gi is None:
        gi = DensityP0(ge.coefficients + jump_g)
    if ge is None:
        ge = DensityP0(gi.coefficients - jump_g)

    residuals = {}
    for name, (_, w) in given.items():
        tested = "p0" if name.startswith("f") else "p1"
        residuals[name] = relative_weak_error(ops.masses, getattr(traces, name), w, tested)
    gauge = GaugeInfo(mean_value=float(c), gauge="zero_mean")
    return Solution(
        kind, ops, sigma, q, gauge, report, traces,
        TracePair("dirichlet", fi, fe), TracePair("neumann", gi, ge),
        residuals, compatibility or {},
    )


# ----------------------------------------------------------------------------
# drivers


def solve_dirichlet(ops: OperatorSet, f_i, f_e, tol: float = solvers.DEFAULT_TOL, method: str = "direct", x0=None):
    """Double-sided Dirichlet problem: prescribed values on both sides.

    The jump ``q = f_i - f_e`` is split into a zero-mean part and a constant
    ``c`` (the gauge).  ``sigma`` solves the single-layer equation
    ``V sigma = <f_i> - (M01/2 + K) q - c <1>``.
    """
    Fi = _weak(ops, f_i, "f_i", "p1", "p0")
    Fe = _weak(ops, f_e, "f_e", "p1", "p0")
    if isinstance(f_i, WeakData) or isinstance(f_e, WeakData):
        q_raw = p1_from_p0_tested(ops.masses, Fi - Fe)
    else:
        q_raw = f_i.coefficients - f_e.coefficients
    q, gauge = apply_zero_mean_gauge(ops.mesh, DensityP1(q_raw))
    c = gauge.mean_value
    rhs = Fi - ops.B_int @ q.coefficients - c * ops.areas
    m = _method(method, "cholesky")
    factor = _chol_v(ops) if m == "cholesky" else None
    s, report = solvers.solve_spd(ops.V, rhs, tol=tol, method=m, factor=factor, x0=x0)
    return _finish(ops, "dirichlet", DensityP0(s), q, c, report, {"f_i": (f_i, Fi), "f_e": (f_e, Fe)})


def solve_neumann(
    ops: OperatorSet, g_i, g_e, tol: float = solvers.DEFAULT_TOL, method: str = "direct",
    compat_tol: float | None = COMPAT_TOL, x0=None,
):
    """Double-sided Neumann problem: prescribed normal derivatives on both sides.

    ``sigma = g_i - g_e``; ``q`` solves ``T q = <g_e> + (M01/2 + K)^T sigma``
    with zero mean.  The right-hand side integrates to ``int g_i``, which must
    vanish: the relative defect ``|int g_i| / (int |g_i| + int |g_e|)`` is
    compared with ``compat_tol`` and :class:`IncompatibleDataError` raised
    above it.
    """
    Gi = _weak(ops, g_i, "g_i", "p0", "p1")
    Ge = _weak(ops, g_e, "g_e", "p0", "p1")
    if isinstance(g_i, WeakData) or isinstance(g_e, WeakData):
        s = p0_from_p1_tested(ops.masses, Gi - Ge)
        scale = np.abs(Gi).sum() + np.abs(Ge).sum()
    else:
        s = g_i.coefficients - g_e.coefficients
        scale = np.abs(g_i.coefficients) @ ops.areas + np.abs(g_e.coefficients) @ ops.areas
    defect = _check_compatible(Gi, scale, compat_tol)
    b = Ge + ops.B_int.T @ s
    mw = vertex_weights(ops.mesh)
    m = _method(method, "bordered")
    factor = _lu_t(ops) if m == "bordered" else None
    qc, report = solvers.solve_zero_mean(ops.T, b, mw, tol=tol, method=m, compat_tol=None, factor=factor, x0=x0)
    compat = {"mean_g_i": float(np.sum(Gi)), "mean_g_e": float(np.sum(Ge)), "relative_defect": defect}
    return _finish(ops, "neumann", DensityP0(s), DensityP1(qc), 0.0, report,
                   {"g_i": (g_i, Gi), "g_e": (g_e, Ge)}, compat)


def solve_mixed_int_d_ext_n(ops: OperatorSet, f_i, g_e, tol: float = solvers.DEFAULT_TOL, method: str = "direct",
                            x0=None):
    """Interior values and exterior normal derivatives prescribed.

    Block system in symmetric form::

        [ V            M01/2 + K ] [sigma]   [ <f_i>  ]
        [(M01/2 + K)^T    -T     ] [  q  ] = [ -<g_e> ]

    The constant part of ``q`` is determined here; it is reported as the
    gauge constant and removed from ``q``.
    """
    Fi = _weak(ops, f_i, "f_i", "p1", "p0")
    Ge = _weak(ops, g_e, "g_e", "p0", "p1")
    s, qf, report = solvers.solve_block(ops.V, ops.B_int, ops.T, Fi, -Ge, gauge=None, tol=tol,
                                        method=_method(method, "lu"), x0=x0)
    q, gauge = apply_zero_mean_gauge(ops.mesh, DensityP1(qf))
    return _finish(ops, "mixed_int_d_ext_n", DensityP0(s), q, gauge.mean_value, report,
                   {"f_i": (f_i, Fi), "g_e": (g_e, Ge)})


def solve_mixed_int_n_ext_d(
    ops: OperatorSet, g_i, f_e, tol: float = solvers.DEFAULT_TOL, method: str = "direct",
    compat_tol: float | None = COMPAT_TOL, x0=None,
):
    """Interior normal derivatives and exterior values prescribed.

    Block system in symmetric form::

        [ V             -(M01/2 - K) ] [sigma]   [ <f_e>  ]
        [-(M01/2 - K)^T      -T      ] [  q  ] = [ -<g_i> ]

    ``(M01/2 - K) 1 = 0``, so ``q`` is fixed only up to a constant and is
    returned with zero mean; ``int g_i = 0`` is required as for the Neumann
    problem.
    """
    Gi = _weak(ops, g_i, "g_i", "p0", "p1")
    Fe = _weak(ops, f_e, "f_e", "p1", "p0")
    if isinstance(g_i, WeakData):
        scale = np.abs(Gi).sum()
    else:
        scale = np.abs(g_i.coefficients) @ ops.areas
    defect = _check_compatible(Gi, scale, compat_tol)
    s, q, report = solvers.solve_block(ops.V, -ops.C_ext, ops.T, Fe, -Gi, gauge=vertex_weights(ops.mesh), tol=tol,
                                       method=_method(method, "lu"), compat_tol=None, x0=x0)
    compat = {"mean_g_i": float(np.sum(Gi)), "relative_defect": defect}
    return _finish(ops, "mixed_int_n_ext_d", DensityP0(s), DensityP1(q), 0.0, report,
                   {"g_i": (g_i, Gi), "f_e": (f_e, Fe)}, compat)


def solve(ops: OperatorSet, kind: str, first, second, **kwargs) -> Solution:
    """Dispatch on the problem kind; data order follows the kind's name."""
    drivers = {
        "dirichlet": solve_dirichlet,
        "neumann": solve_neumann,
        "mixed_int_d_ext_n": solve_mixed_int_d_ext_n,
        "mixed_int_n_ext_d": solve_mixed_int_n_ext_d,
    }
    if kind not in drivers:
        raise ValueError(f"unknown problem kind {kind!r}")
    return drivers[kind](ops, first, second, **kwargs)
