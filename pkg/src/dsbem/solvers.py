"""Dense linear-algebra backends for the boundary integral systems.

Three system types occur:

* symmetric positive definite (single layer ``V``),
* positive semidefinite with the constants as kernel (hypersingular ``T``),
  solved with a zero-mean side condition,
* symmetric quasi-definite 2x2 blocks ``[[A, B], [B^T, -D]]`` from the
  mixed problems.

Each solver returns the solution and a :class:`SolveReport`.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg as la
from scipy.sparse.linalg import LinearOperator, cg

DEFAULT_TOL = 1e-10

# scipy's lu_solve (LAPACK getrs wrapper) corrupts the heap when called from
# several threads at once, so solves with a shared LU factor are serialized
_GETRS_LOCK = threading.Lock()


def _lu_solve(lu, b):
    with _GETRS_LOCK:
        return la.lu_solve(lu, b)


class SolverError(RuntimeError):
    """A solve failed or did not reach the requested tolerance."""


class NotPositiveDefiniteError(SolverError):
    pass


class IncompatibleRhsError(SolverError):
    """Right-hand side has a component along the constants."""

    def __init__(self, defect: float, tol: float):
        super().__init__(f"right-hand side not orthogonal to constants: relative defect {defect:.3e} > {tol:.1e}")
        self.defect = defect
        self.tol = tol


@dataclass(frozen=True)
class SolveReport:
    method: Literal["cholesky", "lu", "cg"]
    iterations: int
    relative_residual: float
    constraint_defect: float = 0.0
    multiplier: float = 0.0
    energy: float | None = None

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": self.iterations,
            "relative_residual": self.relative_residual,
            "constraint_defect": self.constraint_defect,
            "multiplier": self.multiplier,
            "energy": self.energy,
        }


def _rel(r, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


def _check_symmetric(A, name="matrix", tol=1e-8):
    scale = np.abs(A).max()
    if scale > 0 and np.abs(A - A.T).max() > tol * scale:
        raise ValueError(f"{name} is not symmetric")


def cholesky(A: np.ndarray):
    """``cho_factor`` that raises :class:`NotPositiveDefiniteError`."""
    try:
        return la.cho_factor(A, lower=True, check_finite=True)
    except la.LinAlgError as exc:
        raise NotPositiveDefiniteError("Cholesky factorization broke down: matrix not positive definite") from exc


class _Counter:
    def __init__(self):
        self.n = 0

    def __call__(self, _):
        self.n += 1


def _cg(op, b, tol, x0=None, maxiter=None):
    if not np.any(b):
        return np.zeros_like(b), 0
    count = _Counter()
    x, info = cg(op, b, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter or 10 * len(b), callback=count)
    if info > 0:
        raise SolverError(f"CG did not converge in {info} iterations")
    if info < 0:
        raise NotPositiveDefiniteError("CG breakdown")
    return x, count.n


def solve_spd(A, b, tol: float = DEFAULT_TOL, method: str = "cholesky", factor=None, x0=None):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Parameters
    ----------
    method : {"cholesky", "cg"}
    factor : optional
        Result of :func:`cholesky` for ``A``, reused across calls.
    x0 : optional
        Initial guess for CG.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_symmetric(A, "SPD system matrix")
    if method == "cholesky":
        x = la.cho_solve(factor if factor is not None else cholesky(A), b)
        it = 0
    elif method == "cg":
        x, it = _cg(A, b, tol, x0)
        if x.size and x @ (A @ x) < 0:
            raise NotPositiveDefiniteError("negative energy encountered in CG")
    else:
        raise ValueError(f"unknown method {method!r}")
    res = _rel(A @ x - b, b)
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}")
    return x, SolveReport(method, it, res)


def compatibility_defect(b, scale=None) -> float:
    """``|1^T b|`` relative to ``scale`` (default ``sum |b|``)."""
    b = np.asarray(b, dtype=float)
    s = np.abs(b).sum() if scale is None else scale
    return float(abs(b.sum()) / s) if s > 0 else 0.0


def bordered_matrix(A: np.ndarray, m: np.ndarray) -> np.ndarray:
    n = len(m)
    Ab = np.zeros((n + 1, n + 1))
    Ab[:n, :n] = A
    Ab[:n, n] = m
    Ab[n, :n] = m
    return Ab


def solve_zero_mean(
    A, b, m, tol: float = DEFAULT_TOL, method: str = "bordered", compat_tol: float | None = 1e-8, factor=None, x0=None
):
    """Solve ``A x = b`` subject to ``m^T x = 0``.

    ``A`` is symmetric positive semidefinite with the constant vector as its
    null space, so ``b`` must satisfy ``1^T b = 0``.  The relative defect
    ``|1^T b| / sum|b|`` is checked against ``compat_tol`` (``None`` skips the
    check).

    ``method="bordered"`` solves the Lagrange system
    ``[[A, m], [m^T, 0]] [x, lam] = [b, 0]``; the multiplier absorbs any
    residual defect and is reported.  ``method="cg"`` projects the defect out
    of ``b`` and runs CG on ``A + alpha m m^T``.  ``factor`` is an LU
    factorization of :func:`bordered_matrix` for reuse.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m = np.asarray(m, dtype=float)
    _check_symmetric(A, "constrained system matrix")
    defect = compatibility_defect(b)
    if compat_tol is not None and defect > compat_tol:
        raise IncompatibleRhsError(defect, compat_tol)
    n = len(b)
    if method == "bordered":
        lu = factor if factor is not None else la.lu_factor(bordered_matrix(A, m))
        sol = _lu_solve(lu, np.append(b, 0.0))
        if not np.all(np.isfinite(sol)):
            raise SolverError("singular bordered system")
        x, lam = sol[:n], float(sol[n])
        res = _rel(A @ x + lam * m - b, b)
        it = 0
        method_name = "lu"
    elif method == "cg":
        bp = b - (b.sum() / m.sum()) * m
        lam = float(b.sum() / m.sum())
        alpha = np.abs(A).max() / (m @ m) * n
        op = LinearOperator((n, n), matvec=lambda v: A @ v + alpha * m * (m @ v), dtype=float)
        x, it = _cg(op, bp, tol, x0)
        res = _rel(A @ x - bp, b)
        method_name = "cg"
    else:
        raise ValueError(f"unknown method {method!r}")
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}")
    cdef = float(abs(m @ x) / (np.abs(m) @ np.abs(x))) if np.any(x) else 0.0
    return x, SolveReport(method_name, it, res, constraint_defect=cdef, multiplier=lam)


def solve_block(
    A, B, D, r1, r2, gauge=None, tol: float = DEFAULT_TOL, method: str = "lu", compat_tol: float | None = 1e-8, x0=None
):
    """Solve the symmetric block system ``[[A, B], [B^T, -D]] [x, y] = [r1, r2]``.

    ``A`` must be positive definite and ``D`` positive semidefinite.  When
    ``gauge`` (a weight vector ``m``) is given, the system is singular along
    ``(0, 1)`` and ``y`` is constrained by ``m^T y = 0``; this requires
    ``B 1 = 0`` and a zero-sum ``r2``.

    ``method="lu"`` factors the (bordered) block matrix directly.
    ``method="cg"`` eliminates ``x`` and runs CG on the Schur complement
    ``D + B^T A^-1 B``.  The report's ``energy`` is ``x^T A x + y^T D y``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    D = np.asarray(D, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    r2 = np.asarray(r2, dtype=float)
    n1, n2 = len(r1), len(r2)
    if A.shape != (n1, n1) or B.shape != (n1, n2) or D.shape != (n2, n2):
        raise ValueError("inconsistent block dimensions")
    _check_symmetric(A, "block A")
    _check_symmetric(D, "block D")
    rhs_norm = np.hypot(np.linalg.norm(r1), np.linalg.norm(r2))
    if rhs_norm == 0:
        return np.zeros(n1), np.zeros(n2), SolveReport("lu" if method == "lu" else "cg", 0, 0.0, energy=0.0)
    m = None if gauge is None else np.asarray(gauge, dtype=float)
    if m is not None and compat_tol is not None:
        defect = compatibility_defect(r2)
        if defect > compat_tol:
            raise IncompatibleRhsError(defect, compat_tol)

    lam = 0.0
    if method == "lu":
        n = n1 + n2 + (m is not None)
        M = np.zeros((n, n))
        M[:n1, :n1] = A
        M[:n1, n1:n1 + n2] = B
        M[n1:n1 + n2, :n1] = B.T
        M[n1:n1 + n2, n1:n1 + n2] = -D
        rhs = np.concatenate([r1, r2, [0.0] * (m is not None)])
        if m is not None:
            M[n1:n1 + n2, -1] = m
            M[-1, n1:n1 + n2] = m
        try:
            sol = la.solve(M, rhs, assume_a="sym")
        except la.LinAlgError as exc:
            raise SolverError("singular block system") from exc
        x, y = sol[:n1], sol[n1:n1 + n2]
        if m is not None:
            lam = float(sol[-1])
        it = 0
    elif method == "cg":
        cf = cholesky(A)
        s_rhs = B.T @ la.cho_solve(cf, r1) - r2
        if m is not None:
            lam = float(s_rhs.sum() / m.sum())
            s_rhs = s_rhs - lam * m
            alpha = np.abs(D).max() / (m @ m) * n2
        else:
            alpha = 0.0

        def matvec(v):
            out = D @ v + B.T @ la.cho_solve(cf, B @ v)
            if m is not None:
                out = out + alpha * m * (m @ v)
            return out

        # the Schur right-hand side can exceed the block one; tighten so the
        # block residual meets tol
        s_norm = np.linalg.norm(s_rhs)
        inner_tol = tol * min(1.0, rhs_norm / s_norm) if s_norm > 0 else tol
        y, it = _cg(LinearOperator((n2, n2), matvec=matvec, dtype=float), s_rhs, inner_tol, x0)
        x = la.cho_solve(cf, r1 - B @ y)
    else:
        raise ValueError(f"unknown method {method!r}")

    res1 = A @ x + B @ y - r1
    res2 = B.T @ x - D @ y - r2 + (lam * m if m is not None else 0.0)
    res = float(np.hypot(np.linalg.norm(res1), np.linalg.norm(res2)) / rhs_norm)
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}")
    cdef = 0.0
    if m is not None and np.any(y):
        cdef = float(abs(m @ y) / (np.abs(m) @ np.abs(y)))
    energy = float(x @ A @ x + y @ D @ y)
    return x, y, SolveReport(method if method == "cg" else "lu", it, res, cdef, lam, energy)
