"""Conjugate gradients for the symmetric semidefinite decomposition systems."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class IndefiniteOperatorError(SolverError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class CompatibilityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-10
    maxiter: int | None = None
    preconditioner: str = "none"
    deflation_probes: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("solver tolerance must be positive")
        if self.maxiter is not None and self.maxiter < 1:
            raise ValueError("maxiter must be at least 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")
        if self.deflation_probes < 0:
            raise ValueError("deflation_probes must be nonnegative")


def default_maxiter(n: int) -> int:
    return int(50 * math.sqrt(n)) + 200


@dataclass
class LinearSystem:
    """Symmetric PSD system ``matrix @ x = rhs``.

    ``null_basis`` columns span the known null space; the rhs is projected
    off it before iterating.  ``weights`` define the inner product in which
    the returned solution is made orthogonal to the null basis.
    """

    matrix: sp.spmatrix | spla.LinearOperator | np.ndarray
    rhs: np.ndarray
    null_basis: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=float)
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand side has non-finite entries")
        if self.null_basis is not None:
            nb = np.asarray(self.null_basis, dtype=float)
            self.null_basis = nb.reshape(len(self.rhs), -1)


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    deflated: int = 0
    removed_null_norm: float = 0.0
    compatibility_defect: float | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "deflated": self.deflated,
            "removed_null_norm": self.removed_null_norm,
            "compatibility_defect": self.compatibility_defect,
        }


def orthonormal_basis(vectors: np.ndarray, weights: np.ndarray | None = None,
                      rtol: float = 1e-10) -> np.ndarray:
    """Orthonormal columns spanning ``vectors`` in the (weighted) Euclidean product."""
    v = np.asarray(vectors, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[1] == 0:
        return v
    s = np.sqrt(weights)[:, None] if weights is not None else 1.0
    q, r = np.linalg.qr(v * s)
    keep = np.abs(np.diag(r)) > rtol * max(np.abs(np.diag(r)).max(), 1e-300)
    return q[:, keep] / s


def _project_out(x: np.ndarray, q: np.ndarray | None, weights: np.ndarray | None = None) -> np.ndarray:
    if q is None or q.shape[1] == 0:
        return x
    wx = x * weights if weights is not None else x
    return x - q @ (q.T @ wx)


def _as_operator(a):
    if isinstance(a, spla.LinearOperator):
        return a.matvec
    return lambda v: a @ v


def cg_solve(system: LinearSystem, tol: float = 1e-10, maxiter: int | None = None,
             preconditioner: str = "none", x0: np.ndarray | None = None) -> tuple[np.ndarray, SolveReport]:
    """Solve a consistent symmetric PSD system by (deflated) CG.

    The relative residual ``||A x - b|| / ||b||`` is measured against the
    projected right-hand side.  Exceeding ``maxiter`` returns the best iterate
    with ``converged=False``; negative curvature raises
    :class:`IndefiniteOperatorError`.
    """
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    matvec = _as_operator(system.matrix)
    b0 = system.rhs
    n = len(b0)
    maxiter = default_maxiter(n) if maxiter is None else maxiter

    q = orthonormal_basis(system.null_basis) if system.null_basis is not None else None
    b = _project_out(b0, q)
    removed = float(np.linalg.norm(b0 - b))
    deflated = 0 if q is None else q.shape[1]

    if preconditioner == "jacobi":
        diag = system.matrix.diagonal() if hasattr(system.matrix, "diagonal") else None
        if diag is None:
            raise ValueError("jacobi preconditioning needs an explicit matrix")
        inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)
        apply_m = lambda r: _project_out(inv_diag * r, q)  # noqa: E731
    elif preconditioner == "none":
        apply_m = lambda r: r  # noqa: E731
    else:
        raise ValueError(f"unknown preconditioner {preconditioner!r}")

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        x = np.zeros(n)
        return _finish(system, x, q, SolveReport(0, 0.0, True, deflated, removed))

    x = np.zeros(n) if x0 is None else _project_out(np.asarray(x0, dtype=float).copy(), q)
    r = b - matvec(x)
    r = _project_out(r, q)
    z = apply_m(r)
    p = z.copy()
    rz = float(r @ z)
    res = float(np.linalg.norm(r)) / bnorm
    best_x, best_res = x.copy(), res
    it = 0
    scale = _operator_scale(system.matrix)
    while res > tol and it < maxiter:
        ap = matvec(p)
        pap = float(p @ ap)
        pp = float(p @ p)
        if pap < -1e-12 * scale * pp:
            raise IndefiniteOperatorError(
                f"negative curvature p.Ap = {pap:.3e} at iteration {it}; operator is not PSD")
        if pap <= 1e-300:
            logger.warning("CG breakdown at iteration %d (p.Ap = %g)", it, pap)
            break
        step = rz / pap
        x += step * p
        r -= step * ap
        if q is not None:
            r = _project_out(r, q)
        it += 1
        res = float(np.linalg.norm(r)) / bnorm
        if res < best_res:
            best_x, best_res = x.copy(), res
        z = apply_m(r)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    # recompute the true residual; the recurrence can drift
    x = best_x
    true_res = float(np.linalg.norm(_project_out(b - matvec(x), q))) / bnorm
    converged = true_res <= tol
    report = SolveReport(it, true_res, converged, deflated, removed)
    if not converged:
        warnings.warn(f"CG stopped after {it} iterations at relative residual {true_res:.3e} > {tol:.1e}",
                      ConvergenceWarning, stacklevel=2)
    return _finish(system, x, q, report)


def _operator_scale(a) -> float:
    if sp.issparse(a):
        return float(abs(a).max()) if a.nnz else 1.0
    if isinstance(a, np.ndarray):
        return float(np.abs(a).max()) if a.size else 1.0
    return 1.0


def _finish(system: LinearSystem, x: np.ndarray, q, report: SolveReport):
    if system.null_basis is not None and system.weights is not None:
        qw = orthonormal_basis(system.null_basis, system.weights)
        x = _project_out(x, qw, system.weights)
    elif q is not None:
        x = _project_out(x, q)
    return x, report


def check_compatibility(div_u_omega: np.ndarray, vol_omega: np.ndarray, g_gamma: np.ndarray,
                        vol_gamma: np.ndarray, tol: float | None = None) -> float:
    """|sum_Omega (D u) V - sum_Gamma g V|; warns when above ``tol``."""
    lhs = float(np.sum(np.asarray(div_u_omega) * vol_omega))
    rhs = float(np.sum(np.asarray(g_gamma) * vol_gamma))
    defect = abs(lhs - rhs)
    if tol is not None and defect > tol:
        warnings.warn(f"Neumann data incompatible: defect {defect:.3e} exceeds {tol:.1e}",
                      CompatibilityWarning, stacklevel=2)
    return defect


@dataclass(frozen=True)
class SolvabilityProbe:
    consistent: bool
    null_component: float
    range_component: float
    rhs_norm: float

    @property
    def relative_null(self) -> float:
        return self.null_component / self.rhs_norm if self.rhs_norm > 0 else 0.0


def solvability_probe(rhs: np.ndarray, null_basis: np.ndarray, weights: np.ndarray | None = None,
                      rtol: float = 1e-12) -> SolvabilityProbe:
    """Split ``rhs`` into null-space and range parts of a symmetric operator.

    The range of a self-adjoint operator is the orthogonal complement of its
    null space, so the null part is the projection onto ``null_basis``.
    """
    rhs = np.asarray(rhs, dtype=float).ravel()
    wts = None if weights is None else np.asarray(weights, dtype=float).ravel()
    q = orthonormal_basis(np.asarray(null_basis, dtype=float).reshape(len(rhs), -1), wts)
    rng = _project_out(rhs, q, wts)
    null = rhs - rng

    def nrm(v):
        return float(np.sqrt(np.sum(v * v * wts))) if wts is not None else float(np.linalg.norm(v))

    total, nn = nrm(rhs), nrm(null)
    consistent = nn <= rtol * total if total > 0 else True
    return SolvabilityProbe(consistent, nn, nrm(rng), total)


def probe_null_modes(matrix, known: np.ndarray, n_probes: int, rtol: float = 1e-10,
                     seed: int = 0) -> np.ndarray:
    """Search for extra near-null modes orthogonal to ``known``.

    Runs LOBPCG for the ``n_probes`` smallest eigenpairs constrained away
    from the known basis; eigenvectors with eigenvalue below ``rtol`` times
    the largest are returned as additional null directions.
    """
    n = matrix.shape[0]
    if n_probes <= 0:
        return np.empty((n, 0))
    k = min(n_probes, max(1, n - known.shape[1] - 1))
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, k))
    top = spla.eigsh(matrix, k=1, which="LA", return_eigenvectors=False)[0] if n > 2 else 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        vals, vecs = spla.lobpcg(matrix, x, Y=orthonormal_basis(known) if known.size else None,
                                 largest=False, tol=1e-9, maxiter=500)
    keep = vals <= rtol * abs(top)
    return vecs[:, keep]
