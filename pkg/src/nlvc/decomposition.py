"""Three-term decomposition u = G phi + C* w + h of a two-point vector field."""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .operators import NonlocalOperators
from .solver import (CompatibilityWarning, LinearSystem, SolveReport, SolverConfig, SolverError,
                     cg_solve, check_compatibility, orthonormal_basis, probe_null_modes,
                     solvability_probe)

logger = logging.getLogger(__name__)


class BoundaryCondition(str, enum.Enum):
    DIRICHLET_ZERO = "dirichlet_zero"
    NEUMANN = "neumann"
    FLUX_MATCHING = "flux_matching"


class IncompatibleDataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecompositionConfig:
    """How the potential is pinned on Gamma and how hard the solves work.

    ``dirichlet_data`` optionally replaces the zero trace on Gamma_D nodes
    (one value per node; only Gamma_D entries are read).
    """

    bc: BoundaryCondition = BoundaryCondition.DIRICHLET_ZERO
    solver: SolverConfig = field(default_factory=SolverConfig)
    compat_rtol: float = 1e-10
    allow_incompatible: bool = False
    null_rtol: float = 1e-10
    dirichlet_data: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "bc", BoundaryCondition(self.bc))


def _require_vector_field(ops: NonlocalOperators, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (len(ops.pairs), 3):
        raise ValueError(f"u must be a vector two-point field of shape ({len(ops.pairs)}, 3)")
    return u


def _gauge(values: np.ndarray, volumes: np.ndarray) -> np.ndarray:
    return values - np.sum(values * volumes) / np.sum(volumes)


def solve_potential(ops: NonlocalOperators, u: np.ndarray,
                    cfg: DecompositionConfig | None = None) -> tuple[np.ndarray, SolveReport]:
    """phi with D(G phi) = D u on Omega plus the configured Gamma condition.

    Gamma_N rows carry N(G phi) = g with g = 0, or g = N(u) for flux
    matching.  Without Dirichlet nodes phi is fixed up to a constant and
    returned with zero volume-weighted mean.
    """
    cfg = cfg or DecompositionConfig()
    u = _require_vector_field(ops, u)
    nodes = ops.nodes
    vol = nodes.volumes
    div_u = ops.div(1, u, where="all")

    if cfg.bc is BoundaryCondition.DIRICHLET_ZERO:
        dirichlet = nodes.gamma_d.copy()
        g = np.zeros(len(nodes))
    else:
        dirichlet = np.zeros(len(nodes), dtype=bool)
        g = ops.interaction_N(u) if cfg.bc is BoundaryCondition.FLUX_MATCHING else np.zeros(len(nodes))
    active = ~dirichlet

    lift = np.zeros(len(nodes))
    if dirichlet.any() and cfg.dirichlet_data is not None:
        lift[dirichlet] = np.asarray(cfg.dirichlet_data, dtype=float)[dirichlet]

    # D(G phi) = -L phi; on Gamma rows D(G phi) = -N(G phi) = -g
    target = np.where(nodes.omega, div_u, -g)
    target = target + ops.laplacian(lift, where="all")
    matrix = -ops.assemble("laplacian", active=active, weighted=True)
    rhs = (vol * target)[active]

    null_basis = None
    defect = None
    if not dirichlet.any():
        gam = nodes.gamma
        defect = check_compatibility(div_u[nodes.omega], vol[nodes.omega], g[gam], vol[gam])
        scale = np.sum(np.abs(div_u[nodes.omega]) * vol[nodes.omega]) + np.sum(np.abs(g[gam]) * vol[gam])
        if defect > cfg.compat_rtol * max(scale, 1e-300):
            msg = (f"Neumann compatibility defect {defect:.3e} exceeds "
                   f"{cfg.compat_rtol:.1e} x {scale:.3e}")
            if not cfg.allow_incompatible:
                raise IncompatibleDataError(msg)
            warnings.warn(msg + "; projecting the right-hand side", CompatibilityWarning, stacklevel=2)
        null_basis = np.ones((active.sum(), 1))

    system = LinearSystem(matrix, rhs, null_basis, weights=vol[active] if null_basis is not None else None)
    x, report = cg_solve(system, cfg.solver.tol, cfg.solver.maxiter, cfg.solver.preconditioner)
    report.compatibility_defect = defect
    if not report.converged:
        raise SolverError(f"potential solve did not converge: residual {report.residual:.3e}")
    phi = lift.copy()
    phi[active] = x
    if null_basis is not None:
        phi = _gauge(phi, vol)
    return phi, report


def stream_null_basis(ops: NonlocalOperators, n_probes: int = 0, rtol: float = 1e-12) -> np.ndarray:
    """Null space of C* on one-point vector fields, stacked node-major.

    Constant fields always qualify; the dilation field x is included when
    every bond kernel is parallel to the bond (radial kernels).  Extra modes
    come from eigen-probes of the assembled operator.
    """
    n = len(ops.nodes)
    cands = []
    for k in range(3):
        e = np.zeros((n, 3))
        e[:, k] = 1.0
        cands.append(e)
    x = ops.nodes.positions - ops.nodes.positions.mean(axis=0)
    scale = np.abs(ops.alpha).max() * np.abs(x).max() if len(ops.pairs) else 1.0
    if np.abs(ops.curl_adjoint(x)).max() <= rtol * max(scale, 1e-300):
        cands.append(x)
    basis = np.stack([c.ravel() for c in cands], axis=1)
    if n_probes > 0:
        mat = ops.assemble("curlcurl", active=np.ones(n, dtype=bool), weighted=True)
        extra = probe_null_modes(mat, basis, n_probes)
        if extra.shape[1]:
            logger.info("deflation probes found %d extra null modes", extra.shape[1])
            basis = np.hstack([basis, extra])
    return orthonormal_basis(basis)


def solve_stream(ops: NonlocalOperators, u: np.ndarray,
                 cfg: DecompositionConfig | None = None) -> tuple[np.ndarray, SolveReport]:
    """w with C C* w = C u on all nodes, modulo the null space of C*.

    Rows on Gamma express T(C* w) = T(u).  The returned w is orthogonal to
    the null basis in the volume-weighted inner product.
    """
    cfg = cfg or DecompositionConfig()
    u = _require_vector_field(ops, u)
    n = len(ops.nodes)
    vol3 = np.repeat(ops.nodes.volumes, 3)
    rhs_field = ops.curl(u, where="all")
    basis = stream_null_basis(ops, cfg.solver.deflation_probes)

    probe = solvability_probe(rhs_field.ravel(), basis, vol3)
    # measure against the cancellation-free size of C u so round-off in a
    # near-zero right-hand side (curl-free u) is not mistaken for a defect
    ref = max(probe.rhs_norm, float(np.sqrt(np.sum(ops.curl(np.abs(u), where="all").ravel() ** 2 * vol3))))
    if ref > 0 and probe.null_component > cfg.null_rtol * ref:
        raise SolverError(
            f"curl-curl right-hand side has a null-space component {probe.null_component / ref:.3e} "
            "of its scale; it is not in the range of the curl")

    matrix = ops.assemble("curlcurl", active=np.ones(n, dtype=bool), weighted=True)
    system = LinearSystem(matrix, vol3 * rhs_field.ravel(), basis, weights=vol3)
    x, report = cg_solve(system, cfg.solver.tol, cfg.solver.maxiter, cfg.solver.preconditioner)
    if not report.converged:
        raise SolverError(f"stream solve did not converge: residual {report.residual:.3e}")
    return x.reshape(n, 3), report


@dataclass(eq=False)
class DecompositionResult:
    phi: np.ndarray
    w: np.ndarray
    h: np.ndarray
    gphi: np.ndarray
    cw: np.ndarray
    diagnostics: dict
    potential_report: SolveReport
    stream_report: SolveReport

    def summary(self) -> dict:
        return {
            "diagnostics": dict(self.diagnostics),
            "potential_solve": self.potential_report.as_dict(),
            "stream_solve": self.stream_report.as_dict(),
        }


def verify_orthogonality(ops: NonlocalOperators, result: DecompositionResult) -> tuple[float, float, float]:
    """<G phi, C* w + h>, <C* w, G phi + h>, <G phi, C* w> over all pairs."""
    gp, cw, h = result.gphi, result.cw, result.h
    return (ops.inner_pairs(gp, cw + h), ops.inner_pairs(cw, gp + h), ops.inner_pairs(gp, cw))


def decompose(ops: NonlocalOperators, u: np.ndarray,
              cfg: DecompositionConfig | None = None) -> DecompositionResult:
    cfg = cfg or DecompositionConfig()
    u = _require_vector_field(ops, u)
    phi, prep = solve_potential(ops, u, cfg)
    w, srep = solve_stream(ops, u, cfg)
    gphi = ops.grad(phi)
    cw = ops.curl_adjoint(w)
    h = u - gphi - cw
    result = DecompositionResult(phi, w, h, gphi, cw, {}, prep, srep)
    result.diagnostics.update(_diagnostics(ops, u, result))
    return result


def _diagnostics(ops: NonlocalOperators, u: np.ndarray, res: DecompositionResult) -> dict:
    vol = ops.nodes.volumes
    g = ops.nodes.gamma
    unorm = ops.norm_pairs(u)
    p_gc, p_ch, p_gpc = verify_orthogonality(ops, res)

    def gamma_norm(f):
        f = np.asarray(f).reshape(len(vol), -1)
        return float(np.sqrt(np.sum((f[g] ** 2).sum(axis=1) * vol[g])))

    return {
        "norm_u": unorm,
        "norm_gphi": ops.norm_pairs(res.gphi),
        "norm_cw": ops.norm_pairs(res.cw),
        "norm_h": ops.norm_pairs(res.h),
        "norm_div_h": ops.norm_nodes(ops.div(1, res.h)),
        "norm_curl_h": ops.norm_nodes(ops.curl(res.h)),
        "norm_div_h_all": ops.norm_nodes(ops.div(1, res.h, where="all"), where="all"),
        "norm_curl_h_all": ops.norm_nodes(ops.curl(res.h, where="all"), where="all"),
        "pair_gphi_cw": p_gpc,
        "pair_gphi_cw_plus_h": p_gc,
        "pair_cw_gphi_plus_h": p_ch,
        "pair_gphi_h": ops.inner_pairs(res.gphi, res.h),
        "pair_cw_h": ops.inner_pairs(res.cw, res.h),
        "reconstruction_defect": float(np.abs(u - res.gphi - res.cw - res.h).max()) if len(u) else 0.0,
        "normal_flux_residual": gamma_norm(ops.interaction_N(res.gphi) - ops.interaction_N(u)),
        "tangential_flux_residual": gamma_norm(ops.interaction_T(res.cw) - ops.interaction_T(u)),
    }
