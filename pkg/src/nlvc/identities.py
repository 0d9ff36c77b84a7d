"""Verification suite for the discrete operator identities.

Every check compares two independently evaluated sides and reports a
relative defect.  Scales are sums of absolute contributions so a check
cannot pass merely because both sides happen to be small.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from .fields import translation_residual_field
from .geometry import NodeSet, PairStructure, build_nodes, neighbor_pairs
from .kernels import Family, KernelSpec
from .operators import NonlocalOperators


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tolerance: float
    passed: bool
    note: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


def _check(name, value, tol, note="") -> Check:
    value = float(value)
    return Check(name, value, float(tol), bool(np.isfinite(value) and value <= tol), note)


def _rel(a, b, scale) -> float:
    d = float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) if np.size(a) else 0.0
    return d / scale if scale > 0 else d


DEFAULT_TOLERANCES = {
    "gauss": 1e-12,
    "green": 1e-12,
    "curlcurl_composition": 1e-13,
    "curlcurl_div_form": 1e-13,
    "curl_grad": 1e-13,
    "div_curl_adjoint": 1e-13,
    "duality_curl": 1e-13,
    "duality_div": 1e-13,
    "laplacian_composition": 1e-13,
    "linearity": 1e-13,
    "translation_div": 1e-12,
    "translation_curl": 1e-12,
}


def standard_setup(n: int = 6, ratio: float = 3.0, family: Family | str = Family.PERIDYNAMIC_UNIT):
    """Unit cube with n cells per side, delta = ratio * h."""
    h = 1.0 / n
    delta = ratio * h
    nodes = build_nodes([(0.0, 1.0)] * 3, h, delta)
    pairs = neighbor_pairs(nodes, delta)
    return NonlocalOperators(nodes, pairs, KernelSpec(Family(family), delta))


def gamma_zeroed(v: np.ndarray, nodes: NodeSet) -> np.ndarray:
    out = np.array(v, dtype=float)
    out[~nodes.omega] = 0.0
    return out


def translation_checks(ops: NonlocalOperators, tolerances: dict | None = None) -> list[Check]:
    """D and C of h(x, y) = y - x vanish at every node."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    h = translation_residual_field(ops.nodes, ops.pairs)
    return [
        _check("translation_div", np.abs(ops.div(1, h, where="all")).max(initial=0.0), tol["translation_div"],
               "max |D h| over all nodes"),
        _check("translation_curl", np.abs(ops.curl(h, where="all")).max(initial=0.0), tol["translation_curl"],
               "max |C h| over all nodes"),
    ]


def identity_checks(ops: NonlocalOperators, seed: int = 0, tolerances: dict | None = None) -> list[Check]:
    """Gauss, Green, compositions, dualities and linearity on random fields."""
    tol = {**DEFAULT_TOLERANCES, **(tolerances or {})}
    rng = np.random.default_rng(seed)
    nodes, pairs = ops.nodes, ops.pairs
    n, p = len(nodes), len(pairs)
    vol = nodes.volumes
    om, gam = nodes.omega, nodes.gamma
    checks = []

    # Gauss: sum_Omega D nu V = sum_Gamma N nu V
    nu = rng.standard_normal((p, 3))
    dnu = ops.div(1, nu)
    nnu = ops.interaction_N(nu)
    lhs, rhs = np.sum(dnu[om] * vol[om]), np.sum(nnu[gam] * vol[gam])
    scale = np.sum(np.abs(dnu) * vol) + np.sum(np.abs(nnu) * vol)
    checks.append(_check("gauss", abs(lhs - rhs) / scale, tol["gauss"]))

    # Green's first identity, written with G = -D*
    u, v = rng.standard_normal(n), rng.standard_normal(n)
    gu, gv = ops.grad(u), ops.grad(v)
    dgu = ops.div(1, gu)
    ngu = ops.interaction_N(gu)
    t1 = np.sum(v[om] * dgu[om] * vol[om])
    t2 = ops.inner_pairs(gv, gu)
    t3 = np.sum(v[gam] * ngu[gam] * vol[gam])
    scale = (np.sum(np.abs(v * dgu) * vol) + ops.inner_pairs(np.abs(gv), np.abs(gu))
             + np.sum(np.abs(v * ngu) * vol))
    checks.append(_check("green", abs(t1 - t2 - t3) / scale, tol["green"],
                         "sum_Omega v D(Gu) V - <Gv, Gu> = sum_Gamma v N(Gu) V"))

    # curl-curl: closed form against C(C* w) and against D2(G2 w) - D0(G0 w)
    w = rng.standard_normal((n, 3))
    cc = ops.curlcurl(w)
    scale = float(np.abs(ops.curl(np.abs(ops.curl_adjoint(w)))).max()) or 1.0
    checks.append(_check("curlcurl_composition", _rel(cc, ops.curl(ops.curl_adjoint(w)), scale),
                         tol["curlcurl_composition"]))
    div_form = ops.div(2, ops.grad(w, rank=2)) - ops.div(0, ops.grad(w, rank=0))
    checks.append(_check("curlcurl_div_form", _rel(cc, div_form, scale), tol["curlcurl_div_form"],
                         "C C* w = D2(G2 w) - D0(G0 w)"))

    # null compositions
    phi = rng.standard_normal(n)
    gphi = ops.grad(phi)
    scale = float(np.abs(ops.curl(np.abs(gphi), where="all")).max()) or 1.0
    checks.append(_check("curl_grad", np.abs(ops.curl(gphi, where="all")).max() / scale, tol["curl_grad"]))
    cw = ops.curl_adjoint(w)
    scale = float(np.abs(ops.div(1, np.abs(cw), where="all")).max()) or 1.0
    checks.append(_check("div_curl_adjoint", np.abs(ops.div(1, cw, where="all")).max() / scale,
                         tol["div_curl_adjoint"]))

    # dualities with zero data on Gamma
    u2 = rng.standard_normal((p, 3))
    w0 = gamma_zeroed(w, nodes)
    a, b = ops.inner_nodes(ops.curl(u2), w0), ops.inner_pairs(u2, ops.curl_adjoint(w0))
    scale = ops.norm_pairs(u2) * ops.norm_pairs(ops.curl_adjoint(w0))
    checks.append(_check("duality_curl", abs(a - b) / scale, tol["duality_curl"], "<Cu, w> = <u, C* w>"))
    v0 = gamma_zeroed(v, nodes)
    a, b = ops.inner_nodes(ops.div(1, u2), v0), ops.inner_pairs(u2, ops.grad(v0))
    scale = ops.norm_pairs(u2) * ops.norm_pairs(ops.grad(v0))
    checks.append(_check("duality_div", abs(a - b) / scale, tol["duality_div"], "<D psi, v> = <psi, G v>"))

    # L = D D* entrywise
    lap = ops.laplacian(u)
    scale = float(np.abs(ops.div(1, np.abs(ops.adjoint(1, u)))).max()) or 1.0
    checks.append(_check("laplacian_composition", _rel(lap, ops.div(1, ops.adjoint(1, u)), scale),
                         tol["laplacian_composition"]))

    # linearity of D, C and C C*
    s, t = rng.standard_normal(2)
    worst = 0.0
    for f, x, y in ((lambda z: ops.div(1, z), nu, u2), (ops.curl, nu, u2), (ops.curlcurl, w, rng.standard_normal((n, 3)))):
        lhs = f(s * x + t * y)
        rhs = s * f(x) + t * f(y)
        sc = float(np.abs(s * f(x)).max() + np.abs(t * f(y)).max()) or 1.0
        worst = max(worst, _rel(lhs, rhs, sc))
    checks.append(_check("linearity", worst, tol["linearity"], "D, C and C C*"))

    return checks


def run_identity_suite(n: int = 6, ratio: float = 3.0, seed: int = 0,
                       tolerances: dict | None = None) -> tuple[list[Check], dict]:
    """Standard suite on the n^3 grid; returns checks and run metadata."""
    t0 = time.perf_counter()
    ops = standard_setup(n, ratio)
    checks = identity_checks(ops, seed, tolerances) + translation_checks(ops, tolerances)
    meta = {"nodes": len(ops.nodes), "pairs": len(ops.pairs), "seconds": time.perf_counter() - t0}
    return checks, meta


def suite_for(nodes: NodeSet, pairs: PairStructure, kernel: KernelSpec, seed: int = 0,
              tolerances: dict | None = None) -> list[Check]:
    ops = NonlocalOperators(nodes, pairs, kernel)
    return identity_checks(ops, seed, tolerances) + translation_checks(ops, tolerances)
