"""Acceptance criteria 1-9.

Each test records one pass/fail line in ``RESULTS``; the lines are printed
in the pytest terminal summary and when this file is run as a script.
"""

import time

import numpy as np
import pytest

from nlvc import analytic
from nlvc import convergence as cv
from nlvc.cli import example32_level, main
from nlvc.decomposition import decompose, stream_null_basis
from nlvc.fields import translation_residual_field
from nlvc.identities import identity_checks, standard_setup
from nlvc.solver import SolverConfig, orthonormal_basis, solvability_probe

RESULTS: dict[int, str] = {}


def record(n, ok, detail):
    RESULTS[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(RESULTS[n])
    assert ok, RESULTS[n]


def test_criterion_1_identity_suite():
    t0 = time.perf_counter()
    ops = standard_setup(6, 3.0)
    checks = identity_checks(ops, seed=0)
    dt = time.perf_counter() - t0
    ok = all(c.passed for c in checks) and dt < 10
    worst = max(checks, key=lambda c: c.value / c.tolerance)
    record(1, ok, f"{len(checks)} identities, worst {worst.name}={worst.value:.2e} (tol {worst.tolerance:.0e}), "
                  f"{dt:.2f}s")


def test_criterion_2_translation_residual():
    ops = standard_setup(6, 3.0)
    t0 = time.perf_counter()
    h = translation_residual_field(ops.nodes, ops.pairs)
    dh = np.abs(ops.div(1, h, where="all")).max()
    ch = np.abs(ops.curl(h, where="all")).max()
    dt = time.perf_counter() - t0
    record(2, dh <= 1e-12 and ch <= 1e-12 and dt < 1, f"|Dh|={dh:.1e} |Ch|={ch:.1e} {dt:.3f}s")


def test_criterion_3_planar_example():
    t0 = time.perf_counter()
    rows = [example32_level(h, 4.0, "flux_matching", True, SolverConfig()) for h in (1 / 8, 1 / 16, 1 / 32)]
    dt = time.perf_counter() - t0

    def dec(key):
        v = [r[key] for r in rows]
        return all(b < a for a, b in zip(v, v[1:]))

    alg = max(r["algebraic_defect"] for r in rows)
    ok = alg <= 1e-13 and dec("error_gphi") and dec("error_cw") and dec("norm_h") and dt < 60
    errs = ", ".join(f"h={r['h']:.4g}: Gphi {r['error_gphi']:.3f} C*w {r['error_cw']:.3f} |h| {r['norm_h']:.3f}"
                     for r in rows)
    record(3, ok, f"algebraic {alg:.1e}; {errs}; {dt:.1f}s")


def test_criterion_4_orthogonality():
    t0 = time.perf_counter()
    ops = standard_setup(6, 3.0)
    worst = 0.0
    for seed in range(20):
        u = np.random.default_rng(seed).standard_normal((len(ops.pairs), 3))
        res = decompose(ops, u)
        rel = abs(ops.inner_pairs(res.gphi, res.cw)) / (ops.norm_pairs(res.gphi) * ops.norm_pairs(res.cw))
        worst = max(worst, rel)
    dt = time.perf_counter() - t0
    record(4, worst <= 1e-11 and dt < 30, f"max |<Gphi,C*w>|/(|Gphi||C*w|) = {worst:.1e} over 20 inputs, {dt:.1f}s")


def test_criterion_5_manufactured_recovery():
    t0 = time.perf_counter()
    ops = standard_setup(3, 1.5)
    n, om = ops.n, ops.nodes.omega
    rng = np.random.default_rng(42)
    phi_star = np.where(om, rng.standard_normal(n), 0.0)
    vol3 = np.repeat(ops.nodes.volumes, 3)
    basis = stream_null_basis(ops)
    q = orthonormal_basis(basis, vol3)
    w_star = rng.standard_normal(3 * n)
    w_star = (w_star - q @ (q.T @ (w_star * vol3))).reshape(n, 3)
    gp, cw = ops.grad(phi_star), ops.curl_adjoint(w_star)
    u = gp + cw

    res = decompose(ops, u)
    e_phi = ops.norm_pairs(res.gphi - gp) / ops.norm_pairs(gp)
    e_w = ops.norm_pairs(res.cw - cw) / ops.norm_pairs(cw)

    # dense direct-solve oracle on the same systems
    lap = -ops.assemble("laplacian", weighted=True).toarray()
    phi_o = np.zeros(n)
    phi_o[om] = np.linalg.solve(lap, (ops.nodes.volumes * ops.div(1, u))[om])
    cc = ops.assemble("curlcurl", active=np.ones(n, dtype=bool), weighted=True).toarray()
    w_o = np.linalg.lstsq(cc, vol3 * ops.curl(u, where="all").ravel(), rcond=1e-12)[0].reshape(n, 3)
    o_phi = ops.norm_pairs(res.gphi - ops.grad(phi_o)) / ops.norm_pairs(gp)
    o_w = ops.norm_pairs(res.cw - ops.curl_adjoint(w_o)) / ops.norm_pairs(cw)
    dt = time.perf_counter() - t0
    unknowns = max(lap.shape[0], cc.shape[0])
    ok = max(e_phi, e_w, o_phi, o_w) <= 1e-9 and unknowns <= 500 and dt < 30
    record(5, ok, f"vs truth {e_phi:.1e}/{e_w:.1e}, vs dense oracle {o_phi:.1e}/{o_w:.1e}, "
                  f"{unknowns} unknowns, {dt:.1f}s")


def test_criterion_6_moments():
    t = cv.ball_moments(1.0, 64)
    ratio_dev = max(abs(r - 1) for r in t.ratios.values())
    odd = max(abs(v) for v in t.odd.values()) / max(t.analytic.values())
    p = cv.homogeneity_exponent([0.5, 1.0, 2.0], 64)
    ok = ratio_dev <= 0.01 and odd < 1e-3 and abs(p - 5) <= 1e-6
    record(6, ok, f"max ratio deviation {ratio_dev:.2e}, odd/even {odd:.1e}, exponent {p:.10f}")


def test_criterion_7_local_limits():
    t0 = time.perf_counter()
    lap = cv.laplacian_limit_study(analytic.scalar("sin_x1"), [0.4, 0.2, 0.1], 4.0)
    harm = cv.curlcurl_limit_study(analytic.vector("harmonic_quadratic"), [0.4, 0.2, 0.1], 4.0)
    quad = cv.curlcurl_limit_study(analytic.vector("x1_squared"), [0.4, 0.2, 0.1], 4.0)
    dt = time.perf_counter() - t0
    slope_ok = abs(lap.fitted_slope - 2) <= 0.3
    herr = [r.extra["error_vs_curlcurl"] for r in harm.rows]
    harm_ok = harm.below_floor or all(b < a for a, b in zip(herr, herr[1:]))
    defect = np.array(quad.rows[-1].extra["defect_mean"])
    d_dev = np.abs(defect - [-2, 0, 0]).max() / 2
    ok = slope_ok and harm_ok and d_dev <= 0.1 and dt < 300
    record(7, ok, f"Laplacian slope {lap.fitted_slope:.3f}; harmonic |kCC*w - curlcurl w| {herr[-1]:.1e}; "
                  f"(x1^2,0,0) defect {np.round(defect, 6).tolist()}; scale {quad.meta['matching_scale']}; {dt:.1f}s")


def test_criterion_8_range_probe():
    ops = standard_setup(5, 2.0)
    basis = stream_null_basis(ops)
    vol3 = np.repeat(ops.nodes.volumes, 3)
    worst = 0.0
    for seed in range(10):
        f = np.random.default_rng(seed).standard_normal((len(ops.pairs), 3))
        worst = max(worst, solvability_probe(ops.curl(f, where="all").ravel(), basis, vol3).relative_null)
    rejected = all(not solvability_probe(basis[:, k], basis, vol3).consistent
                   and solvability_probe(basis[:, k], basis, vol3).relative_null > 1 - 1e-12
                   for k in range(basis.shape[1]))
    record(8, worst <= 1e-12 and rejected, f"max null component {worst:.1e} over 10 inputs; "
                                           f"pure null right-hand sides rejected: {rejected}")


CONFIGS = {
    "identities": "[geometry]\nh = 0.2\n[kernel]\ndelta = 0.6\n",
    "example32": "[example32]\nlevels = 0.125, 0.0625\n",
    "decompose": "[geometry]\nh = 0.2\n[kernel]\ndelta = 0.4\n[input]\nfield = random\nseed = 3\n",
    "converge": "[converge]\noperator = curlcurl\nfield = x1_squared\ndeltas = 0.4, 0.2\n",
    "moments": "[moments]\nresolution = 32\nratio_tol = 0.05\n",
}


def test_criterion_9_determinism(tmp_path):
    mismatched = []
    nfiles = 0
    for cmd, text in CONFIGS.items():
        cfg = tmp_path / f"{cmd}.ini"
        cfg.write_text(text)
        outs = [tmp_path / f"{cmd}_{k}" for k in (1, 2)]
        codes = [main([cmd, "--config", str(cfg), "--out", str(o)]) for o in outs]
        if codes != [0, 0]:
            mismatched.append(f"{cmd} exit {codes}")
        names = sorted(p.name for p in outs[0].iterdir())
        if names != sorted(p.name for p in outs[1].iterdir()):
            mismatched.append(f"{cmd} file lists")
        for name in names:
            nfiles += 1
            if (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                mismatched.append(f"{cmd}/{name}")
    record(9, not mismatched, f"{nfiles} files compared across 5 commands; mismatches: {mismatched or 'none'}")


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-q", "-s"]))
