import math

import numpy as np
import pytest
from scipy import integrate

from nlvc import analytic
from nlvc import convergence as cv


def test_moments_match_analytic():
    t = cv.ball_moments(1.0, 64)
    for k, r in t.ratios.items():
        assert abs(r - 1) < 0.01, k
    assert abs(t.analytic["h1^4/|h|^2"] - 4 * math.pi / 25) < 1e-15


def test_analytic_moments_by_independent_quadrature():
    # spherical coordinates with scipy tplquad as an independent check of the constants
    def integrand(fn):
        return lambda r, th, ph: fn(r * np.sin(th) * np.cos(ph), r * np.sin(th) * np.sin(ph), r * np.cos(th)) \
            * r ** 2 * np.sin(th)
    cases = {"h1^4/|h|^2": lambda x, y, z: x ** 4 / (x * x + y * y + z * z),
             "h1^2 h2^2/|h|^2": lambda x, y, z: x * x * y * y / (x * x + y * y + z * z),
             "h1^2": lambda x, y, z: x * x}
    for name, fn in cases.items():
        val, _ = integrate.tplquad(integrand(fn), 0, 2 * math.pi, 0, math.pi, 0, 1, epsabs=1e-11)
        assert abs(val - cv.MOMENT_NAMES[name]) < 1e-9


def test_odd_moments_vanish():
    t = cv.ball_moments(1.0, 64)
    scale = max(t.analytic.values())
    assert max(abs(v) for v in t.odd.values()) < 1e-3 * scale


def test_homogeneity():
    a, b = cv.ball_moments(1.0, 32), cv.ball_moments(2.0, 32)
    for k in a.computed:
        if abs(a.computed[k]) > 1e-12:
            assert abs(b.computed[k] / a.computed[k] - 32) < 1e-10 * 32
    assert abs(cv.homogeneity_exponent([0.5, 1.0, 2.0]) - 5) < 1e-6


def test_moment_resolution_floor():
    with pytest.raises(ValueError):
        cv.ball_moments(1.0, 7)
    with pytest.raises(ValueError):
        cv.ball_moments(0.0, 16)


def test_spherical_rule_integrates_polynomials():
    off, w = cv.spherical_rule(0.7)
    assert abs(w.sum() - 4 / 3 * math.pi * 0.7 ** 3) < 1e-13
    r2 = np.sum(off ** 2, axis=1)
    assert abs(np.sum(off[:, 0] ** 4 / r2 * w) - 4 * math.pi / 25 * 0.7 ** 5) < 1e-14


def test_laplacian_quadratic_below_floor():
    s = cv.laplacian_limit_study(analytic.scalar("quadratic"), [0.4, 0.2, 0.1], box=((0, 1),) * 3)
    assert s.below_floor and math.isnan(s.fitted_slope)
    assert all(r.error < 1e-10 for r in s.rows)


def test_laplacian_constant_exact():
    s = cv.laplacian_limit_study(analytic.scalar("constant"), [0.3, 0.15], box=((0, 1),) * 3)
    assert all(r.error == 0.0 for r in s.rows)


def test_laplacian_sin_slope():
    s = cv.laplacian_limit_study(analytic.scalar("sin_x1"), [0.4, 0.2, 0.1])
    assert abs(s.fitted_slope - 2) <= 0.3
    errs = [r.error for r in s.rows]
    assert errs == sorted(errs, reverse=True)


def test_grid_quadrature_plateaus():
    # the lattice second moment at m = 4 is biased, so the error stalls
    s = cv.laplacian_limit_study(analytic.scalar("sin_x1"), [0.4, 0.2, 0.1], quadrature="grid")
    assert abs(s.fitted_slope) < 0.5
    assert s.rows[-1].error > 0.05


def test_curlcurl_harmonic():
    s = cv.curlcurl_limit_study(analytic.vector("harmonic_quadratic"), [0.4, 0.2, 0.1])
    for r in s.rows:
        assert r.error < 1e-10 and r.extra["error_vs_curlcurl"] < 1e-10
    assert s.meta["matching_scale"] == "75/(8 pi delta^5)"


def test_curlcurl_nonharmonic_defect():
    s = cv.curlcurl_limit_study(analytic.vector("x1_squared"), [0.4, 0.2, 0.1])
    last = s.rows[-1]
    np.testing.assert_allclose(last.extra["defect_mean"], [-2, 0, 0], atol=0.2)
    assert last.extra["error_vs_curlcurl"] > 1.0


def test_curlcurl_constant_zero():
    s = cv.curlcurl_limit_study(analytic.vector("constant"), [0.3, 0.15])
    assert all(r.error == 0.0 for r in s.rows)


def test_limit_target_identity():
    # curl curl w - Laplacian w = grad div w - 2 Laplacian w
    x = np.random.default_rng(0).random((10, 3))
    for f in analytic.VECTORS.values():
        np.testing.assert_allclose(f.curlcurl(x) - f.laplacian(x), f.grad_div(x) - 2 * f.laplacian(x))


def test_empty_interior():
    with pytest.raises(ValueError):
        cv.laplacian_limit_study(analytic.scalar("sin_x1"), [0.6], box=((0, 1),) * 3)


def test_parallel_rows_same_order(monkeypatch):
    f = analytic.scalar("sin_x1")
    a = cv.laplacian_limit_study(f, [0.4, 0.2, 0.1], workers=1)
    b = cv.laplacian_limit_study(f, [0.1, 0.4, 0.2], workers=3)
    assert [(r.delta, r.error) for r in a.rows] == [(r.delta, r.error) for r in b.rows]
    monkeypatch.setenv("NLVC_THREADS", "x")
    with pytest.raises(ValueError):
        cv.thread_cap()


def test_csv_outputs(tmp_path):
    s = cv.laplacian_limit_study(analytic.scalar("sin_x1"), [0.4, 0.2, 0.1])
    cv.write_study_csv(tmp_path / "s.csv", s)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "delta,h,error,scaled_error,slope_running"
    assert len(lines) == 5 and lines[-1].startswith("slope,")
    cv.write_moments_csv(tmp_path / "m.csv", cv.ball_moments(1.0, 16))
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "name,computed,analytic,ratio" and len(lines) == 8
