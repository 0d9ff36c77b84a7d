"""Local limits of the nonlocal Laplacian and curl-curl as the horizon shrinks.

The nonlocal operators here use the unit-direction kernel (|alpha|^2 = 1 on
the ball).  Two quadratures of the ball integral are available:

``spherical``
    Gauss-Legendre in radius and polar cosine, uniform in azimuth.  Exact
    for polynomials well beyond the Taylor orders involved, so the measured
    error is the truncation error of the local limit itself.
``grid``
    The meshfree lattice sum with spacing h = delta / m and center-in-ball
    cells, i.e. what the particle operators compute at interior nodes.  Its
    second moment is off by a fixed, m-dependent factor, so the error
    plateaus instead of decaying.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import ScalarField, VectorField

LAPLACIAN_SCALE = 15.0 / (4.0 * math.pi)  # times delta^-5
CURLCURL_SCALE = 75.0 / (8.0 * math.pi)  # times delta^-5
# alternative reading of the curl-curl constant, reported for comparison
CURLCURL_ALT_SCALE = 75.0 / (4.0 * math.pi)

MOMENT_NAMES = {
    "h1^4/|h|^2": 4.0 * math.pi / 25.0,
    "h1^2 h2^2/|h|^2": 4.0 * math.pi / 75.0,
    "h1^2": 4.0 * math.pi / 15.0,
}
ODD_MOMENTS = ("h1^3/|h|^2", "h1^3 h2/|h|^2", "h1 h2^3/|h|^2", "h1^2 h2 h3/|h|^2")


def _moment_integrands(h: np.ndarray) -> dict[str, np.ndarray]:
    r2 = np.sum(h ** 2, axis=1)
    h1, h2, h3 = h.T
    return {
        "h1^4/|h|^2": h1 ** 4 / r2,
        "h1^2 h2^2/|h|^2": h1 ** 2 * h2 ** 2 / r2,
        "h1^2": h1 ** 2,
        "h1^3/|h|^2": h1 ** 3 / r2,
        "h1^3 h2/|h|^2": h1 ** 3 * h2 / r2,
        "h1 h2^3/|h|^2": h1 * h2 ** 3 / r2,
        "h1^2 h2 h3/|h|^2": h1 ** 2 * h2 * h3 / r2,
    }


@dataclass
class MomentTable:
    delta: float
    resolution: int
    computed: dict[str, float]
    analytic: dict[str, float]

    @property
    def ratios(self) -> dict[str, float]:
        return {k: self.computed[k] / self.analytic[k] for k in self.analytic}

    @property
    def odd(self) -> dict[str, float]:
        return {k: self.computed[k] for k in ODD_MOMENTS}

    def rows(self) -> list[tuple[str, float, float, float]]:
        out = [(k, self.computed[k], a, self.computed[k] / a) for k, a in self.analytic.items()]
        out += [(k, self.computed[k], 0.0, float("nan")) for k in ODD_MOMENTS]
        return out


def ball_moments(delta: float, resolution: int = 64) -> MomentTable:
    """Midpoint-rule ball moments with ``resolution`` cells per diameter."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if resolution < 8:
        raise ValueError(f"resolution {resolution} is below the minimum of 8 cells per diameter")
    cell = 2.0 * delta / resolution
    c = -delta + (np.arange(resolution) + 0.5) * cell
    g = np.stack(np.meshgrid(c, c, c, indexing="ij"), axis=-1).reshape(-1, 3)
    g = g[np.sum(g ** 2, axis=1) <= delta ** 2]
    vals = _moment_integrands(g)
    computed = {k: float(np.sum(v) * cell ** 3) for k, v in vals.items()}
    analytic = {k: a * delta ** 5 for k, a in MOMENT_NAMES.items()}
    return MomentTable(delta, resolution, computed, analytic)


def homogeneity_exponent(deltas, resolution: int = 64, name: str = "h1^4/|h|^2") -> float:
    """Least-squares exponent p in moment ~ delta^p."""
    deltas = np.asarray(deltas, dtype=float)
    m = np.array([ball_moments(d, resolution).computed[name] for d in deltas])
    return float(np.polyfit(np.log(deltas), np.log(m), 1)[0])


# -- ball quadrature -------------------------------------------------------

def spherical_rule(delta: float, n_radial: int = 8, n_polar: int = 16, n_azimuth: int = 32):
    """Offsets (q, 3) and weights (q,) integrating over the ball of radius delta."""
    xr, wr = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * delta * (xr + 1.0)
    wr = 0.5 * delta * wr * r ** 2
    ct, wt = np.polynomial.legendre.leggauss(n_polar)
    st = np.sqrt(1.0 - ct ** 2)
    ph = 2.0 * math.pi * np.arange(n_azimuth) / n_azimuth
    wp = np.full(n_azimuth, 2.0 * math.pi / n_azimuth)
    dirs = np.stack([st[:, None] * np.cos(ph)[None, :],
                     st[:, None] * np.sin(ph)[None, :],
                     np.broadcast_to(ct[:, None], (n_polar, n_azimuth))], axis=-1).reshape(-1, 3)
    wdir = (wt[:, None] * wp[None, :]).ravel()
    offsets = (r[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    weights = (wr[:, None] * wdir[None, :]).ravel()
    return offsets, weights


def lattice_rule(delta: float, h: float):
    """Center-in-ball lattice offsets k h, |k h| <= delta, k != 0, weight h^3."""
    m = int(math.floor(delta / h + 1e-9))
    k = np.arange(-m, m + 1)
    g = np.stack(np.meshgrid(k, k, k, indexing="ij"), axis=-1).reshape(-1, 3) * h
    r = np.linalg.norm(g, axis=1)
    g = g[(r > 0) & (r <= delta * (1 + 1e-12))]
    return g, np.full(len(g), h ** 3)


def _rule(quadrature: str, delta: float, h: float, order: tuple[int, int, int]):
    if quadrature == "spherical":
        return spherical_rule(delta, *order)
    if quadrature == "grid":
        return lattice_rule(delta, h)
    raise ValueError(f"unknown quadrature {quadrature!r}; expected 'spherical' or 'grid'")


def probe_points(box, delta: float, h: float) -> np.ndarray:
    """Cell centers at least delta inside the box, on lines through its center.

    Takes the three axis-parallel lines and the main diagonal through the
    node nearest the box center, so every coordinate's interior range is
    sampled without a full 3-D sweep.
    """
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    axes = []
    for a, b in zip(lo, hi):
        n = int(math.ceil((b - a) / h - 1e-9))
        c = a + (np.arange(n) + 0.5) * h
        axes.append(c[(c - a >= delta * (1 - 1e-12)) & (b - c >= delta * (1 - 1e-12))])
    if any(len(a) == 0 for a in axes):
        raise ValueError(f"no interior probes: delta={delta} leaves an empty interior region")
    mid = [a[np.argmin(np.abs(a - a.mean()))] for a in axes]
    pts = []
    for k in range(3):
        line = np.tile(mid, (len(axes[k]), 1))
        line[:, k] = axes[k]
        pts.append(line)
    nd = min(len(a) for a in axes)
    start = [np.argmin(np.abs(a - a.mean())) - nd // 2 for a in axes]
    diag = np.stack([axes[k][max(start[k], 0):max(start[k], 0) + nd] for k in range(3)], axis=1)
    pts.append(diag[: min(len(d) for d in diag.T)])
    return np.unique(np.vstack(pts), axis=0)


def nonlocal_laplacian_at(w: ScalarField, probes: np.ndarray, offsets, weights) -> np.ndarray:
    """2 int_B (w(x+h) - w(x)) dh with |alpha|^2 = 1."""
    vals = w.value(probes[:, None, :] + offsets[None, :, :]) - w.value(probes)[:, None]
    return 2.0 * vals @ weights


def nonlocal_curlcurl_at(w: VectorField, probes: np.ndarray, offsets, weights) -> np.ndarray:
    """2 int_B [(a (x) a) d - d] dh with a = h/|h| and d = w(x+h) - w(x)."""
    unit = offsets / np.linalg.norm(offsets, axis=1, keepdims=True)
    out = np.empty((len(probes), 3))
    for start in range(0, len(probes), 64):
        p = probes[start:start + 64]
        d = w.value(p[:, None, :] + offsets[None, :, :]) - w.value(p)[:, None, :]
        proj = np.einsum("pqk,qk->pq", d, unit)[..., None] * unit[None] - d
        out[start:start + 64] = 2.0 * np.einsum("pqk,q->pk", proj, weights)
    return out


@dataclass
class ConvergenceRow:
    delta: float
    h: float
    error: float
    scaled_error: float
    slope_running: float = float("nan")
    extra: dict = field(default_factory=dict)


@dataclass
class ConvergenceStudy:
    rows: list[ConvergenceRow]
    fitted_slope: float
    below_floor: bool
    meta: dict = field(default_factory=dict)


def fit_slope(deltas, errors, last: int = 3) -> float:
    """Log-log least-squares slope over the ``last`` smallest-delta rows."""
    d = np.asarray(deltas, dtype=float)
    e = np.asarray(errors, dtype=float)
    order = np.argsort(d)[:last]
    d, e = d[order], e[order]
    if len(d) < 2 or np.any(e <= 0):
        return float("nan")
    return float(np.polyfit(np.log(d), np.log(e), 1)[0])


def _finish_study(rows: list[ConvergenceRow], floor: float, meta: dict) -> ConvergenceStudy:
    rows.sort(key=lambda r: -r.delta)
    for prev, cur in zip(rows, rows[1:]):
        if prev.error > 0 and cur.error > 0:
            cur.slope_running = math.log(prev.error / cur.error) / math.log(prev.delta / cur.delta)
    below = all(r.error <= floor for r in rows)
    slope = float("nan") if below else fit_slope([r.delta for r in rows], [r.error for r in rows])
    return ConvergenceStudy(rows, slope, below, meta)


def _validate(deltas, ratio):
    deltas = [float(d) for d in deltas]
    if not deltas or any(d <= 0 for d in deltas):
        raise ValueError("delta list must be nonempty and positive")
    if not ratio > 0:
        raise ValueError("ratio m = delta / h must be positive")
    return deltas


def thread_cap() -> int:
    """Worker cap from NLVC_THREADS (default 1)."""
    raw = os.environ.get("NLVC_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"NLVC_THREADS must be an integer, got {raw!r}") from None


def _run_rows(fn, deltas, workers: int | None):
    # rows are independent; map() keeps input order whatever the completion order
    workers = thread_cap() if workers is None else workers
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, deltas))
    return [fn(d) for d in deltas]


def laplacian_limit_study(w: ScalarField, deltas, ratio: float = 4.0, box=((0.0, math.pi),) * 3,
                          quadrature: str = "spherical", order=(8, 16, 32),
                          floor: float = 1e-10, workers: int | None = None) -> ConvergenceStudy:
    """Max-norm error of 15/(4 pi delta^5) L w against the local Laplacian."""
    deltas = _validate(deltas, ratio)

    def row(delta):
        h = delta / ratio
        probes = probe_points(box, delta, h)
        offsets, weights = _rule(quadrature, delta, h, order)
        scaled = LAPLACIAN_SCALE / delta ** 5 * nonlocal_laplacian_at(w, probes, offsets, weights)
        target = w.laplacian(probes)
        err = float(np.abs(scaled - target).max())
        tmax = float(np.abs(target).max())
        return ConvergenceRow(delta, h, err, err / tmax if tmax > 0 else err,
                              extra={"probes": len(probes)})

    rows = _run_rows(row, deltas, workers)
    return _finish_study(rows, floor, {"operator": "laplacian", "field": w.name, "ratio": ratio,
                                       "quadrature": quadrature})


def curlcurl_limit_study(w: VectorField, deltas, ratio: float = 4.0, box=((0.0, 1.0),) * 3,
                         quadrature: str = "spherical", order=(8, 16, 32),
                         floor: float = 1e-10, workers: int | None = None) -> ConvergenceStudy:
    """Max-norm error of kappa C C* w against curl curl w - Laplacian w.

    Each row also records the defect kappa C C* w - curl curl w (which tends
    to -Laplacian w) and the error under the alternative constant.
    """
    deltas = _validate(deltas, ratio)

    def row(delta):
        h = delta / ratio
        probes = probe_points(box, delta, h)
        offsets, weights = _rule(quadrature, delta, h, order)
        cc = nonlocal_curlcurl_at(w, probes, offsets, weights) / delta ** 5
        scaled = CURLCURL_SCALE * cc
        target = w.curlcurl(probes) - w.laplacian(probes)
        err = float(np.abs(scaled - target).max())
        tmax = float(np.abs(target).max())
        local = w.curlcurl(probes)
        defect = scaled - local
        expected_defect = -w.laplacian(probes)
        alt_err = float(np.abs(CURLCURL_ALT_SCALE * cc - target).max())
        return ConvergenceRow(delta, h, err, err / tmax if tmax > 0 else err, extra={
            "probes": len(probes),
            "error_vs_curlcurl": float(np.abs(defect).max()),
            "defect_mean": [float(v) for v in defect.mean(axis=0)],
            "defect_vs_minus_laplacian": float(np.abs(defect - expected_defect).max()),
            "alt_scale_error": alt_err,
        })

    rows = _run_rows(row, deltas, workers)
    study = _finish_study(rows, floor, {"operator": "curlcurl", "field": w.name, "ratio": ratio,
                                        "quadrature": quadrature})
    last = min(study.rows, key=lambda r: r.delta)
    study.meta["matching_scale"] = ("75/(8 pi delta^5)" if last.error <= last.extra["alt_scale_error"]
                                    else "75/(4 pi delta^5)")
    return study


# -- CSV output --------------------------------------------------------------

def _g(x: float) -> str:
    return "%.17g" % x


def write_study_csv(path, study: ConvergenceStudy) -> None:
    """One row per delta (largest first) and a footer row carrying the fitted slope."""
    with open(path, "w", newline="") as fh:
        fh.write("delta,h,error,scaled_error,slope_running\n")
        for r in study.rows:
            fh.write(",".join(_g(v) for v in (r.delta, r.h, r.error, r.scaled_error, r.slope_running)) + "\n")
        fh.write(f"slope,,,,{_g(study.fitted_slope)}\n")


def write_moments_csv(path, table: MomentTable) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("name,computed,analytic,ratio\n")
        for name, comp, ana, ratio in table.rows():
            fh.write(f"{name},{_g(comp)},{_g(ana)},{_g(ratio)}\n")
