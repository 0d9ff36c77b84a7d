"""Command-line driver: ``nlvc <command> --config <path> [--out <dir>] [--strict]``.

Configs are INI files ([section] / key = value).  Every run writes
``summary.json`` with the per-check results, the fully resolved config and
library versions.  Exit status: 0 all checks pass, 2 a tolerance check
failed, 1 error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import platform
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import analytic, convergence, identities
from .decomposition import BoundaryCondition, DecompositionConfig, decompose
from .fields import (example32_fields, lift_average, lift_difference, lift_weighted, read_two_point_csv,
                     restrict_to_omega, translation_residual_field, write_point_csv, write_two_point_csv)
from .geometry import Mode, build_nodes, neighbor_pairs, read_nodes_csv, write_nodes_csv
from .kernels import Family, KernelSpec
from .operators import NonlocalOperators
from .solver import SolverConfig

logger = logging.getLogger("nlvc")

COMMANDS = ("identities", "example32", "decompose", "converge", "moments")
REQUIRED = object()


class ConfigError(ValueError):
    pass


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(";", ",").split(",") if t.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(conv):
    return lambda text: None if text.strip().lower() in ("", "none") else conv(text)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "geometry": {
        "bounds": (_floats, [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]),
        "h": (float, 1.0 / 6.0),
        "mode": (str, "full3d"),
        "split": (str, "dirichlet"),
    },
    "kernel": {
        "family": (str, "peridynamic_unit"),
        "delta": (float, REQUIRED),
        "beta": (_opt(float), None),
    },
    "solver": {
        "tol": (float, 1e-10),
        "maxiter": (_opt(int), None),
        "preconditioner": (str, "none"),
        "deflation_probes": (int, 0),
    },
    "decomposition": {
        "bc": (str, "dirichlet_zero"),
        "compat_rtol": (float, 1e-10),
        "allow_incompatible": (_bool, False),
        "null_rtol": (float, 1e-10),
    },
    "input": {
        "source": (str, "analytic"),
        "field": (str, "rotation"),
        "lift": (str, "average"),
        "weight": (str, "one"),
        "seed": (int, 0),
        "restrict": (_bool, False),
        "file": (str, ""),
        "nodes": (str, ""),
    },
    "identities": {
        "seed": (int, 0),
    },
    "example32": {
        "levels": (_floats, [0.125, 0.0625, 0.03125]),
        "ratio": (float, 4.0),
        "bc": (str, "flux_matching"),
        "restrict": (_bool, True),
    },
    "converge": {
        "operator": (str, "laplacian"),
        "field": (str, "sin_x1"),
        "deltas": (_floats, [0.4, 0.2, 0.1]),
        "ratio": (float, 4.0),
        "quadrature": (str, "spherical"),
        "box": (_floats, []),
        "floor": (float, 1e-10),
        "expected_slope": (float, 2.0),
        "slope_tol": (float, 0.3),
        "defect_rtol": (float, 0.1),
    },
    "moments": {
        "delta": (float, 1.0),
        "resolution": (int, 64),
        "homogeneity_deltas": (_floats, [0.5, 1.0, 2.0]),
        "ratio_tol": (float, 0.01),
        "odd_tol": (float, 1e-3),
        "exponent_tol": (float, 1e-6),
    },
}

TOLERANCE_DEFAULTS = {
    **identities.DEFAULT_TOLERANCES,
    "reconstruction": 1e-12,
    "orthogonality": 1e-11,
    "algebraic": 1e-13,
}

# commands that build operators from [geometry] and [kernel]
NEEDS_KERNEL = ("identities", "decompose")


def load_config(path, command: str, strict: bool = False) -> dict:
    """Parse and validate; returns the resolved config with defaults filled."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    unknown = []
    for section in parser.sections():
        if section == "tolerances":
            unknown += [f"tolerances.{k}" for k in parser[section] if k not in TOLERANCE_DEFAULTS]
        elif section not in SCHEMA:
            unknown.append(section)
        else:
            unknown += [f"{section}.{k}" for k in parser[section] if k not in SCHEMA[section]]
    if unknown:
        if strict:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        logger.warning("ignoring unknown config keys: %s", ", ".join(unknown))

    resolved: dict = {}
    for section, keys in SCHEMA.items():
        out = {}
        for key, (conv, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    out[key] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: invalid value {raw!r} ({exc})") from None
            elif default is REQUIRED:
                out[key] = None
            else:
                out[key] = default
        resolved[section] = out
    tol = dict(TOLERANCE_DEFAULTS)
    if parser.has_section("tolerances"):
        for k, raw in parser["tolerances"].items():
            if k in tol:
                try:
                    tol[k] = float(raw)
                except ValueError:
                    raise ConfigError(f"tolerances.{k}: invalid value {raw!r}") from None
    resolved["tolerances"] = tol

    if command in NEEDS_KERNEL and resolved["kernel"]["delta"] is None:
        raise ConfigError("kernel.delta: required field is missing")
    _validate(resolved, command)
    return resolved


def _positive(cfg, section, key):
    v = cfg[section][key]
    if v is not None and not v > 0:
        raise ConfigError(f"{section}.{key}: must be positive, got {v}")


def _validate(cfg: dict, command: str) -> None:
    for sec, key in (("geometry", "h"), ("kernel", "delta"), ("solver", "tol"), ("example32", "ratio"),
                     ("converge", "ratio"), ("moments", "delta")):
        _positive(cfg, sec, key)
    choices = {
        ("geometry", "mode"): [m.value for m in Mode],
        ("geometry", "split"): ["dirichlet", "neumann", "left_face"],
        ("kernel", "family"): [f.value for f in Family],
        ("solver", "preconditioner"): ["none", "jacobi"],
        ("decomposition", "bc"): [b.value for b in BoundaryCondition],
        ("example32", "bc"): [b.value for b in BoundaryCondition],
        ("input", "source"): ["analytic", "file"],
        ("input", "lift"): ["average", "difference", "weighted"],
        ("input", "weight"): sorted(analytic.WEIGHTS),
        ("converge", "operator"): ["laplacian", "curlcurl"],
        ("converge", "quadrature"): ["spherical", "grid"],
    }
    for (sec, key), allowed in choices.items():
        if cfg[sec][key] not in allowed:
            raise ConfigError(f"{sec}.{key}: {cfg[sec][key]!r} is not one of {allowed}")
    nb = len(cfg["geometry"]["bounds"])
    if nb % 2 or nb // 2 != Mode(cfg["geometry"]["mode"]).dim:
        raise ConfigError(f"geometry.bounds: need {2 * Mode(cfg['geometry']['mode']).dim} numbers, got {nb}")
    if command == "converge":
        c = cfg["converge"]
        names = analytic.SCALARS if c["operator"] == "laplacian" else analytic.VECTORS
        if c["field"] not in names:
            raise ConfigError(f"converge.field: {c['field']!r} is not one of {sorted(names)}")
        if c["box"] and len(c["box"]) != 6:
            raise ConfigError("converge.box: need 6 numbers")
    if command == "decompose" and cfg["input"]["source"] == "file" and not cfg["input"]["file"]:
        raise ConfigError("input.file: required when input.source = file")


# -- output helpers -----------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def versions() -> dict:
    return {"nlvc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


@dataclass
class Outcome:
    checks: list
    diagnostics: dict


def emit_report(out: Path, command: str, cfg: dict | None, outcome: Outcome | None,
                error: str | None = None) -> dict:
    checks = [c.as_dict() for c in outcome.checks] if outcome else []
    status = "error" if error else ("pass" if all(c["passed"] for c in checks) else "fail")
    summary = {
        "command": command,
        "status": status,
        "error": error,
        "checks": checks,
        "diagnostics": outcome.diagnostics if outcome else {},
        "config": cfg,
        "versions": versions(),
    }
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_clean(summary), indent=2, sort_keys=True, allow_nan=False)
    (out / "summary.json").write_text(text + "\n")
    return summary


# -- shared builders ----------------------------------------------------------

def _bounds(flat):
    return [(flat[k], flat[k + 1]) for k in range(0, len(flat), 2)]


def _solver(cfg) -> SolverConfig:
    s = cfg["solver"]
    return SolverConfig(s["tol"], s["maxiter"], s["preconditioner"], s["deflation_probes"])


def _decomp_cfg(cfg, bc=None) -> DecompositionConfig:
    d = cfg["decomposition"]
    return DecompositionConfig(bc or d["bc"], _solver(cfg), d["compat_rtol"], d["allow_incompatible"],
                               d["null_rtol"])


def _kernel(cfg, mode: Mode) -> KernelSpec:
    k = cfg["kernel"]
    return KernelSpec(k["family"], k["delta"], k["beta"], mode.dim)


def _operators(cfg) -> NonlocalOperators:
    g = cfg["geometry"]
    mode = Mode(g["mode"])
    kern = _kernel(cfg, mode)
    if cfg["input"]["nodes"]:
        nodes = read_nodes_csv(cfg["input"]["nodes"], mode)
    else:
        nodes = build_nodes(_bounds(g["bounds"]), g["h"], kern.delta, mode, g["split"])
    return NonlocalOperators(nodes, neighbor_pairs(nodes, kern.delta), kern)


def _chk(name, value, tol, note=""):
    return identities._check(name, value, tol, note)


# -- commands -----------------------------------------------------------------

def cmd_identities(cfg, out: Path) -> Outcome:
    ops = _operators(cfg)
    tol = cfg["tolerances"]
    checks = (identities.identity_checks(ops, cfg["identities"]["seed"], tol)
              + identities.translation_checks(ops, tol))
    return Outcome(checks, {"nodes": len(ops.nodes), "pairs": len(ops.pairs)})


def example32_level(h: float, ratio: float, bc: str, restrict: bool, solver: SolverConfig) -> dict:
    """One resolution of the planar example; errors are V-weighted over Omega x Omega pairs."""
    delta = ratio * h
    nodes = build_nodes([(0.0, 1.0), (0.0, 1.0)], h, delta, Mode.PLANE)
    pairs = neighbor_pairs(nodes, delta)
    kern = KernelSpec(Family.PLANAR_SCALED, delta, dim=2)
    ops = NonlocalOperators(nodes, pairs, kern)
    phi, w, u = example32_fields(nodes, pairs, kern)
    gphi_true, cw_true = ops.grad(phi), ops.curl_adjoint(w)
    umax = float(np.abs(u).max())
    algebraic = float(np.abs(u - gphi_true - cw_true).max()) / umax

    u_in = restrict_to_omega(u, nodes, pairs) if restrict else u
    res = decompose(ops, u_in, DecompositionConfig(bc, solver))
    mask = ops.omega_pairs()

    def rel(a, b):
        return ops.norm_pairs(a - b, mask) / ops.norm_pairs(b, mask)

    return {
        "h": h, "delta": delta, "nodes": len(nodes), "pairs": len(pairs),
        "algebraic_defect": algebraic,
        "error_gphi": rel(res.gphi, gphi_true),
        "error_cw": rel(res.cw, cw_true),
        "norm_h": ops.norm_pairs(res.h, mask),
        "relative_norm_h": ops.norm_pairs(res.h, mask) / ops.norm_pairs(u_in, mask),
        "reconstruction_defect": res.diagnostics["reconstruction_defect"],
    }


def _monotone(values) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def cmd_example32(cfg, out: Path) -> Outcome:
    e = cfg["example32"]
    tol = cfg["tolerances"]
    levels = sorted(e["levels"], reverse=True)
    rows = [example32_level(h, e["ratio"], e["bc"], e["restrict"], _solver(cfg)) for h in levels]
    cols = ["h", "delta", "error_gphi", "error_cw", "norm_h", "relative_norm_h", "algebraic_defect"]
    with open(out / "example32.csv", "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join("%.17g" % r[c] for c in cols) + "\n")
    checks = [_chk(f"algebraic_h{r['h']:g}", r["algebraic_defect"], tol["algebraic"],
                   "max |u - G phi - C* w| / max |u|") for r in rows]
    checks.append(_chk("reconstruction", max(r["reconstruction_defect"] for r in rows), tol["reconstruction"]))
    if len(rows) > 1:
        for key in ("error_gphi", "error_cw", "norm_h"):
            ok = _monotone([r[key] for r in rows])
            checks.append(identities.Check(f"monotone_{key}", float(not ok), 0.0, ok,
                                           "strict decrease under refinement"))
    return Outcome(checks, {"levels": rows})


def _input_field(cfg, ops: NonlocalOperators) -> np.ndarray:
    inp = cfg["input"]
    nodes, pairs = ops.nodes, ops.pairs
    if inp["source"] == "file":
        u = read_two_point_csv(inp["file"], pairs)
    elif inp["field"] == "translation":
        u = translation_residual_field(nodes, pairs)
    elif inp["field"] == "example32":
        u = example32_fields(nodes, pairs, ops.kernel)[2]
    elif inp["field"] == "random":
        u = np.random.default_rng(inp["seed"]).standard_normal((len(pairs), 3))
    else:
        try:
            fld = analytic.vector(inp["field"])
        except KeyError as exc:
            raise ConfigError(f"input.field: {exc.args[0]}") from None
        if inp["lift"] == "average":
            u = lift_average(fld.value(nodes.positions), pairs)
        elif inp["lift"] == "difference":
            u = lift_difference(fld.value, nodes, pairs)
        else:
            u = lift_weighted(fld.value(nodes.positions), analytic.WEIGHTS[inp["weight"]], nodes, pairs)
    if np.ndim(u) != 2 or np.shape(u)[1] != 3:
        raise ConfigError("input field must be a vector two-point field")
    return restrict_to_omega(u, nodes, pairs) if inp["restrict"] else u


def cmd_decompose(cfg, out: Path) -> Outcome:
    ops = _operators(cfg)
    u = _input_field(cfg, ops)
    res = decompose(ops, u, _decomp_cfg(cfg))
    tol = cfg["tolerances"]
    write_nodes_csv(out / "nodes.csv", ops.nodes)
    for name, f in (("u", u), ("gphi", res.gphi), ("cw", res.cw), ("h", res.h)):
        write_two_point_csv(out / f"{name}.csv", f, ops.pairs)
    write_point_csv(out / "phi.csv", res.phi)
    write_point_csv(out / "w.csv", res.w)
    d = res.diagnostics
    unorm = max(d["norm_u"], 1e-300)
    scale = d["norm_gphi"] * d["norm_cw"]
    checks = [
        _chk("reconstruction", d["reconstruction_defect"] / max(float(np.abs(u).max()), 1e-300),
             tol["reconstruction"]),
        _chk("orthogonality", abs(d["pair_gphi_cw"]) / scale if scale > 0 else 0.0, tol["orthogonality"],
             "|<G phi, C* w>| / (|G phi| |C* w|)"),
    ]
    diag = {**res.summary(), "relative_norm_h": d["norm_h"] / unorm,
            "nodes": len(ops.nodes), "pairs": len(ops.pairs)}
    return Outcome(checks, diag)


def cmd_converge(cfg, out: Path) -> Outcome:
    c = cfg["converge"]
    box = _bounds(c["box"]) if c["box"] else None
    if c["operator"] == "laplacian":
        fld = analytic.scalar(c["field"])
        study = convergence.laplacian_limit_study(fld, c["deltas"], c["ratio"], box or ((0.0, math.pi),) * 3,
                                                  c["quadrature"], floor=c["floor"])
    else:
        fld = analytic.vector(c["field"])
        study = convergence.curlcurl_limit_study(fld, c["deltas"], c["ratio"], box or ((0.0, 1.0),) * 3,
                                                 c["quadrature"], floor=c["floor"])
    convergence.write_study_csv(out / "convergence.csv", study)
    rows = study.rows
    checks = []
    if c["operator"] == "laplacian":
        if study.below_floor:
            checks.append(identities.Check("slope", float(rows[-1].error), c["floor"], True,
                                           "all errors below floor; slope not meaningful"))
        else:
            dev = abs(study.fitted_slope - c["expected_slope"])
            checks.append(_chk("slope", dev, c["slope_tol"], f"fitted slope {study.fitted_slope:.6g}"))
    else:
        errs = [r.error for r in rows]
        ok = study.below_floor or _monotone(errs)
        checks.append(identities.Check("limit_convergence", float(errs[-1]), c["floor"], ok,
                                       "errors decrease or stay below floor"))
        lap = analytic.vector(c["field"]).laplacian
        mid = np.array([[0.5 * (a + b) for a, b in (box or ((0.0, 1.0),) * 3)]])
        lap_scale = float(np.abs(lap(mid)).max())
        if lap_scale > 0:
            dev = rows[-1].extra["defect_vs_minus_laplacian"] / lap_scale
            checks.append(_chk("curlcurl_defect", dev, c["defect_rtol"],
                               "kappa CC* w - curl curl w against -Laplacian w"))
    diag = {
        "meta": study.meta,
        "fitted_slope": study.fitted_slope,
        "below_floor": study.below_floor,
        "rows": [{"delta": r.delta, "h": r.h, "error": r.error, "scaled_error": r.scaled_error,
                  "slope_running": r.slope_running, **r.extra} for r in rows],
    }
    return Outcome(checks, diag)


def cmd_moments(cfg, out: Path) -> Outcome:
    m = cfg["moments"]
    table = convergence.ball_moments(m["delta"], m["resolution"])
    convergence.write_moments_csv(out / "moments.csv", table)
    checks = [_chk(f"ratio {k}", abs(r - 1.0), m["ratio_tol"]) for k, r in table.ratios.items()]
    even_scale = max(abs(v) for v in table.analytic.values())
    odd = max(abs(v) for v in table.odd.values()) / even_scale
    checks.append(_chk("odd_moments", odd, m["odd_tol"], "largest odd moment over the even scale"))
    p = convergence.homogeneity_exponent(m["homogeneity_deltas"], m["resolution"])
    checks.append(_chk("homogeneity_exponent", abs(p - 5.0), m["exponent_tol"], f"fitted exponent {p:.12g}"))
    return Outcome(checks, {"computed": table.computed, "analytic": table.analytic, "ratios": table.ratios,
                            "exponent": p})


HANDLERS = {
    "identities": cmd_identities,
    "example32": cmd_example32,
    "decompose": cmd_decompose,
    "converge": cmd_converge,
    "moments": cmd_moments,
}


def run(command: str, config_path, out_dir="nlvc_out", strict: bool = False, input_file=None) -> int:
    out = Path(out_dir)
    cfg = None
    try:
        if command not in HANDLERS:
            raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
        cfg = load_config(config_path, command, strict)
        if input_file is not None:
            cfg["input"]["source"] = "file"
            cfg["input"]["file"] = str(input_file)
        for key in ("file", "nodes"):
            path = cfg["input"][key]
            if command == "decompose" and path and not Path(path).is_file():
                raise ConfigError(f"input.{key}: file not found: {path}")
        out.mkdir(parents=True, exist_ok=True)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            outcome = HANDLERS[command](cfg, out)
    except Exception as exc:  # noqa: BLE001 - every failure maps to exit 1
        msg = f"{type(exc).__name__}: {exc}"
        print(f"nlvc: error: {msg}", file=sys.stderr)
        try:
            emit_report(out, command, cfg, None, msg)
        except OSError:
            pass
        return 1
    summary = emit_report(out, command, cfg, outcome)
    for c in summary["checks"]:
        logger.info("%-28s %s  value=%.3e tol=%.1e", c["name"], "pass" if c["passed"] else "FAIL",
                    c["value"], c["tolerance"])
    return 0 if summary["status"] == "pass" else 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="nlvc", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI config file")
    ap.add_argument("--out", default="nlvc_out", help="output directory")
    ap.add_argument("--strict", action="store_true", help="reject unknown config keys")
    ap.add_argument("--input", default=None, help="two-point field CSV for decompose")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    return run(args.command, args.config, args.out, args.strict, args.input)


if __name__ == "__main__":
    sys.exit(main())
