"""One-point and two-point fields on a node set.

Fields are plain numpy arrays.  One-point fields have one row per node:
shape (N,) for scalars, (N, 3) for vectors.  Two-point fields have one row
per directed pair of a :class:`~nlvc.geometry.PairStructure`: (P,), (P, 3)
or (P, 3, 3) for scalar, vector and matrix rank.
"""

from __future__ import annotations

import csv
from typing import Callable

import numpy as np

from .geometry import Mode, NodeSet, PairStructure
from .kernels import Family, KernelSpec

RANK_COMPONENTS = {0: 1, 1: 3, 2: 9}


def two_point_rank(u: np.ndarray, pairs: PairStructure | None = None) -> int:
    """0, 1 or 2 for scalar, vector or matrix two-point fields."""
    u = np.asarray(u)
    if pairs is not None and len(u) != len(pairs):
        raise ValueError(f"two-point field has {len(u)} entries, expected {len(pairs)}")
    if u.ndim == 1:
        return 0
    if u.shape[1:] == (3,):
        return 1
    if u.shape[1:] == (3, 3):
        return 2
    raise ValueError(f"not a two-point field shape: {u.shape}")


def lift_average(v: np.ndarray, pairs: PairStructure) -> np.ndarray:
    """u(x, y) = (v(x) + v(y)) / 2."""
    v = np.asarray(v, dtype=float)
    if len(v) != pairs.n_nodes:
        raise ValueError("one-point field length does not match the node count")
    return 0.5 * (v[pairs.src] + v[pairs.dst])


def lift_difference(fn: Callable[[np.ndarray], np.ndarray], nodes: NodeSet,
                    pairs: PairStructure) -> np.ndarray:
    """u(x, y) = v(x - y) for a vectorized map ``fn`` on (M, 3) arrays."""
    z = nodes.positions[pairs.src] - nodes.positions[pairs.dst]
    return np.asarray(fn(z), dtype=float)


def lift_weighted(v: np.ndarray, psi: Callable[[np.ndarray], np.ndarray], nodes: NodeSet,
                  pairs: PairStructure) -> np.ndarray:
    """u(x, y) = v(x) psi(x - y)."""
    v = np.asarray(v, dtype=float)
    z = nodes.positions[pairs.src] - nodes.positions[pairs.dst]
    weight = np.broadcast_to(np.asarray(psi(z), dtype=float), (len(pairs),))
    return v[pairs.src] * weight.reshape((-1,) + (1,) * (v.ndim - 1))


def translation_residual_field(nodes: NodeSet, pairs: PairStructure) -> np.ndarray:
    """h(x, y) = y - x, which lies in the kernels of both D and C."""
    return nodes.positions[pairs.dst] - nodes.positions[pairs.src]


def restrict_to_omega(u: np.ndarray, nodes: NodeSet, pairs: PairStructure) -> np.ndarray:
    """Zero every entry whose pair leaves Omega x Omega."""
    u = np.array(u, dtype=float)
    inside = nodes.omega[pairs.src] & nodes.omega[pairs.dst]
    u[~inside] = 0.0
    return u


def example32_fields(nodes: NodeSet, pairs: PairStructure, spec: KernelSpec):
    """Planar test pair phi = x1^2, w = (0, x2^2, 0) and the two-point field u.

    ``u`` is evaluated from its closed form, independently of the operators;
    it equals G phi + C* w under the planar scaled kernel.
    """
    if nodes.mode is not Mode.PLANE or spec.family is not Family.PLANAR_SCALED:
        raise ValueError("the planar example needs plane-embedded nodes and the planar_scaled kernel")
    x = nodes.positions
    phi = x[:, 0] ** 2
    w = np.zeros_like(x)
    w[:, 1] = x[:, 1] ** 2

    xs, ys = x[pairs.src], x[pairs.dst]
    r = np.linalg.norm(ys - xs, axis=1)
    scale = spec.delta ** -1.5 / r
    d1sq = xs[:, 0] ** 2 - ys[:, 0] ** 2
    u = np.empty((len(pairs), 3))
    u[:, 0] = -d1sq * (xs[:, 0] - ys[:, 0])
    u[:, 1] = -d1sq * (xs[:, 1] - ys[:, 1])
    u[:, 2] = (ys[:, 0] - xs[:, 0]) * (ys[:, 1] ** 2 - xs[:, 1] ** 2)
    u *= scale[:, None]
    return phi, w, u


def write_two_point_csv(path, u: np.ndarray, pairs: PairStructure) -> None:
    rank = two_point_rank(u, pairs)
    flat = np.asarray(u, dtype=float).reshape(len(pairs), RANK_COMPONENTS[rank])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j"] + [f"c{k + 1}" for k in range(flat.shape[1])])
        for i, j, row in zip(pairs.src, pairs.dst, flat):
            w.writerow([int(i), int(j), *(f"{c:.17g}" for c in row)])


def read_two_point_csv(path, pairs: PairStructure) -> np.ndarray:
    """Read a two-point field; pairs absent from the file are zero."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["i", "j"]:
            raise ValueError(f"{path}: header must start with i,j")
        ncomp = len(header) - 2
        if ncomp not in (1, 3, 9):
            raise ValueError(f"{path}: expected 1, 3 or 9 components, got {ncomp}")
        rows = [r for r in reader if r]
    ij = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64).reshape(-1, 2)
    vals = np.array([[float(c) for c in r[2:]] for r in rows]).reshape(-1, ncomp)
    try:
        idx = pairs.lookup(ij[:, 0], ij[:, 1])
    except KeyError:
        raise ValueError(f"{path}: contains pairs outside the neighbor structure") from None
    out = np.zeros((len(pairs), ncomp))
    out[idx] = vals
    if ncomp == 1:
        return out[:, 0]
    return out if ncomp == 3 else out.reshape(-1, 3, 3)


def write_point_csv(path, f: np.ndarray) -> None:
    f = np.asarray(f, dtype=float)
    flat = f.reshape(len(f), -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"c{k + 1}" for k in range(flat.shape[1])])
        for i, row in enumerate(flat):
            w.writerow([i, *(f"{c:.17g}" for c in row)])


def read_point_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "id" or len(header) not in (2, 4):
            raise ValueError(f"{path}: header must be id,c1 or id,c1,c2,c3")
        rows = sorted((r for r in reader if r), key=lambda r: int(r[0]))
    vals = np.array([[float(c) for c in r[1:]] for r in rows]).reshape(-1, len(header) - 1)
    return vals[:, 0] if vals.shape[1] == 1 else vals
