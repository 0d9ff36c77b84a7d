"""Particle discretization of a box domain and its interaction layer.

Nodes sit at cell centers of a uniform grid; each carries the full cell
volume as its quadrature weight.  The interaction layer (Gamma) is the set of
exterior cells whose centers lie within the horizon of some interior node.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

# closed-ball tie rule: distances within this relative slack of delta count as inside
BALL_RTOL = 1e-12


class Region(enum.IntEnum):
    OMEGA = 0
    GAMMA_D = 1
    GAMMA_N = 2
    EXTERIOR = 3  # not yet classified

    @property
    def label(self) -> str:
        return _REGION_LABELS[self]


_REGION_LABELS = {
    Region.OMEGA: "omega",
    Region.GAMMA_D: "gamma_d",
    Region.GAMMA_N: "gamma_n",
    Region.EXTERIOR: "exterior",
}
_LABEL_REGIONS = {v: k for k, v in _REGION_LABELS.items()}


class Mode(str, enum.Enum):
    FULL_3D = "full3d"
    PLANE = "plane"

    @property
    def dim(self) -> int:
        return 3 if self is Mode.FULL_3D else 2


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi) or len(self.lo) not in (2, 3):
            raise ValueError("box bounds must be 2-D or 3-D with matching lengths")
        for a, b in zip(self.lo, self.hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError("box bounds must be finite")
            if not b > a:
                raise ValueError(f"empty box: lo={self.lo}, hi={self.hi}")

    @classmethod
    def from_bounds(cls, bounds) -> "Box":
        """Accept ``[(lo1, hi1), (lo2, hi2), ...]`` or an existing Box."""
        if isinstance(bounds, Box):
            return bounds
        pairs = [tuple(float(v) for v in b) for b in bounds]
        if any(len(p) != 2 for p in pairs):
            raise ValueError("each bound must be a (lo, hi) pair")
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Strict interior membership, evaluated on the box's own axes."""
        pts = np.asarray(points)[:, : self.dim]
        lo = np.asarray(self.lo)
        hi = np.asarray(self.hi)
        return np.all((pts > lo) & (pts < hi), axis=1)


@dataclass(frozen=True, eq=False)
class NodeSet:
    """Quadrature nodes of Omega and Gamma.

    ``positions`` is always (N, 3); in plane mode the third coordinate is 0.
    """

    positions: np.ndarray
    volumes: np.ndarray
    region: np.ndarray
    mode: Mode = Mode.FULL_3D
    box: Box | None = None
    spacing: float | None = None

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=float)
        vol = np.ascontiguousarray(self.volumes, dtype=float)
        reg = np.ascontiguousarray(self.region, dtype=np.int8)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError("positions must have shape (N, 3)")
        if vol.shape != (len(pos),) or reg.shape != (len(pos),):
            raise ValueError("volumes and region must have one entry per node")
        if not np.all(np.isfinite(pos)):
            raise ValueError("node coordinates must be finite")
        if np.any(vol <= 0):
            raise ValueError("quadrature volumes must be strictly positive")
        if self.mode is Mode.PLANE and np.any(pos[:, 2] != 0.0):
            raise ValueError("plane-embedded nodes must have x3 = 0")
        for arr in (pos, vol, reg):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "volumes", vol)
        object.__setattr__(self, "region", reg)

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def omega(self) -> np.ndarray:
        return self.region == Region.OMEGA

    @property
    def gamma(self) -> np.ndarray:
        return (self.region == Region.GAMMA_D) | (self.region == Region.GAMMA_N)

    @property
    def gamma_d(self) -> np.ndarray:
        return self.region == Region.GAMMA_D

    @property
    def gamma_n(self) -> np.ndarray:
        return self.region == Region.GAMMA_N

    @property
    def dim(self) -> int:
        return self.mode.dim


def build_grid(bounds, h: float, mode: Mode | str = Mode.FULL_3D, pad: float = 0.0) -> NodeSet:
    """Cell-centered grid covering ``bounds`` enlarged by ``pad`` on every side.

    Nodes inside the box are labeled OMEGA, the rest EXTERIOR until
    :func:`classify_interaction_domain` sorts them out.
    """
    mode = Mode(mode)
    box = Box.from_bounds(bounds)
    if not (h > 0 and math.isfinite(h)):
        raise ValueError(f"grid spacing must be positive, got {h}")
    if box.dim != mode.dim:
        raise ValueError(f"{mode.value} mode needs a {mode.dim}-D box, got {box.dim}-D")
    if pad < 0:
        raise ValueError("pad must be nonnegative")

    npad = int(math.ceil(pad / h - 1e-9)) if pad > 0 else 0
    axes = []
    for lo, hi in zip(box.lo, box.hi):
        ncell = max(1, int(math.ceil((hi - lo) / h - 1e-9)))
        idx = np.arange(-npad, ncell + npad)
        axes.append(lo + (idx + 0.5) * h)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    if mode is Mode.PLANE:
        pts = np.column_stack([pts, np.zeros(len(pts))])
    volume = h ** mode.dim
    region = np.where(box.contains(pts), Region.OMEGA, Region.EXTERIOR)
    return NodeSet(pts, np.full(len(pts), volume), region, mode, box, h)


SplitRule = Callable[[np.ndarray], np.ndarray]


def _split_mask(split, positions: np.ndarray, box: Box | None) -> np.ndarray:
    if split is None or split == "dirichlet":
        return np.zeros(len(positions), dtype=bool)
    if split == "neumann":
        return np.ones(len(positions), dtype=bool)
    if split == "left_face":
        if box is None:
            raise ValueError("the left_face split needs the box bounds")
        return positions[:, 0] < box.lo[0]
    if callable(split):
        mask = np.asarray(split(positions), dtype=bool)
        if mask.shape != (len(positions),):
            raise ValueError("split predicate must return one bool per node")
        return mask
    raise ValueError(f"unknown Gamma split rule: {split!r}")


def classify_interaction_domain(nodes: NodeSet, delta: float,
                                split: str | SplitRule | None = None) -> NodeSet:
    """Keep exterior nodes within ``delta`` of Omega and label them Gamma.

    ``split`` picks the Neumann part: ``None``/"dirichlet" (all Dirichlet),
    "neumann", "left_face" (cells left of the box), or a predicate on an
    (M, 3) array of positions.
    """
    if not delta > 0:
        raise ValueError(f"horizon must be positive, got {delta}")
    omega = nodes.region == Region.OMEGA
    candidates = ~omega
    if not omega.any():
        raise ValueError("node set has no Omega nodes")

    keep = omega.copy()
    region = nodes.region.copy()
    if candidates.any():
        tree = cKDTree(nodes.positions[omega])
        dist, _ = tree.query(nodes.positions[candidates], k=1)
        near = dist <= delta * (1 + BALL_RTOL)
        cand_idx = np.flatnonzero(candidates)[near]
        keep[cand_idx] = True
        neumann = _split_mask(split, nodes.positions[cand_idx], nodes.box)
        region[cand_idx] = np.where(neumann, Region.GAMMA_N, Region.GAMMA_D)
    if keep.sum() == omega.sum():
        logger.warning("interaction domain is empty (delta=%g is below the node spacing)", delta)

    return NodeSet(nodes.positions[keep], nodes.volumes[keep], region[keep],
                   nodes.mode, nodes.box, nodes.spacing)


def build_nodes(bounds, h: float, delta: float, mode: Mode | str = Mode.FULL_3D,
                split: str | SplitRule | None = None) -> NodeSet:
    """Grid plus classified interaction layer in one call."""
    return classify_interaction_domain(build_grid(bounds, h, mode, pad=delta), delta, split)


@dataclass(frozen=True, eq=False)
class PairStructure:
    """Directed neighbor pairs in CSR layout, sorted by (i, j).

    Pair ``p`` is ``(src[p], dst[p])`` and ``rev[p]`` is the index of the
    reversed pair ``(dst[p], src[p])``.
    """

    n_nodes: int
    indptr: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    rev: np.ndarray
    delta: float

    def __len__(self) -> int:
        return len(self.src)

    @property
    def indices(self) -> np.ndarray:
        return self.dst

    def neighbors(self, i: int) -> np.ndarray:
        return self.dst[self.indptr[i]:self.indptr[i + 1]]

    def lookup(self, i, j) -> np.ndarray:
        """Pair indices of (i, j); raises KeyError for pairs not present."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        keys = self.src.astype(np.int64) * self.n_nodes + self.dst
        want = i * self.n_nodes + j
        pos = np.searchsorted(keys, want)
        pos = np.minimum(pos, len(keys) - 1) if len(keys) else pos
        if len(keys) == 0 or np.any(keys[pos] != want):
            raise KeyError("pair not in the neighbor structure")
        return pos


def neighbor_pairs(nodes: NodeSet | np.ndarray, delta: float) -> PairStructure:
    """Exact closed-ball neighbor query, symmetric and sorted."""
    if not delta > 0:
        raise ValueError(f"horizon must be positive, got {delta}")
    pos = nodes.positions if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=float)
    n = len(pos)
    if n > 1:
        und = cKDTree(pos).query_pairs(delta * (1 + BALL_RTOL), output_type="ndarray")
    else:
        und = np.empty((0, 2), dtype=np.int64)
    src = np.concatenate([und[:, 0], und[:, 1]]).astype(np.int64)
    dst = np.concatenate([und[:, 1], und[:, 0]]).astype(np.int64)
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    keys = src * n + dst
    rev = np.searchsorted(keys, dst * n + src)
    for arr in (indptr, src, dst, rev):
        arr.setflags(write=False)
    return PairStructure(n, indptr, src, dst, rev, float(delta))


def write_nodes_csv(path, nodes: NodeSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x1", "x2", "x3", "volume", "region"])
        for i, (x, v, r) in enumerate(zip(nodes.positions, nodes.volumes, nodes.region)):
            w.writerow([i, *(f"{c:.17g}" for c in x), f"{v:.17g}", Region(r).label])


def read_nodes_csv(path, mode: Mode | str | None = None) -> NodeSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no nodes")
    expected = ["id", "x1", "x2", "x3", "volume", "region"]
    if list(rows[0].keys()) != expected:
        raise ValueError(f"{path}: header must be {','.join(expected)}")
    rows.sort(key=lambda r: int(r["id"]))
    pos = np.array([[float(r["x1"]), float(r["x2"]), float(r["x3"])] for r in rows])
    vol = np.array([float(r["volume"]) for r in rows])
    try:
        reg = np.array([_LABEL_REGIONS[r["region"]] for r in rows], dtype=np.int8)
    except KeyError as exc:
        raise ValueError(f"{path}: unknown region label {exc}") from None
    if mode is None:
        mode = Mode.PLANE if np.all(pos[:, 2] == 0.0) else Mode.FULL_3D
    return NodeSet(pos, vol, reg, Mode(mode))

