"""Antisymmetric two-point kernels alpha(x, y) with compact support."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .geometry import BALL_RTOL, NodeSet, PairStructure


class Family(str, enum.Enum):
    PERIDYNAMIC_UNIT = "peridynamic_unit"
    PLANAR_SCALED = "planar_scaled"
    FRACTIONAL = "fractional"
    CONSTANT_GAMMA = "constant_gamma"


@dataclass(frozen=True)
class KernelSpec:
    family: Family
    delta: float
    beta: float | None = None
    dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"kernel horizon must be positive, got {self.delta}")
        if self.dim not in (2, 3):
            raise ValueError("kernel dimension must be 2 or 3")
        if self.family is Family.FRACTIONAL:
            if self.beta is None:
                raise ValueError("fractional kernel needs beta")
            if not 0 < self.beta < self.dim:
                raise ValueError(
                    f"fractional exponent beta={self.beta} must satisfy 0 < beta < {self.dim}; "
                    "Sobolev-scale exponents beta = d + 2s make |alpha|^2 non-integrable"
                )
        elif self.beta is not None:
            raise ValueError(f"beta only applies to the fractional family, not {self.family.value}")


def kernel_vectors(spec: KernelSpec, xi: np.ndarray) -> np.ndarray:
    """alpha for bond vectors ``xi = y - x`` of shape (M, 3); zero outside the ball."""
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1)
    if np.any(r == 0):
        raise ValueError("kernel is singular at coincident points")
    inside = r <= spec.delta * (1 + BALL_RTOL)
    fam = spec.family
    if fam in (Family.PERIDYNAMIC_UNIT, Family.CONSTANT_GAMMA):
        scale = 1.0 / r
    elif fam is Family.PLANAR_SCALED:
        scale = spec.delta ** -1.5 / r
    else:
        scale = r ** -(1.0 + spec.beta)
    out = xi * np.where(inside, scale, 0.0)[..., None]
    if fam is Family.PLANAR_SCALED:
        out[..., 2] = 0.0
    return out


def eval_kernel(spec: KernelSpec, x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        raise ValueError("kernel is singular at coincident points")
    return kernel_vectors(spec, (y - x)[None, :])[0]


def kernel_on_pairs(spec: KernelSpec, nodes: NodeSet, pairs: PairStructure) -> np.ndarray:
    """alpha(x_i, x_j) for every directed pair, exactly antisymmetric.

    Values are computed once per unordered pair and negated for the reverse
    direction, so ``a[rev] == -a`` bit for bit.
    """
    lower = pairs.src < pairs.dst
    xi = nodes.positions[pairs.dst[lower]] - nodes.positions[pairs.src[lower]]
    out = np.empty((len(pairs), 3))
    out[lower] = kernel_vectors(spec, xi)
    out[pairs.rev[lower]] = -out[lower]
    return out


def bond_density(spec: KernelSpec, r) -> np.ndarray:
    """Radial weight rho(|xi|) used by the energy seminorm."""
    r = np.asarray(r, dtype=float)
    if spec.family is Family.FRACTIONAL:
        return micromodulus_coefficients(spec).rho(r)
    if spec.family is Family.PLANAR_SCALED:
        return np.full_like(r, spec.delta ** -3.0)
    return np.ones_like(r)


class Micromodulus(NamedTuple):
    rho: Callable[[np.ndarray], np.ndarray]
    f0: Callable[[np.ndarray], np.ndarray]
    tensor: Callable[[np.ndarray], np.ndarray]


def micromodulus_coefficients(spec: KernelSpec) -> Micromodulus:
    """Radial functions rho = F0 = |xi|^-beta and the micromodulus tensor.

    ``tensor(xi)`` returns C(xi) = 2 rho |xi|^-2 xi (x) xi + 2 F0 I for a
    single bond vector or a stack of them.
    """
    if spec.family is not Family.FRACTIONAL:
        raise ValueError(f"micromodulus coefficients need the fractional family, got {spec.family.value}")
    beta = spec.beta

    def rho(r):
        return np.asarray(r, dtype=float) ** -beta

    def tensor(xi):
        xi = np.asarray(xi, dtype=float)
        r = np.linalg.norm(xi, axis=-1)[..., None, None]
        outer = xi[..., :, None] * xi[..., None, :]
        return 2 * rho(r) / r ** 2 * outer + 2 * rho(r) * np.eye(3)

    return Micromodulus(rho, rho, tensor)


def bond_tensor(spec: KernelSpec, xi) -> np.ndarray:
    """alpha (x) alpha - (alpha . alpha) I for bond vectors ``xi``."""
    a = kernel_vectors(spec, np.atleast_2d(xi))
    t = a[:, :, None] * a[:, None, :] - np.einsum("pk,pk->p", a, a)[:, None, None] * np.eye(3)
    return t if np.ndim(xi) > 1 else t[0]


def realized_bond_coefficients(spec: KernelSpec, xi) -> tuple[np.ndarray, np.ndarray, int]:
    """Fit alpha(x)alpha - |alpha|^2 I = rho |xi|^-2 xi(x)xi + sign * F0 I.

    Returns ``(rho, f0, sign)`` as realized by the kernel itself; for the
    fractional family ``rho = f0 = |xi|^(-2 beta)`` and ``sign = -1``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    t = bond_tensor(spec, xi)
    unit = xi / np.linalg.norm(xi, axis=1, keepdims=True)
    # any direction orthogonal to the bond isolates the identity term
    helper = np.where(np.abs(unit[:, :1]) < 0.9, [[1.0, 0, 0]], [[0, 1.0, 0]])
    perp = np.cross(unit, helper)
    perp /= np.linalg.norm(perp, axis=1, keepdims=True)
    iso = np.einsum("pi,pij,pj->p", perp, t, perp)
    rho = np.einsum("pi,pij,pj->p", unit, t, unit) - iso
    signs = np.sign(iso[iso != 0])
    if len(signs) and not np.all(signs == signs[0]):
        raise ArithmeticError("identity term changes sign across bonds")
    sign = int(signs[0]) if len(signs) else 0
    return rho, np.abs(iso), sign


def energy_seminorm(w: np.ndarray, spec: KernelSpec, nodes: NodeSet, pairs: PairStructure) -> float:
    """sqrt of sum_pairs rho(|xi|) |xi_hat . (w_j - w_i)|^2 V_i V_j."""
    w = np.asarray(w, dtype=float)
    if w.shape != (len(nodes), 3):
        raise ValueError("w must be a vector field with one 3-vector per node")
    xi = nodes.positions[pairs.dst] - nodes.positions[pairs.src]
    r = np.linalg.norm(xi, axis=1)
    proj = np.einsum("pk,pk->p", xi / r[:, None], w[pairs.dst] - w[pairs.src])
    weights = nodes.volumes[pairs.src] * nodes.volumes[pairs.dst]
    return float(np.sqrt(np.sum(bond_density(spec, r) * proj ** 2 * weights)))
