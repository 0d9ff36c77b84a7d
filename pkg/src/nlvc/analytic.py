"""Named analytic test fields with their local derivatives.

All callables take arrays of points with trailing dimension 3.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    name: str
    value: Fn
    laplacian: Fn


@dataclass(frozen=True)
class VectorField:
    name: str
    value: Fn
    laplacian: Fn  # componentwise
    grad_div: Fn

    def curlcurl(self, x: np.ndarray) -> np.ndarray:
        # curl curl w = grad div w - vector Laplacian
        return self.grad_div(x) - self.laplacian(x)


def _stack(*comps):
    return np.stack(np.broadcast_arrays(*comps), axis=-1)


def _zeros(x):
    return np.zeros(x.shape[:-1])


SCALARS: dict[str, ScalarField] = {
    "constant": ScalarField("constant", lambda x: np.ones(x.shape[:-1]), _zeros),
    "quadratic": ScalarField("quadratic", lambda x: np.sum(x ** 2, axis=-1),
                             lambda x: np.full(x.shape[:-1], 6.0)),
    "sin_x1": ScalarField("sin_x1", lambda x: np.sin(x[..., 0]), lambda x: -np.sin(x[..., 0])),
    "x1_squared": ScalarField("x1_squared", lambda x: x[..., 0] ** 2,
                              lambda x: np.full(x.shape[:-1], 2.0)),
}

VECTORS: dict[str, VectorField] = {
    "constant": VectorField("constant", lambda x: _stack(1.0 + _zeros(x), 2.0, 3.0),
                            lambda x: np.zeros(x.shape), lambda x: np.zeros(x.shape)),
    "identity": VectorField("identity", lambda x: np.array(x, dtype=float),
                            lambda x: np.zeros(x.shape), lambda x: np.zeros(x.shape)),
    "rotation": VectorField("rotation", lambda x: _stack(-x[..., 1], x[..., 0], 0.0),
                            lambda x: np.zeros(x.shape), lambda x: np.zeros(x.shape)),
    "harmonic_quadratic": VectorField(
        "harmonic_quadratic",
        lambda x: _stack(x[..., 0] ** 2 - x[..., 1] ** 2, 2 * x[..., 0] * x[..., 1], 0.0),
        lambda x: np.zeros(x.shape),
        lambda x: _stack(4.0 + _zeros(x), 0.0, 0.0)),
    "harmonic_exp": VectorField(
        "harmonic_exp",
        lambda x: _stack(np.exp(x[..., 0]) * np.cos(x[..., 1]), np.exp(x[..., 0]) * np.sin(x[..., 1]), 0.0),
        lambda x: np.zeros(x.shape),
        lambda x: _stack(2 * np.exp(x[..., 0]) * np.cos(x[..., 1]),
                         -2 * np.exp(x[..., 0]) * np.sin(x[..., 1]), 0.0)),
    "x1_squared": VectorField("x1_squared", lambda x: _stack(x[..., 0] ** 2, 0.0, 0.0),
                              lambda x: _stack(2.0 + _zeros(x), 0.0, 0.0),
                              lambda x: _stack(2.0 + _zeros(x), 0.0, 0.0)),
    "example32_w": VectorField("example32_w", lambda x: _stack(0.0 + _zeros(x), x[..., 1] ** 2, 0.0),
                               lambda x: _stack(0.0 + _zeros(x), 2.0, 0.0),
                               lambda x: _stack(0.0 + _zeros(x), 2.0, 0.0)),
}

# interaction weights psi(x - y) for the weighted lift
WEIGHTS: dict[str, Fn] = {
    "one": lambda z: np.ones(z.shape[:-1]),
    "norm": lambda z: np.linalg.norm(z, axis=-1),
    "gaussian": lambda z: np.exp(-np.sum(z ** 2, axis=-1)),
}


def scalar(name: str) -> ScalarField:
    try:
        return SCALARS[name]
    except KeyError:
        raise KeyError(f"unknown scalar field {name!r}; choose from {sorted(SCALARS)}") from None


def vector(name: str) -> VectorField:
    try:
        return VECTORS[name]
    except KeyError:
        raise KeyError(f"unknown vector field {name!r}; choose from {sorted(VECTORS)}") from None
