"""Nonlocal divergence, gradient, curl and their compositions.

Every operator is a quadrature sum over the directed pairs of a
:class:`~nlvc.geometry.PairStructure`.  One-point outputs are full-length
arrays; entries outside the evaluation set (Omega for D, C, L, CC*; Gamma for
N and T) are zero.  Row sums run over ascending neighbor index, so results do
not depend on evaluation order.

Sign conventions follow the printed formulas: ``adjoint(rank, v)`` is
(v(y) - v(x)) combined with alpha, and the gradient is its negative.  Under
the discrete inner products below, ``grad`` (not ``adjoint``) is the
L2-adjoint of ``div``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .fields import two_point_rank
from .geometry import NodeSet, PairStructure
from .kernels import KernelSpec, kernel_on_pairs

_WHERE = ("omega", "gamma", "all")


class NonlocalOperators:
    """All operators bound to one node set, pair structure and kernel."""

    def __init__(self, nodes: NodeSet, pairs: PairStructure, kernel: KernelSpec):
        if pairs.n_nodes != len(nodes):
            raise ValueError("pair structure was built for a different node set")
        self.nodes = nodes
        self.pairs = pairs
        self.kernel = kernel
        self.alpha = kernel_on_pairs(kernel, nodes, pairs)
        self.alpha.setflags(write=False)
        self._vj = nodes.volumes[pairs.dst]

    # -- helpers ---------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.nodes)

    def _mask(self, where: str) -> np.ndarray:
        if where == "omega":
            return self.nodes.omega
        if where == "gamma":
            return self.nodes.gamma
        if where == "all":
            return np.ones(self.n, dtype=bool)
        raise ValueError(f"where must be one of {_WHERE}")

    def _row_sum(self, contrib: np.ndarray, where: str) -> np.ndarray:
        """sum_j contrib_ij V_j per node, zeroed outside ``where``."""
        w = contrib * self._vj.reshape((-1,) + (1,) * (contrib.ndim - 1))
        src = self.pairs.src
        if w.ndim == 1:
            out = np.bincount(src, weights=w, minlength=self.n)
        else:
            out = np.stack([np.bincount(src, weights=w[:, k], minlength=self.n)
                            for k in range(w.shape[1])], axis=1)
        out[~self._mask(where)] = 0.0
        return out

    def _sym(self, psi: np.ndarray) -> np.ndarray:
        return psi + psi[self.pairs.rev]

    def _check_two_point(self, psi, rank: int) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        got = two_point_rank(psi, self.pairs)
        if got != rank:
            raise ValueError(f"expected a rank-{rank} two-point field, got rank {got}")
        return psi

    def _check_point(self, v, vector: bool) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        shape = (self.n, 3) if vector else (self.n,)
        if v.shape != shape:
            raise ValueError(f"expected a one-point field of shape {shape}, got {v.shape}")
        return v

    # -- divergence and adjoints -----------------------------------------

    def div(self, rank: int, psi: np.ndarray, where: str = "omega") -> np.ndarray:
        """D_rank psi: vector output for ranks 0 and 2, scalar for rank 1."""
        psi = self._check_two_point(psi, rank)
        s = self._sym(psi)
        a = self.alpha
        if rank == 0:
            contrib = s[:, None] * a
        elif rank == 1:
            contrib = np.einsum("pk,pk->p", s, a)
        else:
            contrib = np.einsum("pkl,pl->pk", s, a)
        return self._row_sum(contrib, where)

    def adjoint(self, rank: int, v: np.ndarray) -> np.ndarray:
        """D*_rank v as printed: scalar for rank 0, vector for 1, matrix for 2."""
        v = self._check_point(v, vector=rank != 1)
        d = v[self.pairs.dst] - v[self.pairs.src]
        a = self.alpha
        if rank == 0:
            return np.einsum("pk,pk->p", d, a)
        if rank == 1:
            return d[:, None] * a
        if rank == 2:
            return d[:, :, None] * a[:, None, :]
        raise ValueError(f"rank must be 0, 1 or 2, got {rank}")

    def grad(self, v: np.ndarray, rank: int = 1) -> np.ndarray:
        """G = -D*."""
        return -self.adjoint(rank, v)

    # -- curl --------------------------------------------------------------

    def curl(self, u: np.ndarray, where: str = "omega") -> np.ndarray:
        u = self._check_two_point(u, 1)
        return self._row_sum(np.cross(self.alpha, self._sym(u)), where)

    def curl_adjoint(self, w: np.ndarray) -> np.ndarray:
        w = self._check_point(w, vector=True)
        return np.cross(self.alpha, w[self.pairs.dst] - w[self.pairs.src])

    # -- compositions ------------------------------------------------------

    def laplacian(self, u: np.ndarray, where: str = "omega") -> np.ndarray:
        """L u = D(D* u) = 2 sum_j (u_j - u_i) |alpha|^2 V_j (negative semidefinite)."""
        u = self._check_point(u, vector=False)
        a2 = np.einsum("pk,pk->p", self.alpha, self.alpha)
        return self._row_sum(2.0 * (u[self.pairs.dst] - u[self.pairs.src]) * a2, where)

    def curlcurl(self, w: np.ndarray, where: str = "omega") -> np.ndarray:
        """C C* w = 2 sum_j [(a (x) a) d - |a|^2 d] V_j with d = w_j - w_i."""
        w = self._check_point(w, vector=True)
        d = w[self.pairs.dst] - w[self.pairs.src]
        a = self.alpha
        contrib = np.einsum("pk,pk->p", a, d)[:, None] * a - np.einsum("pk,pk->p", a, a)[:, None] * d
        return self._row_sum(2.0 * contrib, where)

    # -- interaction operators ---------------------------------------------

    def interaction_N(self, nu: np.ndarray) -> np.ndarray:
        """Normal flux on Gamma: -sum_j (nu_ij + nu_ji) . alpha_ij V_j."""
        nu = self._check_two_point(nu, 1)
        return -self._row_sum(np.einsum("pk,pk->p", self._sym(nu), self.alpha), "gamma")

    def interaction_T(self, nu: np.ndarray) -> np.ndarray:
        """Tangential flux on Gamma: sum_j (nu_ij + nu_ji) x alpha_ij V_j."""
        nu = self._check_two_point(nu, 1)
        return self._row_sum(np.cross(self._sym(nu), self.alpha), "gamma")

    # -- inner products ------------------------------------------------------

    def inner_nodes(self, f: np.ndarray, g: np.ndarray, where: str = "omega") -> float:
        """sum_i f_i . g_i V_i over the selected nodes."""
        m = self._mask(where)
        prod = np.asarray(f, dtype=float) * np.asarray(g, dtype=float)
        prod = prod.reshape(self.n, -1).sum(axis=1)
        return float(np.sum(prod[m] * self.nodes.volumes[m]))

    def inner_pairs(self, a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
        """sum_(i,j) a_ij . b_ij V_i V_j over directed pairs (optionally masked)."""
        prod = (np.asarray(a, dtype=float) * np.asarray(b, dtype=float)).reshape(len(self.pairs), -1).sum(axis=1)
        w = self.nodes.volumes[self.pairs.src] * self._vj
        if mask is not None:
            prod, w = prod[mask], w[mask]
        return float(np.sum(prod * w))

    def norm_pairs(self, a: np.ndarray, mask: np.ndarray | None = None) -> float:
        return float(np.sqrt(max(self.inner_pairs(a, a, mask), 0.0)))

    def norm_nodes(self, f: np.ndarray, where: str = "omega") -> float:
        return float(np.sqrt(max(self.inner_nodes(f, f, where), 0.0)))

    def omega_pairs(self) -> np.ndarray:
        om = self.nodes.omega
        return om[self.pairs.src] & om[self.pairs.dst]

    # -- assembly ------------------------------------------------------------

    def assemble(self, kind: str, active: np.ndarray | None = None, weighted: bool = False) -> sp.csr_matrix:
        """Sparse matrix of ``laplacian`` or ``curlcurl`` on the active nodes.

        Columns for inactive nodes are dropped, i.e. their values are taken as
        zero; the full stencil still enters the diagonal.  Curl-curl unknowns
        are stacked node-major (3 i + k).  ``weighted=True`` scales row i by
        V_i, which makes the matrix symmetric for any volumes.
        """
        active = self.nodes.omega if active is None else np.asarray(active, dtype=bool)
        if not active.any():
            raise ValueError("cannot assemble over an empty set of unknowns")
        idx = np.full(self.n, -1, dtype=np.int64)
        idx[active] = np.arange(active.sum())
        src, dst = self.pairs.src, self.pairs.dst
        rows_ok = active[src]
        both = rows_ok & active[dst]
        a = self.alpha
        vi = self.nodes.volumes[src] if weighted else np.ones(len(src))
        coef = 2.0 * self._vj * vi

        if kind == "laplacian":
            a2 = np.einsum("pk,pk->p", a, a) * coef
            diag = -np.bincount(idx[src[rows_ok]], weights=a2[rows_ok], minlength=active.sum())
            r = np.concatenate([idx[src[both]], np.arange(active.sum())])
            c = np.concatenate([idx[dst[both]], np.arange(active.sum())])
            v = np.concatenate([a2[both], diag])
            m = active.sum()
        elif kind == "curlcurl":
            blocks = (a[:, :, None] * a[:, None, :]
                      - np.einsum("pk,pk->p", a, a)[:, None, None] * np.eye(3)) * coef[:, None, None]
            m = 3 * active.sum()
            diag = np.zeros((active.sum(), 3, 3))
            np.add.at(diag, idx[src[rows_ok]], -blocks[rows_ok])
            kk, ll = np.meshgrid(np.arange(3), np.arange(3), indexing="ij")
            r_off = (3 * idx[src[both]])[:, None, None] + kk
            c_off = (3 * idx[dst[both]])[:, None, None] + ll
            base = 3 * np.arange(active.sum())[:, None, None]
            r = np.concatenate([r_off.ravel(), (base + kk).ravel()])
            c = np.concatenate([c_off.ravel(), (base + ll).ravel()])
            v = np.concatenate([blocks[both].ravel(), diag.ravel()])
        else:
            raise ValueError(f"unknown operator kind {kind!r}; expected 'laplacian' or 'curlcurl'")
        mat = sp.coo_matrix((v, (r, c)), shape=(m, m)).tocsr()
        mat.sum_duplicates()
        return mat
