import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlvc.fields import translation_residual_field
from nlvc.geometry import Mode, NodeSet, Region, neighbor_pairs
from nlvc.identities import identity_checks, standard_setup, translation_checks
from nlvc.kernels import KernelSpec, eval_kernel
from nlvc.operators import NonlocalOperators
import oracles as orc


def random_ops(n=7, seed=0, family="peridynamic_unit", beta=None, delta=0.9):
    rng = np.random.default_rng(seed)
    pos = rng.random((n, 3))
    vol = rng.uniform(0.5, 1.5, n)
    region = np.where(np.arange(n) < n - 2, Region.OMEGA, Region.GAMMA_D).astype(np.int8)
    nodes = NodeSet(pos, vol, region, Mode.FULL_3D)
    pairs = neighbor_pairs(nodes, delta)
    spec = KernelSpec(family, delta, beta)
    ops = NonlocalOperators(nodes, pairs, spec)
    a = np.zeros((n, n, 3))
    for i in range(n):
        for j in range(n):
            if i != j:
                a[i, j] = eval_kernel(spec, pos[i], pos[j])
    return ops, a, rng


@pytest.fixture(scope="module")
def small():
    return random_ops()


def test_div_dense_oracle(small):
    ops, a, rng = small
    n, p = ops.n, len(ops.pairs)
    om = np.flatnonzero(ops.nodes.omega)
    vol = ops.nodes.volumes
    for rank, fn, shape in ((0, orc.dense_div0, ()), (1, orc.dense_div1, (3,)), (2, orc.dense_div2, (3, 3))):
        psi = rng.standard_normal((p,) + shape)
        expect = fn(orc.to_dense(psi, ops.pairs, n), a, vol, om)
        np.testing.assert_allclose(ops.div(rank, psi), expect, atol=1e-13 * max(1, np.abs(expect).max()))


def test_curl_and_T_dense_oracle(small):
    ops, a, rng = small
    n = ops.n
    u = rng.standard_normal((len(ops.pairs), 3))
    ud = orc.to_dense(u, ops.pairs, n)
    vol = ops.nodes.volumes
    np.testing.assert_allclose(ops.curl(u), orc.dense_curl(ud, a, vol, np.flatnonzero(ops.nodes.omega)), atol=1e-13)
    gam = np.flatnonzero(ops.nodes.gamma)
    np.testing.assert_allclose(ops.interaction_T(u), orc.dense_T(ud, a, vol, gam), atol=1e-13)
    np.testing.assert_allclose(ops.interaction_N(u), -orc.dense_div1(ud, a, vol, gam), atol=1e-13)


def test_adjoint_formulas(small):
    ops, a, rng = small
    s, d = ops.pairs.src, ops.pairs.dst
    x1 = ops.nodes.positions[:, 0]
    np.testing.assert_allclose(ops.adjoint(1, x1), (x1[d] - x1[s])[:, None] * a[s, d])
    v = rng.standard_normal((ops.n, 3))
    np.testing.assert_allclose(ops.adjoint(0, v), np.einsum("pk,pk->p", v[d] - v[s], a[s, d]))
    np.testing.assert_allclose(ops.adjoint(2, v), (v[d] - v[s])[:, :, None] * a[s, d][:, None, :])
    np.testing.assert_array_equal(ops.grad(x1), -ops.adjoint(1, x1))


def test_constant_fields_vanish(small):
    ops, _, _ = small
    assert not ops.adjoint(1, np.full(ops.n, 3.0)).any()
    assert not ops.curl_adjoint(np.tile([1.0, -2, 3], (ops.n, 1))).any()
    assert not ops.laplacian(np.full(ops.n, 2.0)).any()
    assert not ops.curlcurl(np.tile([1.0, -2, 3], (ops.n, 1))).any()


def test_antisymmetric_inputs_vanish(small):
    ops, _, rng = small
    u = rng.standard_normal((len(ops.pairs), 3))
    anti = u - u[ops.pairs.rev]
    assert np.abs(ops.div(1, anti, where="all")).max() < 1e-14
    assert np.abs(ops.curl(anti, where="all")).max() < 1e-14
    assert np.abs(ops.interaction_N(anti)).max() < 1e-14
    assert np.abs(ops.interaction_T(anti)).max() < 1e-14


def test_rank_mismatch(small):
    ops, _, _ = small
    with pytest.raises(ValueError):
        ops.div(1, np.zeros(len(ops.pairs)))
    with pytest.raises(ValueError):
        ops.curl(np.zeros((len(ops.pairs), 3, 3)))
    with pytest.raises(ValueError):
        ops.adjoint(1, np.zeros((ops.n, 3)))
    with pytest.raises(ValueError):
        ops.adjoint(3, np.zeros((ops.n, 3)))


def test_laplacian_closed_form_and_sign(small):
    ops, _, rng = small
    u = rng.standard_normal(ops.n)
    np.testing.assert_allclose(ops.laplacian(u), ops.div(1, ops.adjoint(1, u)), atol=1e-14)
    # -L is positive semidefinite on the full stencil
    assert ops.inner_nodes(-ops.laplacian(u, where="all"), u, where="all") >= 0


def test_curlcurl_compositions(small):
    ops, _, rng = small
    w = rng.standard_normal((ops.n, 3))
    cc = ops.curlcurl(w)
    np.testing.assert_allclose(cc, ops.curl(ops.curl_adjoint(w)), atol=1e-13)
    np.testing.assert_allclose(cc, ops.div(2, ops.grad(w, 2)) - ops.div(0, ops.grad(w, 0)), atol=1e-13)


def test_alpha_parallel_field_in_null_space():
    ops, _, _ = random_ops(n=9, seed=4)
    x = ops.nodes.positions
    assert np.abs(ops.curl_adjoint(x)).max() < 1e-15
    assert np.abs(ops.curlcurl(x, where="all")).max() < 1e-13


@pytest.mark.parametrize("family,beta", [("peridynamic_unit", None), ("fractional", 0.8), ("constant_gamma", None)])
def test_identity_suite_on_random_geometry(family, beta):
    ops, _, _ = random_ops(n=12, seed=7, family=family, beta=beta)
    for c in identity_checks(ops, seed=1) + translation_checks(ops):
        assert c.passed, c


def test_identity_suite_standard():
    ops = standard_setup(5, 2.0)
    for c in identity_checks(ops) + translation_checks(ops):
        assert c.passed, c


def test_translation_field_in_kernels():
    ops = standard_setup(4, 2.0)
    h = translation_residual_field(ops.nodes, ops.pairs)
    assert np.abs(ops.div(1, h, where="all")).max() <= 1e-12
    assert np.abs(ops.curl(h, where="all")).max() <= 1e-12


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, s, t):
    ops, _, rng = random_ops(n=8, seed=seed % 50)
    rng = np.random.default_rng(seed)
    p = len(ops.pairs)
    x, y = rng.standard_normal((2, p, 3))
    for f in (lambda z: ops.div(1, z), ops.curl, ops.interaction_N, ops.interaction_T):
        lhs, rhs = f(s * x + t * y), s * f(x) + t * f(y)
        assert np.allclose(lhs, rhs, rtol=1e-13, atol=1e-13 * (1 + np.abs(f(x)).max() + np.abs(f(y)).max()))


@pytest.mark.parametrize("kind", ["laplacian", "curlcurl"])
def test_assembly_matches_apply(kind):
    ops = standard_setup(4, 2.0)
    rng = np.random.default_rng(0)
    for active in (ops.nodes.omega, np.ones(ops.n, dtype=bool)):
        mat = ops.assemble(kind, active=active)
        wmat = ops.assemble(kind, active=active, weighted=True)
        assert abs(wmat - wmat.T).max() == 0.0
        if kind == "laplacian":
            v = np.zeros(ops.n)
            v[active] = rng.standard_normal(active.sum())
            ref = ops.laplacian(v, where="all")[active]
            got = mat @ v[active]
        else:
            v = np.zeros((ops.n, 3))
            v[active] = rng.standard_normal((active.sum(), 3))
            ref = ops.curlcurl(v, where="all")[active].ravel()
            got = mat @ v[active].ravel()
        np.testing.assert_allclose(got, ref, atol=1e-14 * np.abs(ref).max() * 10)
        # L = D D* is negative semidefinite, C C* positive semidefinite
        eig = np.linalg.eigvalsh(wmat.toarray())
        sign = -1.0 if kind == "laplacian" else 1.0
        assert (sign * eig).min() > -1e-10 * abs(wmat).max()


def test_laplacian_row_sums_zero_on_full_stencil():
    ops = standard_setup(4, 2.0)
    mat = ops.assemble("laplacian", active=np.ones(ops.n, dtype=bool))
    assert np.abs(mat @ np.ones(ops.n)).max() < 1e-12 * abs(mat).max()


def test_assembly_errors():
    ops = standard_setup(3, 1.0)
    with pytest.raises(ValueError):
        ops.assemble("laplacian", active=np.zeros(ops.n, dtype=bool))
    with pytest.raises(ValueError):
        ops.assemble("gradient")
