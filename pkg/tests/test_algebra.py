import numpy as np
import pytest

from poisson_stab.algebra import (ALGEBRAS, LieAlgebra, canonical_basis, connector_residual,
                                  get_algebra, is_regular, isotropy, numerical_rank,
                                  transverse_bracket, transverse_connector, z_tangent)
from poisson_stab.errors import NotFound, NotPoisson


@pytest.mark.parametrize("name", sorted(ALGEBRAS))
def test_catalogue_is_lie(name):
    alg = get_algebra(name)
    c = alg.c
    assert np.allclose(c, -np.transpose(c, (1, 0, 2)))


def test_bad_structure_constants_rejected():
    c = np.zeros((3, 3, 3))
    c[0, 1, 2] = 1.0
    with pytest.raises(NotPoisson):
        LieAlgebra("bad", c)


def test_unknown_algebra_suggests():
    with pytest.raises(NotFound) as info:
        get_algebra("so4")
    assert info.value.suggestion == "so3"


def test_so3_coadjoint_direct_summation():
    # with <ad*_xi mu, eta> = -<mu, [xi, eta]>: -<e2*, [e1, e3]> = -<e2*, -e2> = +1
    alg = get_algebra("so3")
    e = np.eye(3)
    assert np.allclose(alg.ad_star(e[0], e[1]), e[2])


def test_ad_star_at_zero_and_on_axis():
    se2 = get_algebra("se2")
    assert not np.any(se2.ad_star([1.0, 2.0, 3.0], np.zeros(3)))
    assert np.allclose(se2.ad_star([0, 0, 1.0], [0, 0, 2.0]), 0)


def test_isotropy_examples():
    td = isotropy(get_algebra("so3"), [0, 0, 1.0])
    assert td.iso_dim == 1 and td.n_mu.shape[1] == 2
    assert np.allclose(np.abs(td.g_mu[:, 0]), [0, 0, 1])
    assert isotropy(get_algebra("se2"), [0, 0, 1.0]).iso_dim == 3
    assert isotropy(get_algebra("se3"), [0, 0, 1.0, 0, 0, 0]).iso_dim == 4
    assert isotropy(get_algebra("se3"), [0, 0, 1.0, 0, 1.0, 0]).iso_dim == 2


def test_regularity_examples():
    assert is_regular(get_algebra("se2"), [1.0, 0, 0])[0]
    assert not is_regular(get_algebra("sl2"), np.zeros(3))[0]
    assert is_regular(get_algebra("so3"), [0, 0, 1.0])[0]


def test_connector_at_zero_and_split():
    se2 = get_algebra("se2")
    td = isotropy(se2, [1.0, 0.0, 0.0])
    assert np.allclose(transverse_connector(td, np.zeros(3), td.g_mu[:, 0]), 0)
    assert np.allclose(z_tangent(td, np.zeros(3)), td.g_mu)
    split = isotropy(se2, [0, 0, 1.0])
    assert split.split
    assert np.allclose(z_tangent(split, [0.01, -0.02, 0.005]), split.g_mu)


def test_sl2_nilpotent_connector():
    alg = get_algebra("sl2")
    mu = np.array([1.0, 0.0, 1.0])
    td = isotropy(alg, mu)
    assert td.iso_dim == 1
    rng = np.random.Generator(np.random.Philox(key=3))
    for _ in range(20):
        nu = td.n_ann @ rng.uniform(-0.05, 0.05, td.iso_dim)
        assert connector_residual(td, nu, td.g_mu[:, 0]) <= 1e-10 * (1 + np.linalg.norm(nu))
    z = z_tangent(td, td.n_ann @ [0.05])
    assert z.shape == (3, 1)
    assert numerical_rank(np.column_stack([z, td.g_mu])) == 2


def test_transverse_bracket_equal_arguments_zero():
    td = isotropy(get_algebra("se2"), [0, 0, 1.0])
    assert transverse_bracket(td, np.zeros(3), [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.0


def test_canonical_basis_pivots():
    b = np.array([[1.0, 0.0], [2.0, 1.0], [3.0, 4.0]])
    cb = canonical_basis(b)
    assert numerical_rank(np.column_stack([b, cb])) == 2
