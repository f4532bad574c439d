import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chow_balance.torus_action import (basis_g_T, basis_g_T_perp, basis_t, basis_t_tilde, build_torus,
                                       check_orbit_point, extremal_vector, is_block_scalar,
                                       is_hermitian, pairing, project, random_block_element,
                                       rationality_check, subspace_equal, torus_from_matrix,
                                       trace_free, twist_t, twisted_t_tilde)


def random_hermitian(D, rng):
    A = rng.standard_normal((D, D)) + 1j * rng.standard_normal((D, D))
    return A + A.conj().T


def test_pairing_real_and_symmetric(rng):
    X, Y = random_hermitian(3, rng), random_hermitian(3, rng)
    assert isinstance(pairing(X, Y), float)
    assert pairing(X, Y) == pytest.approx(pairing(Y, X))
    assert pairing(X, X) == pytest.approx(np.linalg.norm(X) ** 2)
    assert is_hermitian(X) and not is_hermitian(X + 1j * np.eye(3))
    assert abs(np.trace(trace_free(X))) < 1e-14


def test_block_structure():
    td = build_torus([0, 1, 1, 2])
    assert td.blocks == ((0,), (1, 2), (3,))
    assert td.rank == 1 and td.dim == 4
    assert np.allclose(td.centered, [[-1, 0, 0, 1]])
    # the rank-1 subtorus (1, 1) acting on the square's monomials
    td2 = torus_from_matrix([[1, 1]], [[0, 0], [0, 1], [1, 0], [1, 1]])
    assert td2.block_sizes == [1, 2, 1]


@pytest.mark.parametrize("weights,dims", [
    ([1, -1], (1, 2, 1, 0)),
    ([0, 1, 1, 2], (1, 2, 5, 4)),
    ([[0, 0], [1, 0], [0, 1]], (2, 3, 2, 0)),
    ([0, 0, 0], (0, 1, 8, 8)),
])
def test_subalgebra_dimensions(weights, dims):
    td = build_torus(weights)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        got = (basis_t(td).dim, basis_t_tilde(td).dim, basis_g_T(td).dim, basis_g_T_perp(td).dim)
    assert got == dims
    for B in (basis_t_tilde(td), basis_g_T(td)):
        assert np.allclose(B.gram(), np.eye(B.dim), atol=1e-12)


def test_trivial_torus_warns():
    with pytest.warns(UserWarning, match="trivially"):
        basis_t(build_torus([3, 3]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_projections_decompose_block_hermitian(seed):
    rng = np.random.default_rng(seed)
    td = build_torus([0, 1, 1, 2, 2])
    X = project(random_hermitian(5, rng), basis_g_T(td)) + rng.standard_normal() * np.eye(5)
    a = project(X, basis_t_tilde(td))
    b = project(X, basis_g_T_perp(td))
    assert np.allclose(a + b, X, atol=1e-12)
    assert abs(pairing(a, b)) < 1e-10
    assert np.allclose(project(a, basis_t_tilde(td)), a, atol=1e-12)


def test_extremal_vector_is_in_t(rng):
    td = build_torus([1, -1, 0])
    mu = trace_free(random_hermitian(3, rng))
    ev = extremal_vector(mu, td)
    assert np.allclose(ev, np.diag(np.diag(ev)))
    assert abs(np.trace(ev)) < 1e-12


def test_twisting():
    td = build_torus([0, 1, 1, 2])
    with pytest.raises(ValueError, match="T\\^c"):
        twist_t(np.diag([1, 2, 3, 4]), td)
    assert is_block_scalar(np.diag([1, 2, 2, 5]), td)
    same, dist = subspace_equal(twisted_t_tilde(np.eye(4), td), basis_t_tilde(td))
    assert same and dist < 1e-12
    # two blocks: affine functions of the weight span every block-scalar diagonal
    td2 = build_torus([1, -1])
    same, dist = subspace_equal(twisted_t_tilde(np.diag([2.0, 0.5]), td2), basis_t_tilde(td2), 1e-12)
    assert same
    # three collinear weights: a non-scalar twist leaves the affine functions
    same, dist = subspace_equal(twisted_t_tilde(np.diag([2.0, 1, 1, 0.5]), td), basis_t_tilde(td), 1e-6)
    assert not same and dist > 1e-3


def test_random_block_element_stays_in_blocks(rng):
    td = build_torus([0, 1, 1, 2])
    g = random_block_element(td, rng, basis=basis_g_T_perp(td))
    check_orbit_point(g, td, tol=1e-12)
    with pytest.raises(ValueError, match="outside"):
        check_orbit_point(np.ones((4, 4)), td)
    with pytest.raises(ValueError, match="singular"):
        check_orbit_point(np.diag([1, 0, 1, 1]), td)


def test_rationality_frame():
    td = build_torus([1, -1])
    # block order follows the sorted weights: (-1) first, then (1)
    assert rationality_check(np.diag([2.0, 4.0]), td, 12) == [Fraction(4), Fraction(2)]
    assert rationality_check(np.diag([0.5, 1 / 3]), td, 12) == [Fraction(1, 3), Fraction(1, 2)]
    assert rationality_check(np.diag([0.5, 1 / 3]), td, 5) is None
    assert rationality_check(np.diag([np.sqrt(2), 1.0]), td, 12) is None
    with pytest.raises(ValueError, match="extended torus"):
        rationality_check(np.array([[1, 1], [1, 1]], dtype=complex), td, 12)
