import math

import numpy as np
import pytest

from chow_balance.embedded_variety import LatticePolytope, MonomialEmbedding, PointConfiguration, build_grid
from chow_balance.moment_maps import (Integrator, character_F, character_F_sigma, functional_G,
                                      grad_G, hess_G, m0, m0_sigma, m_full, mu0, mu0_sigma, mu_full,
                                      sigma_matrix)
from chow_balance.solvers import gram_sigma
from chow_balance.torus_action import basis_t, build_torus, torus_from_matrix

from conftest import veronese


def test_pointwise_moment_maps(rng):
    z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    P = m_full(z)
    assert np.allclose(P @ P, P) and np.trace(P).real == pytest.approx(1.0)
    assert abs(np.trace(m0(z))) < 1e-14
    assert np.allclose(m_full(2j * z), P)
    s = np.diag([2.0, 1.0, 0.5])
    sz = s @ z
    assert np.allclose(m0_sigma(s, z) + np.eye(3) * np.vdot(sz, sz).real / np.vdot(z, z).real / 3,
                       np.outer(sz, sz.conj()) / np.vdot(z, z).real)
    with pytest.raises(ValueError, match="zero vector"):
        m_full(np.zeros(2))


def test_balanced_veronese(p1o2_balanced, grid1):
    res = mu0(p1o2_balanced, None, grid1, estimate_error=True)
    assert np.linalg.norm(res.value) < 1e-5
    assert res.error < 1e-8
    M = gram_sigma(p1o2_balanced, None, grid1, np.eye(3))
    assert np.allclose(M, 2 / 3 * np.eye(3), atol=1e-5)


def test_unbalanced_veronese_has_moment(grid1):
    res = mu0(veronese(2, [1, 1, 1]), None, grid1)
    assert np.linalg.norm(res.value) > 1e-2
    assert np.allclose(res.value, np.diag(np.diag(res.value)), atol=1e-12)


def test_point_gram_forms():
    pair = PointConfiguration([[1, 0], [0, 1]])
    assert np.allclose(mu_full(pair).value, np.eye(2))
    three = PointConfiguration([[1, 0], [0, 1], [0, 1]])
    td = build_torus([1, -1])
    assert np.allclose(mu_full(three).value, np.diag([1, 2]))
    # G(a) = e^{2a} + 2 e^{-2a}
    for a in (-0.4, 0.0, 0.3):
        G = functional_G(three, None, None, [a], td)
        assert G == pytest.approx(math.exp(2 * a) + 2 * math.exp(-2 * a), rel=1e-14)
        assert grad_G(three, None, None, [a], td)[0] == pytest.approx(2 * math.exp(2 * a) - 4 * math.exp(-2 * a))
        assert hess_G(three, None, None, [a], td)[0, 0] == pytest.approx(4 * math.exp(2 * a) + 8 * math.exp(-2 * a))


def _square():
    return MonomialEmbedding.from_polytope(LatticePolytope([[0, 0], [1, 0], [0, 1], [1, 1]]))


def test_G_trace_identity(rng):
    emb = _square()
    grid = build_grid(2, 24, 12)
    td = torus_from_matrix(np.eye(2, dtype=int), emb.alphas)
    a = rng.standard_normal(2) * 0.4
    sigma = sigma_matrix(a, td)
    Ms = gram_sigma(emb, None, grid, sigma)
    assert np.trace(Ms).real == pytest.approx(functional_G(emb, None, grid, a, td), abs=1e-12)


def test_gradient_and_hessian_finite_differences(rng):
    emb = _square()
    grid = build_grid(2, 24, 12)
    td = torus_from_matrix(np.eye(2, dtype=int), emb.alphas)
    it = Integrator(emb, grid)
    g = np.diag(1 + 0.3 * rng.random(4)).astype(complex)
    h = 1e-5
    for _ in range(3):
        a = rng.standard_normal(2) * 0.5
        gr = grad_G(it, g, None, a, td)
        H = hess_G(it, g, None, a, td)
        fd = np.array([(functional_G(it, g, None, a + h * e, td) - functional_G(it, g, None, a - h * e, td)) / (2 * h)
                       for e in np.eye(2)])
        fdH = np.array([(grad_G(it, g, None, a + h * e, td) - grad_G(it, g, None, a - h * e, td)) / (2 * h)
                        for e in np.eye(2)])
        assert np.allclose(gr, fd, rtol=1e-6, atol=1e-9)
        assert np.allclose(H, fdH, rtol=1e-6, atol=1e-8)
        assert np.linalg.eigvalsh(H).min() >= -1e-10
    assert it.evaluations == 1


def test_characters(grid1):
    emb = veronese(2, [1, 1, 1])
    td = torus_from_matrix([[1]], emb.alphas)
    xi = basis_t(td).elements[0]
    F = character_F(emb, None, grid1, xi, td)
    assert F == pytest.approx(np.vdot(xi, mu0(emb, None, grid1).value).real)
    assert character_F_sigma(emb, None, grid1, np.eye(3), xi, td) == pytest.approx(F)
    with pytest.raises(ValueError, match="torus Lie algebra"):
        character_F(emb, None, grid1, np.array([[0, 1], [1, 0]]) * 1.0, build_torus([1, -1]))
    res = mu0_sigma(emb, np.diag([2.0, 1.0, 0.5]), None, grid1, estimate_error=True)
    assert abs(np.trace(res.value)) < 1e-12 and res.error is not None
