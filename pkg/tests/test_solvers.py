import math

import numpy as np
import pytest

from chow_balance.embedded_variety import PointConfiguration, sqrt_binomial
from chow_balance.moment_maps import Integrator, mu0, mu0_sigma
from chow_balance.solvers import (CONVERGED, DIVERGED, SolverOptions, SolveTrace, gram_sigma,
                                  orbit_distance, relative_residual, sigma_residual, solve_optimal_weight,
                                  solve_relative_balanced, solve_sigma_balanced, stabilizer_dimension,
                                  torus_is_maximal, verify_theorem_equivalence)
from chow_balance.torus_action import build_torus, torus_from_matrix

from conftest import veronese


def test_options_validation():
    with pytest.raises(ValueError, match="tolerance"):
        SolverOptions(tol=0)
    with pytest.raises(ValueError, match="damping"):
        SolverOptions(damping=1.5)


def test_optimal_weight_symmetric_pair():
    a, sigma, tr = solve_optimal_weight(PointConfiguration([[1, 0], [0, 1]]), build_torus([1, -1]))
    assert tr.converged and abs(a[0]) < 1e-12 and np.allclose(sigma, np.eye(2))


def test_optimal_weight_three_points(three_points):
    var, td = three_points
    a, sigma, tr = solve_optimal_weight(var, td, opts=SolverOptions(tol=1e-12))
    assert a[0] == pytest.approx(math.log(2) / 4, abs=1e-10)
    assert np.allclose(np.diag(sigma).real, [2**0.25, 2**-0.25])
    values = [r["value"] for r in tr.records]
    assert all(b <= a_ for a_, b in zip(values, values[1:]))


def test_optimal_weight_diverges_when_destabilized():
    var = PointConfiguration([[1, 0]] * 3)
    a, _, tr = solve_optimal_weight(var, build_torus([1, -1]))
    assert tr.status == DIVERGED
    # G = d e^{2a}: the escape ray points to a -> -inf
    assert tr.ray[0] < 0
    assert "destabilized" in tr.message


def test_optimal_weight_unique_from_random_starts(rng):
    var = PointConfiguration([[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1], [0, 0, 1], [0, 0, 1]])
    td = build_torus([[0, 0], [1, 0], [0, 1]])
    opts = SolverOptions(tol=1e-12)
    a1, _, t1 = solve_optimal_weight(var, td, opts=opts, a0=rng.standard_normal(2))
    a2, _, t2 = solve_optimal_weight(var, td, opts=opts, a0=3 * rng.standard_normal(2))
    assert t1.converged and t2.converged
    assert np.linalg.norm(td.generator(a1) - td.generator(a2)) < 1e-6


def test_gram_sigma_degenerate(coincident):
    var, _ = coincident
    with pytest.raises(np.linalg.LinAlgError, match="insufficient quadrature or degenerate embedding"):
        gram_sigma(var, None, None, np.eye(3))


def test_sigma_balanced_fixed_point(three_points):
    var, td = three_points
    sigma = np.diag([2**0.25, 2**-0.25])
    M = gram_sigma(var, None, None, sigma)
    assert np.allclose(M, math.sqrt(2) * np.eye(2))
    g, tr = solve_sigma_balanced(var, sigma, opts=SolverOptions(tol=1e-10), td=td)
    assert tr.converged and len(tr.records) == 1 and np.allclose(g, np.eye(2))


def test_sigma_balanced_recovers_veronese(grid1):
    var = veronese(2, [1, 1, 1])
    td = build_torus([0, 0, 0])
    g, tr = solve_sigma_balanced(var, np.eye(3), grid1, SolverOptions(tol=1e-9), td=td)
    assert tr.converged and len(tr.records) <= 200
    c = np.abs(np.diag(g)) * var.coefficients
    assert np.allclose(c / c[0], sqrt_binomial(2), atol=1e-4)
    # fixed-point consistency with an independent evaluation
    res = mu0_sigma(var, np.eye(3), g, grid1)
    assert np.linalg.norm(res.value) / res.mass < 2e-9


def test_residuals_are_projective(grid1, rng):
    var = veronese(2, [1, 2, 1])
    it = Integrator(var, grid1)
    td = torus_from_matrix([[1]], var.alphas)
    g = np.diag(1 + rng.random(3)).astype(complex)
    sigma = np.diag([1.2, 1.0, 0.8])
    assert relative_residual(it, g, td) == pytest.approx(relative_residual(it, 3.7j * g, td), rel=1e-12)
    assert sigma_residual(it, g, sigma) == pytest.approx(sigma_residual(it, 0.2 * g, sigma), rel=1e-12)


def test_relative_balanced_rank_zero():
    # no torus: relative balancing is plain balancing and mu0 must become zero
    var = PointConfiguration([[1, 0], [0, 1], [1, 1]])
    td = build_torus([0, 0])
    g, tr = solve_relative_balanced(var, td, opts=SolverOptions(tol=1e-10))
    assert tr.converged
    res = mu0(var, g)
    assert np.abs(res.value[0, 1]) < 1e-8
    values = [r["value"] for r in tr.records]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_relative_balanced_at_balanced_input(p1o2_balanced, grid1):
    td = torus_from_matrix([[1]], p1o2_balanced.alphas)
    _, tr = solve_relative_balanced(p1o2_balanced, td, grid1)
    assert tr.converged and len(tr.records) == 1


def test_equivalence_three_points(three_points):
    var, td = three_points
    rep = verify_theorem_equivalence(var, td, opts=SolverOptions(tol=1e-10))
    assert rep["success"] and rep["claim"] == "theorem"
    assert rep["sigma_residual_at_relative_solution"] < 1e-8
    assert rep["relative_residual_at_sigma_solution"] < 1e-8


@pytest.mark.parametrize("k", [2, 3])
def test_equivalence_veronese_same_orbit(k, grid1):
    var = veronese(k, np.ones(k + 1))
    td = torus_from_matrix([[1]], var.alphas)
    rep = verify_theorem_equivalence(var, td, grid1, SolverOptions(tol=1e-9))
    assert rep["success"]
    assert rep["orbit_distance"] < 1e-5
    assert rep["t_sigma_distance"] < 1e-6


def test_equivalence_destabilized(coincident):
    var, td = coincident
    rep = verify_theorem_equivalence(var, td)
    assert rep["status"] == "relatively unstable"
    assert rep["relative"]["status"] == DIVERGED and rep["sigma"]["status"] == DIVERGED
    assert rep["consistent"] and not rep["success"]


def test_sigma_solver_rejects_non_invariant():
    var = PointConfiguration([[1, 0], [0, 1], [1, 1]])
    with pytest.raises(RuntimeError, match="not invariant"):
        solve_sigma_balanced(var, np.eye(2), td=build_torus([1, -1]))


def test_orbit_distance_ignores_torus(rng):
    td = build_torus([0, 1, 1, 2])
    g = np.eye(4, dtype=complex)
    g[1:3, 1:3] += 0.3 * rng.standard_normal((2, 2))
    scale = np.diag(np.exp(0.4 + 0.7 * np.array([0, 1, 1, 2])))
    U = np.diag(np.exp(1j * rng.uniform(0, 6, 4)))
    assert orbit_distance(g, g @ scale @ U, td) < 1e-12
    h = g.copy()
    h[1, 2] += 0.5
    assert orbit_distance(g, h, td) > 1e-2


def test_maximality():
    pts = PointConfiguration([[1, 0], [0, 1], [0, 1]])
    assert stabilizer_dimension(pts.points) == 1
    assert torus_is_maximal(pts, build_torus([1, -1]))
    assert not torus_is_maximal(pts, build_torus([0, 0]))
    square = veronese(2)
    assert torus_is_maximal(square, torus_from_matrix([[1]], square.alphas))


def test_trace_csv(tmp_path):
    tr = SolveTrace()
    tr.add(1.0, 2.0, 0.0)
    tr.add(0.1, 1.5, 0.5)
    tr.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,residual,value,step" and len(lines) == 3
    assert tr.final_residual == 0.1 and not tr.converged


def test_coincident_points_on_p1_are_relatively_balanced():
    # mu0 is diagonal, hence already in t: nothing to balance
    g, tr = solve_relative_balanced(PointConfiguration([[1, 0]] * 3), build_torus([1, -1]))
    assert tr.converged and len(tr.records) == 1


def test_relative_descent_stall_is_not_reported_as_divergence(grid1_small):
    # a tolerance below the quadrature floor stalls after real progress
    var = veronese(3, [1, 1, 1, 1])
    td = torus_from_matrix([[1]], var.alphas)
    _, tr = solve_relative_balanced(var, td, grid1_small, SolverOptions(tol=1e-30))
    assert tr.status != DIVERGED
    assert tr.final_residual < 1e-3 * tr.residuals[0]
