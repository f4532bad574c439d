"""Solvers for optimal weights, sigma-balanced and relatively balanced points.

* :func:`solve_optimal_weight` -- damped Newton on the convex functional G.
* :func:`solve_sigma_balanced` -- inverse-square-root fixed point iteration
  on the twisted Gram form, block by block.
* :func:`solve_relative_balanced` -- descent of ``|pi_perp mu0|^2`` along
  ``g <- g exp(-eps pi_perp mu0)`` with backtracking.
* :func:`verify_theorem_equivalence` -- runs the last two from the same start
  and evaluates each criterion at the other solver's answer.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .embedded_variety import MonomialEmbedding, PointConfiguration, QuadratureGrid
from .moment_maps import Integrator, functional_G, grad_G, hess_G, sigma_matrix
from .torus_action import (TorusData, basis_g_T_perp, basis_t, basis_t_tilde, project,
                           subspace_equal, trace_free, twisted_t_tilde)

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
DIVERGED = "diverged"

# growth factor of the residual, and of cond(g), that counts as divergence
RESIDUAL_BLOWUP = 1e3
COND_LIMIT = 1e12
# G below this fraction of its starting value: escaping along a ray
G_COLLAPSE = 1e-9
# max |sum a_k D_k| before exp() gets close to overflow
EXPONENT_LIMIT = 300.0
# a stalled descent that kept this fraction of its initial residual made no progress
STALL_PROGRESS = 0.5
# predicted Newton decrease (relative to G) below which G itself is roundoff
ROUNDOFF_DECREASE = 1e-13


@dataclass
class SolverOptions:
    max_iter: int = 500
    tol: float = 1e-8
    damping: float = 0.5
    line_search: bool = True
    refinement: tuple = ()

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")


@dataclass
class SolveTrace:
    records: list = field(default_factory=list)
    status: str = MAX_ITER
    g: np.ndarray | None = None
    a: np.ndarray | None = None
    message: str = ""
    ray: np.ndarray | None = None

    def add(self, residual, value, step):
        self.records.append({"iteration": len(self.records), "residual": float(residual),
                             "value": float(value), "step": float(step)})

    @property
    def residuals(self):
        return [r["residual"] for r in self.records]

    @property
    def final_residual(self):
        return self.records[-1]["residual"] if self.records else math.nan

    @property
    def converged(self):
        return self.status == CONVERGED

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["iteration", "residual", "value", "step"])
            writer.writeheader()
            writer.writerows(self.records)


def _integrator(variety, grid):
    return variety if isinstance(variety, Integrator) else Integrator(variety, grid)


def _normalize_det(g):
    det = abs(np.linalg.det(g))
    return g / det ** (1.0 / g.shape[0])


def solve_optimal_weight(variety, td: TorusData, grid: QuadratureGrid | None = None,
                         opts: SolverOptions | None = None, g=None, a0=None):
    """Minimize G over the positive torus, returning ``(a, sigma, trace)``.

    The residual is ``|grad G| / G``. Directions along which all centered
    weights vanish do not move sigma; the iterate is kept orthogonal to them
    so that the minimizer is a point.
    """
    opts = opts or SolverOptions()
    it = _integrator(variety, grid)
    r = td.rank
    trace = SolveTrace()
    C = td.centered
    if r == 0 or np.allclose(C, 0):
        a = np.zeros(r)
        trace.add(0.0, functional_G(it, g, None, a, td), 0.0)
        trace.status, trace.a, trace.message = CONVERGED, a, "trivial torus"
        return a, sigma_matrix(a, td), trace

    U, s, _ = np.linalg.svd(C, full_matrices=False)
    range_basis = U[:, s > 1e-12 * s[0]]
    a = np.zeros(r) if a0 is None else np.asarray(a0, dtype=float).copy()
    a = range_basis @ (range_basis.T @ a)

    G0 = functional_G(it, g, None, a, td)
    step_norm = 0.0
    for k in range(opts.max_iter + 1):
        Gv = functional_G(it, g, None, a, td)
        grad = grad_G(it, g, None, a, td)
        resid = np.linalg.norm(grad) / Gv
        trace.add(resid, Gv, step_norm)
        if Gv < G_COLLAPSE * G0 or np.abs(td.generator(a)).max() > EXPONENT_LIMIT:
            trace.status = DIVERGED
            trace.ray = a / np.linalg.norm(a)
            trace.message = "G is unbounded below along a ray: torus-destabilized"
            break
        H = hess_G(it, g, None, a, td)
        step = -np.linalg.lstsq(H, grad, rcond=1e-12)[0]
        step = range_basis @ (range_basis.T @ step)
        if resid < opts.tol:
            # one last Newton step only sharpens a quadratically converging iterate
            trial = a + step
            if functional_G(it, g, None, trial, td) <= Gv * (1 + 1e-14):
                a = trial
                Gv = functional_G(it, g, None, a, td)
                resid = np.linalg.norm(grad_G(it, g, None, a, td)) / Gv
                trace.add(resid, Gv, np.linalg.norm(step))
            trace.status = CONVERGED
            break
        if k == opts.max_iter:
            break
        if grad @ step >= 0:
            # Hessian too flat to give a descent direction
            step = -grad / max(np.linalg.eigvalsh(H).max(), 1e-300)
        t = 1.0 if opts.line_search else opts.damping
        if -(grad @ step) < ROUNDOFF_DECREASE * Gv:
            # G cannot resolve the remaining decrease; judge the step by the gradient
            trial = a + t * step
            Gt = functional_G(it, g, None, trial, td)
            if np.linalg.norm(grad_G(it, g, None, trial, td)) >= np.linalg.norm(grad):
                trace.status = MAX_ITER
                trace.message = "stalled at roundoff level"
                break
            assert Gt <= Gv * (1 + 4 * ROUNDOFF_DECREASE)
        else:
            while True:
                trial = a + t * step
                Gt = functional_G(it, g, None, trial, td)
                if Gt < Gv + 1e-4 * t * (grad @ step):
                    break
                t *= 0.5
                if t < 1e-14:
                    break
            if t < 1e-14:
                trace.status = MAX_ITER
                trace.message = "line search failed"
                break
            assert Gt < Gv
        a = trial
        step_norm = t * np.linalg.norm(step)
    trace.a = a
    return a, sigma_matrix(a, td), trace


def gram_sigma(variety, g, grid, sigma, td: TorusData | None = None, check=True) -> np.ndarray:
    """Twisted Gram form ``sigma M(g) sigma``, positive definite and block-diagonal."""
    it = _integrator(variety, grid)
    M, _ = it.gram(g)
    s = np.asarray(sigma, dtype=complex)
    Ms = s @ M @ s.conj().T
    Ms = 0.5 * (Ms + Ms.conj().T)
    if check:
        ev = np.linalg.eigvalsh(Ms)
        if ev.min() <= 1e-13 * max(ev.max(), 1e-300):
            raise np.linalg.LinAlgError("insufficient quadrature or degenerate embedding")
    return Ms


def _off_block(A, td):
    if td is None:
        return 0.0
    return float(np.abs(A[~td.block_mask()]).max(initial=0.0))


def sigma_residual(it, g, sigma) -> float:
    """``|mu0^sigma(g)| / G``; zero exactly at sigma-balanced points."""
    Ms = gram_sigma(it, g, None, sigma, check=False)
    return float(np.linalg.norm(trace_free(Ms)) / np.trace(Ms).real)


def relative_residual(it, g, td: TorusData) -> float:
    """``|mu0(g) - mu_T| / mass``; zero exactly at relatively balanced points."""
    M, mass = it.gram(g)
    mu = trace_free(M)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mu_t = project(mu, basis_t(td))
    return float(np.linalg.norm(mu - mu_t) / mass)


def _block_power(A, td, p):
    """``A^p`` computed block by block from Hermitian eigendecompositions."""
    out = np.zeros_like(A)
    blocks = td.blocks if td is not None else (tuple(range(A.shape[0])),)
    for b in blocks:
        idx = np.ix_(b, b)
        ev, V = np.linalg.eigh(A[idx])
        out[idx] = (V * ev**p) @ V.conj().T
    return out


def solve_sigma_balanced(variety, sigma, grid: QuadratureGrid | None = None,
                         opts: SolverOptions | None = None, g0=None, td: TorusData | None = None):
    """Fixed-point iteration ``z <- (M^sigma / mean)^(-p) z`` with ``p = damping``.

    ``p = 1/2`` is the undamped twisted balancing step; smaller powers move
    along the geodesic towards it. ``p`` is capped at 1/2.
    """
    opts = opts or SolverOptions()
    it = _integrator(variety, grid)
    D = it.variety.dim
    p = min(0.5, opts.damping)
    g = np.eye(D, dtype=complex) if g0 is None else np.array(g0, dtype=complex)
    trace = SolveTrace()
    r0 = None
    for k in range(opts.max_iter + 1):
        M, _ = it.gram(g)
        s = np.asarray(sigma, dtype=complex)
        Ms = s @ M @ s.conj().T
        Ms = 0.5 * (Ms + Ms.conj().T)
        tr = np.trace(Ms).real
        if _off_block(Ms, td) > 1e-8 * tr:
            raise RuntimeError("twisted Gram form is not block-diagonal: "
                               "variety is not invariant under the torus")
        if td is not None:
            Ms = np.where(td.block_mask(), Ms, 0)
        resid = float(np.linalg.norm(trace_free(Ms)) / tr)
        r0 = resid if r0 is None else r0
        trace.add(resid, tr, 0.0 if k == 0 else p)
        if resid < opts.tol:
            trace.status = CONVERGED
            break
        ev = np.linalg.eigvalsh(Ms)
        if ev.min() <= 1e-13 * ev.max():
            trace.status = DIVERGED
            trace.message = "twisted Gram form is degenerate: no balanced point on this orbit"
            break
        if resid > RESIDUAL_BLOWUP * max(r0, opts.tol) or np.linalg.cond(g) > COND_LIMIT:
            trace.status = DIVERGED
            trace.message = "iteration escapes to infinity along the orbit"
            break
        if k == opts.max_iter:
            break
        P = _block_power(Ms / (tr / D), td, -p)
        g = _normalize_det(g @ P.T)
    trace.g = g
    return g, trace


def solve_relative_balanced(variety, td: TorusData, grid: QuadratureGrid | None = None,
                            opts: SolverOptions | None = None, g0=None):
    """Backtracking descent of ``|pi_perp mu0(g)|^2`` inside the block group."""
    opts = opts or SolverOptions()
    it = _integrator(variety, grid)
    D = it.variety.dim
    perp = basis_g_T_perp(td)
    g = np.eye(D, dtype=complex) if g0 is None else np.array(g0, dtype=complex)
    trace = SolveTrace()

    def objective(h):
        M, mass = it.gram(h)
        X = project(trace_free(M), perp) / mass
        return float(np.linalg.norm(X) ** 2), X

    f, X = objective(g)
    eps_max = 4.0 * D
    eps = 0.5 * D
    r0 = None
    step = 0.0
    for k in range(opts.max_iter + 1):
        resid = relative_residual(it, g, td)
        r0 = resid if r0 is None else r0
        trace.add(resid, math.sqrt(f), step)
        if resid < opts.tol:
            trace.status = CONVERGED
            break
        if perp.dim == 0 or f == 0.0:
            trace.status = DIVERGED
            trace.message = "no descent direction inside the block group (not T-invariant?)"
            break
        if resid > RESIDUAL_BLOWUP * max(r0, opts.tol) or np.linalg.cond(g) > COND_LIMIT:
            trace.status = DIVERGED
            trace.message = "descent escapes to infinity along the orbit"
            break
        if k == opts.max_iter:
            break
        if not opts.line_search:
            eps = opts.damping * D
        while True:
            trial = _normalize_det(g @ expm(-eps * X).T)
            f_new, X_new = objective(trial)
            if f_new < f or not opts.line_search:
                break
            eps *= 0.5
            if eps < 1e-12:
                break
        if opts.line_search and eps >= 1e-12:
            # keep halving while it helps: any decrease alone admits overshooting 2-cycles
            while eps > 1e-12:
                trial2 = _normalize_det(g @ expm(-0.5 * eps * X).T)
                f2, X2 = objective(trial2)
                if f2 >= f_new:
                    break
                trial, f_new, X_new, eps = trial2, f2, X2, 0.5 * eps
        if eps < 1e-12:
            if resid > STALL_PROGRESS * r0:
                trace.status = DIVERGED
                trace.message = "no descent along the orbit: no relatively balanced point"
            else:
                trace.status = MAX_ITER
                trace.message = f"descent stalled at residual {resid:.3g} (quadrature or roundoff floor)"
            break
        if opts.line_search:
            assert f_new < f
        g, f, X = trial, f_new, X_new
        step = eps
        eps = min(2.0 * eps, eps_max)
    trace.g = g
    return g, trace


def orbit_distance(g1, g2, td: TorusData) -> float:
    """Distance between two embeddings modulo unitary changes and ``T~^c``.

    Compares the Hermitian forms ``conj(g) g^T`` after removing the best
    block-scalar rescaling from the extended torus.
    """
    H1 = np.conj(g1) @ np.asarray(g1).T
    H2 = np.conj(g2) @ np.asarray(g2).T
    sizes = np.array(td.block_sizes, dtype=float)
    logs = np.array([0.5 * np.log(np.trace(H2[np.ix_(b, b)]).real / np.trace(H1[np.ix_(b, b)]).real)
                     for b in td.blocks])
    A = np.column_stack([np.ones(len(td.blocks)), td.block_weights.astype(float)])
    wsq = np.sqrt(sizes)
    coef = np.linalg.lstsq(A * wsq[:, None], logs * wsq, rcond=None)[0]
    f_blocks = A @ coef
    f = np.empty(td.dim)
    for fb, b in zip(f_blocks, td.blocks):
        f[list(b)] = fb
    scale = np.exp(-f)
    H2n = scale[:, None] * H2 * scale[None, :]
    return float(np.linalg.norm(H2n - H1) / np.linalg.norm(H1))


def stabilizer_dimension(points, tol=1e-9) -> int:
    """Dimension of the stabilizer of a point configuration in PGL(N+1)."""
    pts = np.atleast_2d(np.asarray(points, dtype=complex))
    D = pts.shape[1]
    rows = []
    for p in pts:
        p = p / np.linalg.norm(p)
        proj = np.eye(D) - np.outer(p, p.conj())
        # (1 - p p^*) X p = 0, linear in X
        rows.append(np.kron(proj, p[None, :]))
    A = np.concatenate(rows, axis=0)
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    return D * D - rank - 1


def torus_is_maximal(variety, td: TorusData) -> bool:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rank_t = basis_t(td).dim
    if isinstance(variety, MonomialEmbedding):
        return rank_t == variety.n
    return stabilizer_dimension(variety.points) == rank_t


def verify_theorem_equivalence(variety, td: TorusData, grid: QuadratureGrid | None = None,
                               opts: SolverOptions | None = None, g0=None) -> dict:
    """Cross-check sigma-balanced and relatively balanced solutions.

    Returns a report dictionary; ``report["success"]`` holds the overall verdict.
    """
    opts = opts or SolverOptions()
    it = _integrator(variety, grid)
    base = it.variety
    a, sigma, ow = solve_optimal_weight(it, td, None, opts)
    g_rel, tr_rel = solve_relative_balanced(it, td, None, opts, g0)
    report = {
        "optimal_weight": {"status": ow.status, "a": a.tolist(), "iterations": len(ow.records) - 1,
                           "residual": ow.final_residual},
        "relative": {"status": tr_rel.status, "iterations": len(tr_rel.records) - 1,
                     "residual": tr_rel.final_residual, "message": tr_rel.message},
        "torus_maximal": torus_is_maximal(base, td),
        "tolerance": opts.tol,
    }
    report["claim"] = "theorem" if report["torus_maximal"] else "conjectural extension"
    traces = {"optimal_weight": ow, "relative": tr_rel}

    if ow.status == DIVERGED:
        report["sigma"] = {"status": DIVERGED, "message": "no optimal weight", "iterations": 0}
    else:
        try:
            g_sig, tr_sig = solve_sigma_balanced(it, sigma, None, opts, g0, td)
            traces["sigma"] = tr_sig
            report["sigma"] = {"status": tr_sig.status, "iterations": len(tr_sig.records) - 1,
                               "residual": tr_sig.final_residual, "message": tr_sig.message}
        except RuntimeError as exc:
            report["sigma"] = {"status": DIVERGED, "message": str(exc), "iterations": 0}

    both = report["relative"]["status"] == CONVERGED and report["sigma"]["status"] == CONVERGED
    if both:
        cross_sigma = sigma_residual(it, g_rel, sigma)
        cross_rel = relative_residual(it, g_sig, td)
        ok_sub, dist = subspace_equal(twisted_t_tilde(sigma, td), basis_t_tilde(td), 1e-6)
        report.update({
            "status": "stable",
            "sigma_residual_at_relative_solution": cross_sigma,
            "relative_residual_at_sigma_solution": cross_rel,
            "cross_tolerance": 10 * opts.tol,
            "t_sigma_distance": dist,
            "t_sigma_tolerance": 1e-6,
            "orbit_distance": orbit_distance(g_rel, g_sig, td),
            "g_relative": g_rel,
            "g_sigma": g_sig,
        })
        report["success"] = bool(cross_sigma < 10 * opts.tol and cross_rel < 10 * opts.tol)
        report["consistent"] = True
    else:
        statuses = {report["relative"]["status"], report["sigma"]["status"]}
        report["status"] = "relatively unstable"
        report["consistent"] = statuses == {DIVERGED}
        report["success"] = False
        if not report["consistent"]:
            report["discrepancy"] = "solvers disagree: " + ", ".join(
                f"{k}={report[k]['status']}" for k in ("relative", "sigma"))
    report["sigma_star"] = np.diag(sigma).real.tolist()
    report["_traces"] = traces
    return report
