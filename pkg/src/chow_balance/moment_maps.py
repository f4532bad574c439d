"""Fubini-Study moment maps, their integrals, characters and the functional G.

Everything integrated reduces to a single Gram form

    M(g) = int_X z z^* / |z|^2 omega^n,

since the twist by a diagonal ``sigma`` only conjugates it:
``M^sigma = sigma M sigma``. The trace-free part of ``M`` is the moment map
``mu0``, ``M`` itself is the full moment map, and ``G(sigma) = tr M^sigma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedded_variety import QuadratureGrid, Variety, integrate_gram
from .torus_action import TorusData, basis_t, pairing, project, trace_free


def _check_z(z):
    z = np.asarray(z, dtype=complex).ravel()
    nrm = np.vdot(z, z).real
    if nrm == 0 or not np.isfinite(nrm):
        raise ValueError("moment map undefined at the zero vector")
    return z, nrm


def m_full(z) -> np.ndarray:
    """Orthogonal projector ``z z^* / |z|^2``."""
    z, nrm = _check_z(z)
    return np.outer(z, z.conj()) / nrm


def m0(z) -> np.ndarray:
    return trace_free(m_full(z))


def m0_sigma(sigma, z) -> np.ndarray:
    """Trace-free part of ``(sigma z)(sigma z)^* / |z|^2``.

    The denominator is the untwisted norm.
    """
    z, nrm = _check_z(z)
    sz = np.asarray(sigma) @ z
    return trace_free(np.outer(sz, sz.conj()) / nrm)


@dataclass
class MomentResult:
    value: np.ndarray
    mass: float
    error: float | None
    g: np.ndarray | None


def sigma_matrix(a, td: TorusData) -> np.ndarray:
    """Positive representative ``exp(sum_k a_k D_k)`` of a torus element."""
    return np.diag(np.exp(td.generator(a))).astype(complex)


class Integrator:
    """Caches Gram forms per orbit point for one variety and grid.

    Parameters
    ----------
    variety : MonomialEmbedding or PointConfiguration
    grid : QuadratureGrid, optional
        Ignored for point configurations.
    deterministic : bool
        Fixed-order reduction (bit-reproducible) when True.
    """

    def __init__(self, variety: Variety, grid: QuadratureGrid | None = None, deterministic=True):
        self.variety = variety
        self.grid = grid
        self.deterministic = deterministic
        self._cache = {}
        self.evaluations = 0

    def gram(self, g=None):
        key = None if g is None else np.asarray(g, dtype=complex).tobytes()
        if key not in self._cache:
            self.evaluations += 1
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[key] = integrate_gram(self.variety, g, self.grid, self.deterministic)
        return self._cache[key]

    def error_estimate(self, fn, g=None):
        """|fn(grid) - fn(half grid)|, zero for point configurations."""
        if self.grid is None or self.variety.n == 0:
            return 0.0
        coarse = Integrator(self.variety, self.grid.halved(), self.deterministic)
        return float(np.linalg.norm(np.asarray(fn(self, g)) - np.asarray(fn(coarse, g))))


def _integrator(variety, grid, deterministic=True):
    if isinstance(variety, Integrator):
        return variety
    return Integrator(variety, grid, deterministic)


def mu_full(variety, g=None, grid=None, estimate_error=False) -> MomentResult:
    it = _integrator(variety, grid)
    M, mass = it.gram(g)
    err = it.error_estimate(lambda i, h: i.gram(h)[0], g) if estimate_error else None
    return MomentResult(M, mass, err, g)


def mu0(variety, g=None, grid=None, estimate_error=False) -> MomentResult:
    it = _integrator(variety, grid)
    M, mass = it.gram(g)
    err = it.error_estimate(lambda i, h: trace_free(i.gram(h)[0]), g) if estimate_error else None
    return MomentResult(trace_free(M), mass, err, g)


def gram_twisted(variety, g, grid, sigma) -> np.ndarray:
    it = _integrator(variety, grid)
    M, _ = it.gram(g)
    s = np.asarray(sigma, dtype=complex)
    return s @ M @ s.conj().T


def mu0_sigma(variety, sigma, g=None, grid=None, estimate_error=False) -> MomentResult:
    it = _integrator(variety, grid)
    _, mass = it.gram(g)
    val = trace_free(gram_twisted(it, g, None, sigma))
    err = None
    if estimate_error:
        err = it.error_estimate(lambda i, h: trace_free(gram_twisted(i, h, None, sigma)), g)
    return MomentResult(val, mass, err, g)


def _check_in_t(xi, td, tol=1e-8):
    xi = np.asarray(xi, dtype=complex)
    resid = np.linalg.norm(xi - project(xi, basis_t(td)))
    if resid > tol * max(1.0, np.linalg.norm(xi)):
        raise ValueError(f"xi is not in the torus Lie algebra (residual {resid:.3g})")
    return xi


def character_F(variety, g, grid, xi, td: TorusData) -> float:
    """``<mu0(g), xi>`` for ``xi`` in the torus algebra."""
    xi = _check_in_t(xi, td)
    return pairing(mu0(variety, g, grid).value, xi)


def character_F_sigma(variety, g, grid, sigma, xi, td: TorusData) -> float:
    xi = _check_in_t(xi, td)
    return pairing(mu0_sigma(variety, sigma, g, grid).value, xi)


def _twisted_diagonal(it, g, a, td):
    M, _ = it.gram(g)
    e = np.exp(2.0 * td.generator(a))
    return np.diag(M).real * e


def functional_G(variety, g, grid, a, td: TorusData) -> float:
    """``G(sigma) = int |sigma z|^2 / |z|^2 omega^n`` with ``sigma = exp(a.D)``."""
    it = _integrator(variety, grid)
    return float(_twisted_diagonal(it, g, a, td).sum())


def grad_G(variety, g, grid, a, td: TorusData) -> np.ndarray:
    """``dG/da_k = 2 tr(M^sigma D_k)``."""
    it = _integrator(variety, grid)
    t = _twisted_diagonal(it, g, a, td)
    return 2.0 * td.centered @ t


def hess_G(variety, g, grid, a, td: TorusData) -> np.ndarray:
    """``d2G/da_k da_l = 4 tr(D_k D_l M^sigma)`` (all factors diagonal)."""
    it = _integrator(variety, grid)
    t = _twisted_diagonal(it, g, a, td)
    return 4.0 * (td.centered * t) @ td.centered.T
