"""Embedded polarized varieties and Fubini-Study quadrature.

Two kinds of embedded variety are supported:

* toric varieties given by a lattice polytope, embedded by monomials
  ``z_beta = sum_gamma g[gamma, beta] * c_gamma * exp(<alpha_gamma, w>)`` in
  exponential coordinates ``w = x + i theta`` on the dense torus;
* finite point configurations in projective space (dimension zero).

Integrals against the induced volume form are discretized on a tensor grid:
Gauss-Legendre nodes in the radial directions (pulled back through
``x = remap * atanh(u)``) and the periodic trapezoidal rule in the angular ones.

The Fubini-Study form is normalized so that a line has area one, hence the
volume form ``omega^n`` integrates to the degree on every embedded variety.
In exponential coordinates this amounts to the density
``KAPPA(n) * det(ddbar log|z|^2)`` against ``dx dtheta`` with
``KAPPA(n) = n! / pi**n``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Union

import numba
import numpy as np
from scipy.spatial import ConvexHull

# exp() overflows float64 a little above 709
SAFE_EXPONENT = 700.0
DENSITY_SLACK = 1e-12
CHUNK_SIZE = 1 << 15


def kappa(n: int) -> float:
    """Normalization constant folded into quadrature weights (n! / pi^n)."""
    return math.factorial(n) / math.pi**n


class LatticePolytope:
    """Full-dimensional convex polytope with rational vertices.

    Parameters
    ----------
    vertices : array_like, shape (m, n)
        Points whose convex hull is the polytope. Redundant points are allowed.
    """

    def __init__(self, vertices):
        verts = np.atleast_2d(np.asarray(vertices, dtype=float))
        if verts.ndim != 2 or verts.shape[0] == 0:
            raise ValueError("polytope needs at least one vertex")
        self.vertices = verts
        self.dimension = verts.shape[1]
        n = self.dimension
        if n == 0:
            raise ValueError("polytope dimension must be positive")
        if np.linalg.matrix_rank(verts - verts[0], tol=1e-9) < n:
            raise ValueError("polytope is not full-dimensional")
        if n == 1:
            lo, hi = verts.min(), verts.max()
            # rows of [A | b] with A x + b <= 0
            self._equations = np.array([[-1.0, lo], [1.0, -hi]])
            self.volume = float(hi - lo)
        else:
            hull = ConvexHull(verts)
            self._equations = hull.equations
            self.volume = float(hull.volume)
        self._points = None

    def contains(self, pts, eps=1e-9):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        A, b = self._equations[:, :-1], self._equations[:, -1]
        return np.all(pts @ A.T + b <= eps, axis=1)

    @property
    def lattice_points(self) -> np.ndarray:
        if self._points is None:
            self._points = enumerate_lattice_points(self)
        return self._points

    def normalized_volume(self) -> int:
        """n! times the Euclidean volume, rounded to the nearest integer."""
        value = math.factorial(self.dimension) * self.volume
        d = int(round(value))
        if abs(value - d) > 1e-6:
            raise ValueError(f"normalized volume {value} is not an integer")
        return d


def enumerate_lattice_points(polytope: LatticePolytope) -> np.ndarray:
    """Integer points of ``polytope`` in lexicographic order.

    Brute-force scan of the integer bounding box, which is fine for the small
    polytopes (n <= 3) this library is meant for.
    """
    lo = np.ceil(polytope.vertices.min(axis=0) - 1e-9).astype(int)
    hi = np.floor(polytope.vertices.max(axis=0) + 1e-9).astype(int)
    axes = [range(a, b + 1) for a, b in zip(lo, hi)]
    box = np.array(list(itertools.product(*axes)), dtype=int).reshape(-1, polytope.dimension)
    pts = box[polytope.contains(box)] if len(box) else box
    if len(pts) == 0:
        raise ValueError("no lattice points")
    # itertools.product already yields lexicographic order
    return pts


@dataclass
class MonomialEmbedding:
    """Toric variety embedded by monomials.

    ``alphas[beta]`` is the exponent of the ``beta``-th section and
    ``coefficients[beta] > 0`` its scale in the reference basis.
    """

    alphas: np.ndarray
    coefficients: np.ndarray
    degree: int

    def __post_init__(self):
        self.alphas = np.atleast_2d(np.asarray(self.alphas, dtype=int))
        self.coefficients = np.asarray(self.coefficients, dtype=float).ravel()
        if len(self.coefficients) != len(self.alphas):
            raise ValueError("need one coefficient per lattice point")
        if np.any(self.coefficients <= 0):
            raise ValueError("coefficients must be positive")
        if int(self.degree) <= 0:
            raise ValueError("degree must be positive")
        self.degree = int(self.degree)

    @classmethod
    def from_polytope(cls, polytope: LatticePolytope, coefficients=None, degree=None):
        pts = polytope.lattice_points
        if coefficients is None:
            coefficients = np.ones(len(pts))
        d = polytope.normalized_volume()
        if degree is not None and int(degree) != d:
            raise ValueError(f"declared degree {degree} differs from n! vol = {d}")
        return cls(pts, coefficients, d)

    @property
    def n(self) -> int:
        return self.alphas.shape[1]

    @property
    def dim(self) -> int:
        """Number of homogeneous coordinates, N + 1."""
        return self.alphas.shape[0]


@dataclass
class PointConfiguration:
    """A zero-dimensional cycle: ``d`` points of CP^N, repetitions allowed."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=complex))
        if pts.shape[0] < 1:
            raise ValueError("need at least one point")
        if np.any(np.linalg.norm(pts, axis=1) == 0):
            raise ValueError("points must be nonzero vectors")
        self.points = pts

    n = 0

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def degree(self) -> int:
        return self.points.shape[0]


Variety = Union[MonomialEmbedding, PointConfiguration]


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor grid on R^n x (R/2piZ)^n.

    ``nodes`` holds the complex torus coordinates ``w = x + i theta`` and
    ``weights`` the quadrature weights for ``dx dtheta`` (remap Jacobian
    included). ``reference_weights`` are the same weights before the remap,
    i.e. a rule for the cube (-1, 1)^n x [0, 2pi)^n.
    """

    n: int
    radial_nodes: int
    angular_nodes: int
    remap: float
    nodes: np.ndarray = field(repr=False, compare=False)
    weights: np.ndarray = field(repr=False, compare=False)
    reference_weights: np.ndarray = field(repr=False, compare=False)

    def __len__(self):
        return len(self.weights)

    def halved(self) -> "QuadratureGrid":
        return build_grid(self.n, max(2, self.radial_nodes // 2),
                          max(2, self.angular_nodes // 2), self.remap)


def build_grid(n: int, radial_nodes: int, angular_nodes: int, remap: float = 1.0) -> QuadratureGrid:
    if n < 1:
        raise ValueError("grid dimension must be at least 1")
    if radial_nodes < 2 or angular_nodes < 2:
        raise ValueError("node counts must be >= 2")
    if remap <= 0:
        raise ValueError("remap must be positive")
    u, wu = np.polynomial.legendre.leggauss(radial_nodes)
    x = remap * np.arctanh(u)
    wx = wu * remap / (1.0 - u**2)
    theta = 2.0 * np.pi * np.arange(angular_nodes) / angular_nodes
    wt = np.full(angular_nodes, 2.0 * np.pi / angular_nodes)

    w1 = (x[:, None] + 1j * theta[None, :]).ravel()
    weight1 = (wx[:, None] * wt[None, :]).ravel()
    ref1 = (wu[:, None] * wt[None, :]).ravel()

    nodes = w1[:, None]
    weights = weight1
    ref = ref1
    for _ in range(n - 1):
        nodes = np.concatenate([np.repeat(nodes, len(w1), axis=0),
                                np.tile(w1, len(nodes))[:, None]], axis=1)
        weights = np.outer(weights, weight1).ravel()
        ref = np.outer(ref, ref1).ravel()
    for arr in (nodes, weights, ref):
        arr.flags.writeable = False
    return QuadratureGrid(n, radial_nodes, angular_nodes, float(remap), nodes, weights, ref)


def _as_orbit_point(g, dim):
    if g is None:
        return np.eye(dim, dtype=complex)
    g = np.asarray(g, dtype=complex)
    if g.shape != (dim, dim):
        raise ValueError(f"orbit point must be {dim}x{dim}, got {g.shape}")
    return g


def evaluate_embedding(emb: MonomialEmbedding, g, w) -> np.ndarray:
    """Homogeneous coordinates of the point with torus coordinate ``w``.

    No rescaling is applied, so large ``|Re w|`` overflows; the quadrature
    routines use a rescaled (projectively equivalent) evaluation instead.
    """
    g = _as_orbit_point(g, emb.dim)
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    expo = emb.alphas @ w
    if np.any(np.abs(expo.real) > SAFE_EXPONENT) or not np.all(np.isfinite(expo)):
        raise ValueError("coordinate out of safe range")
    u = emb.coefficients * np.exp(expo)
    return g.T @ u


def _monomials(emb, g, w):
    """Rescaled z and dz/dw for a batch of torus coordinates.

    Returns ``z`` with shape (K, N+1) and ``dz`` with shape (K, n, N+1). Each
    node is scaled by a positive constant, which leaves every projective
    quantity (and the density formula) unchanged.
    """
    expo = w @ emb.alphas.T  # (K, N+1)
    if not np.all(np.isfinite(expo)):
        raise ValueError("non-finite torus coordinate")
    expo = expo - expo.real.max(axis=1, keepdims=True)
    u = emb.coefficients * np.exp(expo)
    z = u @ g
    du = u[:, None, :] * emb.alphas.T[None, :, :]
    dz = du @ g
    return z, dz


def _density_from(z, dz):
    zz = np.einsum("kb,kb->k", z, z.conj()).real
    inner = np.einsum("kib,kjb->kij", dz, dz.conj())
    mixed = np.einsum("kib,kb->ki", dz, z.conj())
    H = (inner * zz[:, None, None] - mixed[:, :, None] * mixed[:, None, :].conj()) / zz[:, None, None] ** 2
    n = H.shape[1]
    if n == 1:
        det = H[:, 0, 0].real
    elif n == 2:
        det = (H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]).real
    else:
        det = np.linalg.det(H).real
    return det


def fs_volume_density(emb: MonomialEmbedding, g, w) -> float:
    """``det(ddbar log|z(w)|^2)`` at a single torus coordinate ``w``.

    The normalization constant :func:`kappa` is not included.
    """
    g = _as_orbit_point(g, emb.dim)
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    z, dz = _monomials(emb, g, w[None, :])
    det = float(_density_from(z, dz)[0])
    if det < -DENSITY_SLACK:
        raise ValueError(f"numerical degeneracy: negative density {det} at w={w}")
    return max(det, 0.0)


@dataclass(frozen=True)
class SamplePoint:
    z: np.ndarray
    density: float


def node_data(variety: Variety, g, grid: QuadratureGrid | None, start=0, stop=None):
    """Vectorized samples: ``(z, mass_weight)`` for a slice of the grid.

    ``mass_weight`` is quadrature weight times normalized density, so that
    ``mass_weight.sum()`` approximates the degree.
    """
    g = _as_orbit_point(g, variety.dim)
    if isinstance(variety, PointConfiguration):
        z = variety.points[start:stop] @ g
        return z, np.ones(len(z))
    if grid is None or grid.n != variety.n:
        raise ValueError("grid dimension does not match the variety")
    w = grid.nodes[start:stop]
    z, dz = _monomials(variety, g, w)
    det = _density_from(z, dz)
    bad = det < -DENSITY_SLACK
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ValueError(f"numerical degeneracy: negative density {det[k]} at w={w[k]}")
    if not np.all(np.isfinite(det)):
        k = int(np.argmax(~np.isfinite(det)))
        raise ValueError(f"non-finite density at node {start + k}, w={w[k]}")
    return z, np.clip(det, 0.0, None) * grid.weights[start:stop] * kappa(variety.n)


def sample_variety(variety: Variety, g=None, grid: QuadratureGrid | None = None) -> Iterator[tuple[SamplePoint, float]]:
    """Yield ``(SamplePoint, weight)`` pairs, one per quadrature node or point."""
    if isinstance(variety, PointConfiguration):
        z, _ = node_data(variety, g, None)
        for zi in z:
            yield SamplePoint(zi, 1.0), 1.0
        return
    gm = _as_orbit_point(g, variety.dim)
    scale = kappa(variety.n)
    for start in range(0, len(grid), CHUNK_SIZE):
        w = grid.nodes[start:start + CHUNK_SIZE]
        z, dz = _monomials(variety, gm, w)
        det = _density_from(z, dz)
        if np.any(det < -DENSITY_SLACK):
            k = int(np.argmin(det))
            raise ValueError(f"numerical degeneracy: negative density {det[k]} at w={w[k]}")
        for zi, di, wi in zip(z, np.clip(det, 0.0, None), grid.weights[start:start + CHUNK_SIZE]):
            yield SamplePoint(zi, float(di)), float(wi * scale)


def _chunks(variety, grid):
    total = variety.degree if isinstance(variety, PointConfiguration) else len(grid)
    return [(s, min(s + CHUNK_SIZE, total)) for s in range(0, total, CHUNK_SIZE)]


@numba.njit(cache=True, nogil=True)
def _gram_kernel(alphas, coeffs, g, nodes, weights, scale):
    K, n = nodes.shape
    D = alphas.shape[0]
    M = np.zeros((D, D), dtype=np.complex128)
    mass = 0.0
    worst = 0.0
    worst_k = -1
    expo = np.empty(D, dtype=np.complex128)
    u = np.empty(D, dtype=np.complex128)
    z = np.empty(D, dtype=np.complex128)
    dz = np.empty((n, D), dtype=np.complex128)
    H = np.empty((n, n), dtype=np.complex128)
    mixed = np.empty(n, dtype=np.complex128)
    for k in range(K):
        top = -np.inf
        for b in range(D):
            e = 0j
            for j in range(n):
                e += alphas[b, j] * nodes[k, j]
            expo[b] = e
            if e.real > top:
                top = e.real
        for b in range(D):
            u[b] = coeffs[b] * np.exp(expo[b] - top)
        zz = 0.0
        for b in range(D):
            acc = 0j
            for c in range(D):
                acc += g[c, b] * u[c]
            z[b] = acc
            zz += acc.real * acc.real + acc.imag * acc.imag
        for j in range(n):
            for b in range(D):
                acc = 0j
                for c in range(D):
                    acc += g[c, b] * alphas[c, j] * u[c]
                dz[j, b] = acc
        for i in range(n):
            acc = 0j
            for b in range(D):
                acc += dz[i, b] * np.conj(z[b])
            mixed[i] = acc
        for i in range(n):
            for j in range(n):
                acc = 0j
                for b in range(D):
                    acc += dz[i, b] * np.conj(dz[j, b])
                H[i, j] = (acc * zz - mixed[i] * np.conj(mixed[j])) / (zz * zz)
        if n == 1:
            det = H[0, 0].real
        elif n == 2:
            det = (H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]).real
        else:
            det = np.linalg.det(H).real
        if det < worst:
            worst = det
            worst_k = k
        if det < 0.0:
            det = 0.0
        mw = det * weights[k] * scale
        mass += mw
        f = mw / zz
        for b in range(D):
            for c in range(D):
                M[b, c] += f * z[b] * np.conj(z[c])
    return M, mass, worst, worst_k


def integrate_gram(variety: Variety, g=None, grid: QuadratureGrid | None = None,
                   deterministic: bool = True, workers: int | None = None):
    """Gram form ``M = int z z^* / |z|^2 omega^n`` and the total mass.

    In deterministic mode chunks are reduced in a fixed order; otherwise they
    are evaluated on a thread pool and summed in completion order.
    """
    g = _as_orbit_point(g, variety.dim)
    if isinstance(variety, MonomialEmbedding) and (grid is None or grid.n != variety.n):
        raise ValueError("grid dimension does not match the variety")

    def part(bounds):
        if isinstance(variety, MonomialEmbedding):
            s, e = bounds
            w = grid.nodes[s:e]
            if not np.all(np.isfinite(w)):
                raise ValueError("non-finite torus coordinate")
            Mi, mi, worst, k = _gram_kernel(variety.alphas.astype(np.float64), variety.coefficients,
                                            np.ascontiguousarray(g), np.ascontiguousarray(w),
                                            grid.weights[s:e], kappa(variety.n))
            if worst < -DENSITY_SLACK:
                raise ValueError(f"numerical degeneracy: negative density {worst} at w={w[k]}")
            return Mi, mi
        z, mw = node_data(variety, g, grid, *bounds)
        zz = np.einsum("kb,kb->k", z, z.conj()).real
        a = z * np.sqrt(mw / zz)[:, None]
        return a.T @ a.conj(), mw.sum()

    chunks = _chunks(variety, grid)
    M = np.zeros((variety.dim, variety.dim), dtype=complex)
    mass = 0.0
    if deterministic or len(chunks) == 1:
        for bounds in chunks:
            Mi, mi = part(bounds)
            M += Mi
            mass += mi
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(part, b) for b in chunks]
            from concurrent.futures import as_completed
            for fut in as_completed(futures):
                Mi, mi = fut.result()
                M += Mi
                mass += mi
    if not np.all(np.isfinite(M)):
        raise ValueError("non-finite Gram form")
    M = 0.5 * (M + M.conj().T)
    return M, float(mass)


def total_mass(variety: Variety, g=None, grid: QuadratureGrid | None = None, deterministic=True) -> float:
    return integrate_gram(variety, g, grid, deterministic)[1]


def sqrt_binomial(k: int) -> np.ndarray:
    """Coefficients sqrt(binom(k, j)) of the balanced Veronese curve."""
    return np.sqrt([math.comb(k, j) for j in range(k + 1)])


def sqrt_multinomial(alphas: Sequence[Sequence[int]], k: int) -> np.ndarray:
    """sqrt(k! / (a_1! ... a_n! (k - |a|)!)) for lattice points of k * simplex."""
    out = []
    for a in alphas:
        rest = k - sum(a)
        denom = math.prod(math.factorial(int(x)) for x in a) * math.factorial(rest)
        out.append(math.sqrt(math.factorial(k) / denom))
    return np.array(out)
