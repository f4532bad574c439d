"""Torus weights, block structure and the Lie subalgebras of the block group.

Lie algebra elements are stored as Hermitian matrices; the factor ``i`` that
turns them into skew-Hermitian ones is implicit everywhere. All pairings are
``<xi, eta> = tr(xi eta^*)``.

Subspaces are handled through real coordinates: a Hermitian matrix ``A``
maps to the real vector ``[Re A, Im A]`` (flattened), on which the trace
pairing becomes the Euclidean dot product.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import expm

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12


def pairing(xi, eta) -> float:
    """Trace pairing ``tr(xi eta^*)`` (real for Hermitian arguments)."""
    return float(np.real(np.vdot(np.asarray(eta), np.asarray(xi))))


def is_hermitian(A, tol=HERMITIAN_TOL) -> bool:
    A = np.asarray(A)
    return bool(np.abs(A - A.conj().T).max(initial=0.0) <= tol * max(1.0, np.abs(A).max(initial=0.0)))


def trace_free(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    return A - np.trace(A) / A.shape[0] * np.eye(A.shape[0])


def _to_real(mats):
    mats = np.asarray(mats, dtype=complex)
    flat = mats.reshape(len(mats), -1)
    return np.concatenate([flat.real, flat.imag], axis=1)


def _from_real(vecs, dim):
    vecs = np.atleast_2d(vecs)
    half = vecs.shape[1] // 2
    return (vecs[:, :half] + 1j * vecs[:, half:]).reshape(-1, dim, dim)


def _orthonormalize(mats, dim, tol=1e-10):
    """Orthonormal basis (under the trace pairing) of the span of ``mats``."""
    if len(mats) == 0:
        return np.zeros((0, dim, dim), dtype=complex)
    R = _to_real(mats)
    U, s, Vt = np.linalg.svd(R, full_matrices=False)
    rank = int(np.sum(s > tol * max(1.0, s[0])))
    basis = _from_real(Vt[:rank], dim)
    # SVD sign is arbitrary; fix it so that results are reproducible
    for k in range(rank):
        flat = _to_real(basis[k:k + 1])[0]
        j = int(np.argmax(np.abs(flat) > 1e-9))
        if flat[j] < 0:
            basis[k] = -basis[k]
    return basis


@dataclass(frozen=True)
class SubalgebraBasis:
    """Orthonormal basis of a real subspace of Hermitian matrices."""

    elements: np.ndarray
    tag: str

    @property
    def dim(self) -> int:
        return len(self.elements)

    @property
    def size(self) -> int:
        return self.elements.shape[-1]

    def projector(self) -> np.ndarray:
        """Orthogonal projector acting on real coordinates."""
        R = _to_real(self.elements) if self.dim else np.zeros((0, 2 * self.size**2))
        return R.T @ R

    def gram(self) -> np.ndarray:
        R = _to_real(self.elements)
        return R @ R.T


@dataclass(frozen=True)
class TorusData:
    """Integer weights of a torus acting diagonally on C^{N+1}.

    Attributes
    ----------
    weights : ndarray of int, shape (N+1, r)
        Raw weight of each basis vector.
    blocks : tuple of tuple of int
        Indices sharing a weight, ordered lexicographically by weight.
    block_weights : ndarray of int, shape (n_blocks, r)
    centered : ndarray of float, shape (r, N+1)
        Diagonal generators with the mean weight removed (trace zero).
    """

    weights: np.ndarray
    blocks: tuple
    block_weights: np.ndarray
    centered: np.ndarray

    @property
    def rank(self) -> int:
        return self.weights.shape[1]

    @property
    def dim(self) -> int:
        return self.weights.shape[0]

    @property
    def block_sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]

    def block_of(self) -> np.ndarray:
        """Block index of every basis vector."""
        out = np.empty(self.dim, dtype=int)
        for k, b in enumerate(self.blocks):
            out[list(b)] = k
        return out

    def block_mask(self) -> np.ndarray:
        lab = self.block_of()
        return lab[:, None] == lab[None, :]

    def generator(self, a) -> np.ndarray:
        """Diagonal of ``sum_k a_k D_k`` for the centered generators ``D_k``."""
        a = np.asarray(a, dtype=float).reshape(-1)
        if self.rank == 0:
            return np.zeros(self.dim)
        return a @ self.centered


def build_torus(weights) -> TorusData:
    """Group basis vectors by weight.

    ``weights`` is a list of N+1 integer vectors (or integers for rank 1).
    """
    W = np.asarray(weights)
    if W.ndim == 1:
        W = W[:, None]
    if W.size and not np.all(W == np.round(W)):
        raise ValueError("torus weights must be integers")
    W = np.round(W).astype(int).reshape(len(W), -1)
    keys = sorted({tuple(row) for row in W.tolist()})
    blocks = tuple(tuple(i for i in range(len(W)) if tuple(W[i]) == key) for key in keys)
    block_weights = np.array(keys, dtype=int).reshape(len(keys), W.shape[1])
    centered = (W - W.mean(axis=0)).T.astype(float)
    return TorusData(W, blocks, block_weights, centered)


def torus_from_matrix(weight_matrix, lattice_points) -> TorusData:
    """Weights of monomials under the subtorus with the given r x n matrix."""
    A = np.atleast_2d(np.asarray(weight_matrix, dtype=int))
    return build_torus(np.asarray(lattice_points, dtype=int) @ A.T)


def basis_t(td: TorusData) -> SubalgebraBasis:
    """Orthonormal basis of the (trace-free) Lie algebra of the torus."""
    gens = [np.diag(row).astype(complex) for row in td.centered]
    elems = _orthonormalize(gens, td.dim)
    if len(elems) == 0:
        warnings.warn("torus acts trivially; its Lie algebra is zero", stacklevel=2)
    return SubalgebraBasis(elems, "t")


def basis_t_tilde(td: TorusData) -> SubalgebraBasis:
    """Basis of ``1 + t`` (identity first, then :func:`basis_t`)."""
    ident = np.eye(td.dim, dtype=complex) / math.sqrt(td.dim)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t = basis_t(td).elements
    return SubalgebraBasis(np.concatenate([ident[None], t]), "t_tilde")


def _block_hermitian_basis(td: TorusData):
    D = td.dim
    out = []
    for block in td.blocks:
        for a_pos, i in enumerate(block):
            E = np.zeros((D, D), dtype=complex)
            E[i, i] = 1.0
            out.append(E)
            for j in block[a_pos + 1:]:
                S = np.zeros((D, D), dtype=complex)
                S[i, j] = S[j, i] = 1 / math.sqrt(2)
                A = np.zeros((D, D), dtype=complex)
                A[i, j] = 1j / math.sqrt(2)
                A[j, i] = -1j / math.sqrt(2)
                out.extend([S, A])
    return np.array(out)


def _complement(full, remove, dim):
    if len(remove):
        R = _to_real(full)
        Q = _to_real(remove)
        R = R - (R @ Q.T) @ Q
        full = _from_real(R, dim)
    return _orthonormalize(full, dim)


def basis_g_T(td: TorusData) -> SubalgebraBasis:
    """Trace-free block-diagonal Hermitian matrices."""
    ident = np.eye(td.dim, dtype=complex)[None] / math.sqrt(td.dim)
    return SubalgebraBasis(_complement(_block_hermitian_basis(td), ident, td.dim), "g_T")


def basis_g_T_perp(td: TorusData) -> SubalgebraBasis:
    """Orthogonal complement of the torus algebra inside ``g_T``."""
    remove = basis_t_tilde(td).elements
    return SubalgebraBasis(_complement(_block_hermitian_basis(td), remove, td.dim), "g_T_perp")


def project(xi, basis: SubalgebraBasis) -> np.ndarray:
    """Orthogonal projection of a Hermitian matrix onto ``span(basis)``."""
    xi = np.asarray(xi, dtype=complex)
    out = np.zeros_like(xi)
    for b in basis.elements:
        out += pairing(xi, b) * b
    return out


def extremal_vector(mu0, td: TorusData) -> np.ndarray:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return project(mu0, basis_t(td))


def is_block_scalar(sigma, td: TorusData, tol=1e-12) -> bool:
    sigma = np.asarray(sigma)
    if np.abs(sigma - np.diag(np.diag(sigma))).max() > tol * np.abs(sigma).max():
        return False
    diag = np.diag(sigma)
    return all(np.abs(diag[list(b)] - diag[b[0]]).max() <= tol * np.abs(diag).max() for b in td.blocks)


def twist_t(sigma, td: TorusData) -> SubalgebraBasis:
    """Orthonormal basis of ``sigma t sigma^*``."""
    sigma = np.asarray(sigma, dtype=complex)
    if not is_block_scalar(sigma, td):
        raise ValueError("sigma must lie in T^c")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t = basis_t(td).elements
    twisted = [sigma @ x @ sigma.conj().T for x in t]
    return SubalgebraBasis(_orthonormalize(twisted, td.dim), "t_sigma")


def twisted_t_tilde(sigma, td: TorusData) -> SubalgebraBasis:
    """Basis of ``sigma 1 sigma^* + sigma t sigma^*``."""
    sigma = np.asarray(sigma, dtype=complex)
    extra = [sigma @ sigma.conj().T] + list(twist_t(sigma, td).elements)
    return SubalgebraBasis(_orthonormalize(extra, td.dim), "t_sigma")


def subspace_equal(B1: SubalgebraBasis, B2: SubalgebraBasis, tol: float = 1e-8):
    """Frobenius distance between orthogonal projectors and the verdict."""
    if B1.size != B2.size:
        raise ValueError("bases live in different ambient spaces")
    dist = float(np.linalg.norm(B1.projector() - B2.projector()))
    return dist < tol, dist


def random_block_element(td: TorusData, rng, scale=0.3, basis: SubalgebraBasis | None = None) -> np.ndarray:
    """exp of a random complex combination of ``basis`` (default ``g_T``)."""
    basis = basis_g_T(td) if basis is None else basis
    if basis.dim == 0:
        return np.eye(td.dim, dtype=complex)
    coef = scale * (rng.standard_normal(basis.dim) + 1j * rng.standard_normal(basis.dim))
    X = np.tensordot(coef, basis.elements, axes=1)
    return expm(X)


def check_orbit_point(g, td: TorusData, tol=0.0) -> np.ndarray:
    """Validate that ``g`` is invertible and vanishes off the diagonal blocks."""
    g = np.asarray(g, dtype=complex)
    if g.shape != (td.dim, td.dim):
        raise ValueError("orbit point has the wrong shape")
    off = np.abs(g[~td.block_mask()])
    if off.size and off.max() > tol:
        raise ValueError("orbit point has entries outside the diagonal blocks")
    for b in td.blocks:
        blk = g[np.ix_(b, b)]
        if abs(np.linalg.det(blk)) == 0 or np.linalg.cond(blk) > 1e14:
            raise ValueError("orbit point is singular on a block")
    return g


def _as_frame_coordinates(xi, td: TorusData, tol):
    xi = np.asarray(xi, dtype=complex)
    resid = np.linalg.norm(xi - project(xi, basis_t_tilde(td)))
    if resid > tol * max(1.0, np.linalg.norm(xi)):
        raise ValueError(f"element is not in the extended torus algebra (residual {resid:.3g})")
    diag = np.diag(xi).real
    return np.array([diag[b[0]] for b in td.blocks])


def rationality_check(xi, td: TorusData, max_den: int, tol: float = 1e-6):
    """Simultaneous rational approximation of ``xi`` in the block frame.

    ``xi`` must lie in ``1 + t``; it is then block-scalar and is described by
    one real number per weight block. Each is approximated by a continued
    fraction with denominator at most ``max_den``; the result is accepted when
    every error is below ``tol`` and the common denominator stays within
    ``max_den``. Returns a list of :class:`fractions.Fraction` or ``None``.
    """
    coords = _as_frame_coordinates(xi, td, 1e-8)
    out = []
    for x in coords:
        f = Fraction(float(x)).limit_denominator(max_den)
        if abs(float(f) - x) >= tol:
            return None
        out.append(f)
    den = math.lcm(*(f.denominator for f in out)) if out else 1
    if den > max_den:
        return None
    return out
