"""Chow forms of point configurations and the optimal-weight/character relation.

For a zero-cycle ``p_1 + ... + p_d`` in CP^N the Chow form is the product of
the linear forms ``u -> <u, p_i>``. When every point lies in a single torus
weight space the form is a weight vector, and its weight is the destabilizing
character. Weights of the dual variables follow the action on points: the
factor of a point of weight ``chi`` contributes ``chi``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .embedded_variety import PointConfiguration
from .moment_maps import functional_G
from .solvers import DIVERGED, SolverOptions, solve_optimal_weight
from .torus_action import (TorusData, _to_real, basis_t_tilde, is_block_scalar, project,
                           rationality_check)

# alpha^sigma / chi' on the reference configuration {[1:0], [0:1], [0:1]}
KAPPA_CHAR = 2.0
REFERENCE_CONFIGURATION = ((1, 0), (0, 1), (0, 1))
REFERENCE_WEIGHTS = (1, -1)


@dataclass(frozen=True)
class ChowFormPoints:
    """Product of ``d`` linear forms in the dual variables ``u_0 .. u_N``."""

    factors: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.factors)

    def expand(self) -> dict:
        """Coefficients of the product, keyed by exponent tuples."""
        N1 = self.factors.shape[1]
        poly = {(0,) * N1: 1.0 + 0j}
        for f in self.factors:
            new = {}
            for mono, coef in poly.items():
                for j, fj in enumerate(f):
                    if fj == 0:
                        continue
                    key = mono[:j] + (mono[j] + 1,) + mono[j + 1:]
                    new[key] = new.get(key, 0) + coef * fj
            poly = {k: v for k, v in new.items() if v != 0}
        return poly

    def __call__(self, u) -> complex:
        return complex(np.prod(self.factors @ np.asarray(u)))


def chow_form_points(config: PointConfiguration) -> ChowFormPoints:
    return ChowFormPoints(np.array(config.points, dtype=complex))


def _factor_blocks(form: ChowFormPoints, td: TorusData):
    """Weight block of every factor; raises if a factor mixes weights."""
    labels = td.block_of()
    out = []
    for f in form.factors:
        support = np.flatnonzero(np.abs(f) > 1e-14 * np.abs(f).max())
        blocks = set(labels[support])
        if len(blocks) != 1:
            raise ValueError("configuration not T-invariant")
        out.append(blocks.pop())
    return out


@dataclass(frozen=True)
class WeightVector:
    chi: tuple
    homothety: int | None = None

    def __add__(self, other):
        h = None if self.homothety is None else self.homothety + other.homothety
        return WeightVector(tuple(a + b for a, b in zip(self.chi, other.chi)), h)


def block_exponents(form: ChowFormPoints, td: TorusData) -> np.ndarray:
    """Number of factors in each weight block (the multidegree per block)."""
    counts = np.zeros(len(td.blocks), dtype=int)
    for b in _factor_blocks(form, td):
        counts[b] += 1
    return counts


def chow_weight(form: ChowFormPoints, td: TorusData) -> WeightVector:
    """Torus weight of the Chow form, in exact integers."""
    counts = block_exponents(form, td)
    chi = [int(sum(int(c) * int(w[k]) for c, w in zip(counts, td.block_weights)))
           for k in range(td.rank)]
    return WeightVector(tuple(chi))


def lift_character(chi: WeightVector, d: int, n: int) -> WeightVector:
    """Extend to ``C^* x T`` with homothety weight ``d (n + 1)``."""
    if d < 1:
        raise ValueError("degree must be positive")
    return WeightVector(tuple(chi.chi), d * (n + 1))


def unlift_character(chi: WeightVector) -> WeightVector:
    return WeightVector(tuple(chi.chi))


def character_representative(form: ChowFormPoints, td: TorusData) -> np.ndarray:
    """Hermitian element of ``1 + t`` representing the lifted Chow weight.

    The weight pairs with a block-scalar diagonal ``xi`` as
    ``sum_B e_B xi_B``; the representative is the diagonal with ``e_B / N_B``
    on block ``B``, projected onto ``1 + t``.
    """
    counts = block_exponents(form, td)
    diag = np.empty(td.dim)
    for c, b in zip(counts, td.blocks):
        diag[list(b)] = c / len(b)
    return project(np.diag(diag).astype(complex), basis_t_tilde(td))


def alpha_sigma(sigma, G_value: float, td: TorusData | None = None) -> np.ndarray:
    """``G(sigma) sigma^-1 (sigma^-1)^*``, Hermitian and positive definite."""
    sigma = np.asarray(sigma, dtype=complex)
    if td is not None and not is_block_scalar(sigma, td):
        raise ValueError("sigma must lie in T^c")
    if not G_value > 0:
        raise ValueError("G(sigma) must be positive")
    inv = np.linalg.inv(sigma)
    return G_value * inv @ inv.conj().T


def _angle(A, B) -> float:
    a, b = _to_real([A])[0], _to_real([B])[0]
    c = np.clip(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1.0, 1.0)
    # arccos is ill-conditioned near 1; use the sine of the angle instead
    s = np.linalg.norm(a / np.linalg.norm(a) - c * b / np.linalg.norm(b))
    return float(math.atan2(s, c))


def calibrate_kappa(opts: SolverOptions | None = None) -> float:
    """Ratio between alpha^sigma and the lifted Chow weight on the reference."""
    from .torus_action import build_torus
    config = PointConfiguration(REFERENCE_CONFIGURATION)
    td = build_torus(REFERENCE_WEIGHTS)
    a, sigma, _ = solve_optimal_weight(config, td, None, opts)
    alpha = alpha_sigma(sigma, functional_G(config, None, None, a, td), td)
    rep = character_representative(chow_form_points(config), td)
    return float(np.vdot(rep, alpha).real / np.vdot(rep, rep).real)


def verify_character_identity(config: PointConfiguration, td: TorusData,
                              opts: SolverOptions | None = None,
                              kappa_char: float = KAPPA_CHAR) -> dict:
    """Compare ``alpha^sigma`` at the optimal weight with the exact Chow weight."""
    opts = opts or SolverOptions(tol=1e-12)
    form = chow_form_points(config)
    chi = chow_weight(form, td)
    lifted = lift_character(chi, config.degree, 0)
    exponents = block_exponents(form, td)
    report = {
        "chow_weight": list(chi.chi),
        "block_exponents": exponents.tolist(),
        "homothety_weight": lifted.homothety,
        "kappa_char": kappa_char,
    }
    a, sigma, trace = solve_optimal_weight(config, td, None, opts)
    report["optimal_weight_status"] = trace.status
    if trace.status == DIVERGED:
        report.update({"status": "destabilized, identity vacuous", "success": False,
                       "ray": trace.ray.tolist()})
        return report
    G_val = functional_G(config, None, None, a, td)
    alpha = alpha_sigma(sigma, G_val, td)
    rep = character_representative(form, td)
    in_t = np.linalg.norm(alpha - project(alpha, basis_t_tilde(td)))
    angle = _angle(alpha, rep)
    implied = float(np.vdot(rep, alpha).real / np.vdot(rep, rep).real)
    scaled = alpha / kappa_char
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            rational = rationality_check(scaled, td, 4 * config.degree)
        except ValueError:
            rational = None
    report.update({
        "a_star": a.tolist(),
        "sigma_star": np.diag(sigma).real.tolist(),
        "G_sigma": G_val,
        "alpha_sigma": np.diag(alpha).real.tolist(),
        "alpha_projection_residual": float(in_t),
        "angle_residual": angle,
        "implied_kappa": implied,
        "rational": None if rational is None else [str(f) for f in rational],
        "homothety_match": abs(np.trace(alpha).real - kappa_char * lifted.homothety) < 1e-6 * lifted.homothety,
    })
    report["status"] = "verified" if angle < 1e-6 and in_t < 1e-10 else "mismatch"
    report["success"] = report["status"] == "verified"
    return report


def denominators(fracs) -> int:
    return math.lcm(*(Fraction(f).denominator for f in fracs))
