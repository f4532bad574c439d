import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chow_balance.chow_characters import (KAPPA_CHAR, WeightVector, alpha_sigma, block_exponents,
                                          calibrate_kappa, character_representative, chow_form_points,
                                          chow_weight, denominators, lift_character, unlift_character,
                                          verify_character_identity)
from chow_balance.embedded_variety import PointConfiguration
from chow_balance.torus_action import build_torus


def test_expand_three_points():
    form = chow_form_points(PointConfiguration([[1, 0], [0, 1], [1, 1]]))
    assert form.degree == 3
    assert form.expand() == {(2, 1): 1, (1, 2): 1}


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2))
def test_expansion_evaluates_like_product(u):
    form = chow_form_points(PointConfiguration([[1, 2], [0, 1], [3, -1], [1, 1j]]))
    poly = form.expand()
    val = sum(c * np.prod(np.power(u, e)) for e, c in poly.items())
    assert val == pytest.approx(form(u), abs=1e-9)


def test_chow_weight_and_exponents(three_points):
    var, td = three_points
    form = chow_form_points(var)
    assert chow_weight(form, td) == WeightVector((-1,))
    # per coordinate: one factor on u0 (weight 1), two on u1 (weight -1)
    ex = block_exponents(form, td)
    assert dict(zip(map(tuple, td.block_weights.tolist()), ex.tolist())) == {(1,): 1, (-1,): 2}
    with pytest.raises(ValueError, match="not T-invariant"):
        chow_weight(chow_form_points(PointConfiguration([[1, 1]])), td)


def test_lifting():
    chi = WeightVector((-1,))
    lifted = lift_character(chi, 3, 0)
    assert lifted.homothety == 3
    assert unlift_character(lifted) == chi
    assert (lifted + lifted).homothety == 6
    with pytest.raises(ValueError):
        lift_character(chi, 0, 1)


def test_character_representative(three_points):
    var, td = three_points
    rep = character_representative(chow_form_points(var), td)
    assert np.allclose(rep, np.diag([1.0, 2.0]))


def test_alpha_sigma_checks(three_points):
    _, td = three_points
    with pytest.raises(ValueError, match="T\\^c"):
        alpha_sigma(np.array([[1, 1], [0, 1]]), 1.0, td)
    with pytest.raises(ValueError, match="positive"):
        alpha_sigma(np.eye(2), 0.0)


def test_calibration():
    assert calibrate_kappa() == pytest.approx(KAPPA_CHAR, abs=1e-12)


def test_identity_three_points(three_points):
    var, td = three_points
    rep = verify_character_identity(var, td)
    assert rep["success"]
    assert np.allclose(rep["alpha_sigma"], [2, 4], atol=1e-6)
    assert rep["G_sigma"] == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert rep["angle_residual"] < 1e-6
    assert rep["homothety_match"]
    assert rep["rational"] == ["2", "1"]
    assert denominators(rep["rational"]) == 1


@pytest.mark.parametrize("k", [1, 2, 3])
def test_identity_four_point_family(k):
    var = PointConfiguration([[1, 0]] * k + [[0, 1]] * (4 - k))
    rep = verify_character_identity(var, build_torus([1, -1]))
    assert rep["success"]
    assert np.allclose(rep["alpha_sigma"], [2 * k, 2 * (4 - k)], atol=1e-6)


def test_identity_vacuous_when_destabilized():
    var = PointConfiguration([[1, 0]] * 2)
    rep = verify_character_identity(var, build_torus([1, -1]))
    assert rep["status"].startswith("destabilized") and not rep["success"]
