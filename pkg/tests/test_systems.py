import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhgikn.systems import (CAT_MATRIX, M3_MATRIX, DAModel, IdentityMap, LinearToral, ModelError,
                            SkewCircleExtension, bump, model_from_config, orbit_segment)
from nhgikn.torus import torus_distance

unit = st.floats(0, 1, allow_nan=False, exclude_max=True)
pt3 = st.tuples(unit, unit, unit).map(np.array)


def _models():
    return [LinearToral(M3_MATRIX),
            SkewCircleExtension(CAT_MATRIX, 0.1, 0.05, [{"k": [1, 0], "cos": 0.02, "sin": 0.01}]),
            DAModel(M3_MATRIX, radius=0.12, strength=0.9)]


@pytest.mark.parametrize("model", _models(), ids=["linear", "skew", "da"])
@given(x=pt3)
def test_inverse_undoes_map(model, x):
    assert torus_distance(model.inverse(model.evaluate(x)), x) < 1e-12


@pytest.mark.parametrize("model", _models(), ids=["linear", "skew", "da"])
@given(x=pt3)
def test_differential_matches_finite_differences(model, x):
    h = 1e-6
    J = model.differential(x)
    fd = np.array([(model.lift(x + h * e) - model.lift(x - h * e)) / (2 * h) for e in np.eye(3)]).T
    assert np.max(np.abs(J - fd)) < 1e-6


@pytest.mark.parametrize("model", _models(), ids=["linear", "skew", "da"])
def test_inverse_differential_is_matrix_inverse(model):
    x = np.array([0.03, 0.71, 0.42])
    Ji = model.inverse_differential(model.evaluate(x))
    assert np.allclose(Ji @ model.differential(x), np.eye(3), atol=1e-10)


def test_m3_spectrum_matches_characteristic_roots():
    roots = np.sort(np.abs(np.roots([1, -5, 6, -1])))[::-1]
    assert np.allclose(np.abs(LinearToral(M3_MATRIX).eigenvalues), roots, rtol=1e-12)


def test_linear_requires_unimodular():
    with pytest.raises(ModelError):
        LinearToral([[2, 0], [0, 1]])


def test_skew_rejects_noninvertible_fiber_and_elliptic_base():
    with pytest.raises(ModelError):
        SkewCircleExtension(CAT_MATRIX, 0.0, 0.2)
    with pytest.raises(ModelError):
        SkewCircleExtension([[1, 1], [0, 1]], 0.0, 0.05)


def test_skew_center_derivative_closed_form(skew):
    x = np.array([0.2, 0.3, 0.1])
    assert skew.center_log_derivative(x) == pytest.approx(np.log(1 + 2 * np.pi * 0.05 * np.cos(0.2 * np.pi)))


def test_da_is_linear_outside_the_ball(da, m3):
    x = np.array([0.5, 0.5, 0.5])
    assert np.allclose(da.lift(x), m3.lift(x))
    assert np.allclose(da.differential(x), m3.matrix)


def test_da_center_contracts_at_the_origin(da):
    ev = np.sort(np.abs(np.linalg.eigvals(da.differential(np.zeros(3)))))
    assert ev[1] < 1 < ev[2] and ev[0] < ev[1]


def test_bump_is_c2_at_the_edge():
    r = 0.1
    # vanishes to third order at the boundary and is zero outside
    h = np.array([1e-3, 1e-4])
    ratio = bump(r - h, r) / h**3
    assert ratio[1] == pytest.approx(ratio[0], rel=0.05)
    assert bump(r, r) == 0.0 and bump(r + 1e-4, r) == 0.0
    assert bump(0.0, r) == 1.0


def test_identity_is_identity():
    m = IdentityMap(3)
    x = np.array([0.1, 0.2, 0.3])
    assert np.allclose(m.evaluate(x), x)


def test_orbit_segment_backward_matches_inverse(m3):
    x = np.array([0.1, 0.2, 0.3])
    back = orbit_segment(m3, x, -3)
    assert torus_distance(m3.orbit(back[-1], 3)[-1], x) < 1e-12


def test_orbit_cap_enforced(m3):
    with pytest.raises(ModelError):
        orbit_segment(m3, np.zeros(3), 10, cap=5)


@pytest.mark.parametrize("model", _models() + [IdentityMap(3)], ids=["linear", "skew", "da", "identity"])
def test_config_round_trip(model):
    again = model_from_config(model.to_config())
    x = np.array([0.013, 0.27, 0.88])
    assert np.allclose(again.evaluate(x), model.evaluate(x))


def test_config_rejects_unknown_keys():
    with pytest.raises(ModelError, match="frobnicate"):
        model_from_config({"type": "linear", "matrix": CAT_MATRIX, "frobnicate": 1})
    with pytest.raises(ModelError, match="unknown model type"):
        model_from_config({"type": "henon"})
