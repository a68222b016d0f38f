import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nhgikn.exponents import (CenterCocycle, birkhoff_center_average, center_exponent_periodic,
                              measure_center_exponent, periodic_splitting, qr_lyapunov_spectrum)
from nhgikn.measures import AtomicMeasure
from nhgikn.systems import CAT_MATRIX, LinearToral, SkewCircleExtension

unit = st.floats(0, 1, allow_nan=False, exclude_max=True)


def _roots_oracle():
    return np.sort(np.log(np.abs(np.roots([1.0, -5.0, 6.0, -1.0]))))[::-1]


def test_m3_spectrum_against_root_oracle(m3):
    spec = qr_lyapunov_spectrum(m3, np.array([0.1, 0.2, 0.3]), n=10_000)
    assert np.max(np.abs(spec.exponents - _roots_oracle())) < 1e-4
    assert spec.exponents.sum() == pytest.approx(0.0, abs=1e-10)


def test_skew_spectrum_center_matches_birkhoff(skew):
    x = np.array([0.3, 0.1, 0.7])
    spec = qr_lyapunov_spectrum(skew, x, n=2000, burn_in=100)
    base = np.log(np.sort(np.abs(np.linalg.eigvals(np.array(CAT_MATRIX, float)))))
    assert spec.exponents[0] == pytest.approx(base[1], abs=1e-6)
    assert spec.exponents[2] == pytest.approx(base[0], abs=1e-6)


@settings(max_examples=25)
@given(x=st.tuples(unit, unit, unit))
def test_rotation_center_exponent_vanishes(rotation, x):
    assert abs(birkhoff_center_average(rotation, np.array(x), 500)) < 1e-10


def test_m3_periodic_center_exponent(m3):
    lam = center_exponent_periodic(m3, np.zeros((1, 3)))
    assert lam == pytest.approx(_roots_oracle()[1], abs=1e-12)


def test_skew_sup_norm_closed_form(skew):
    k = 2 * np.pi * 0.05
    assert CenterCocycle(skew).sup_norm() == pytest.approx(-np.log(1 - k), rel=1e-14)
    assert CenterCocycle(skew).sup_norm() == pytest.approx(0.37711, abs=1e-5)


def test_sampled_cocycle_matches_exact_on_skew(skew):
    # the sampled splitting route must agree with the closed form where both exist
    cc = CenterCocycle(skew)
    pts = np.array([[0.1, 0.2, 0.3], [0.7, 0.4, 0.05]])
    exact = cc.at_points(pts)
    cc.exact = False
    assert np.allclose(cc.at_points(pts), exact, atol=1e-8)


def test_da_sup_norm_sees_the_ball(da):
    cc = CenterCocycle(da)
    assert cc.sup_norm() >= 1.05 * abs(cc.at_points(np.zeros(3))[0]) - 1e-12


def test_periodic_splitting_invariant(da):
    sp = periodic_splitting(da, np.zeros((1, 3)))
    assert np.allclose(np.abs(sp.jacobians[0] @ sp.e_c[0]) / np.linalg.norm(sp.jacobians[0] @ sp.e_c[0]),
                       np.abs(sp.e_c[0]), atol=1e-10)


def test_measure_center_exponent_of_fixed_point(m3):
    mu = AtomicMeasure.periodic_orbit(np.zeros((1, 3)))
    assert measure_center_exponent(m3, mu) == pytest.approx(_roots_oracle()[1], abs=1e-10)


def test_linear_center_log_derivative_is_constant():
    m = LinearToral([[2, 1, 0], [1, 2, 1], [0, 1, 1]])
    vals = CenterCocycle(m).at_points(np.random.default_rng(0).random((5, 3)))
    assert np.ptp(vals) < 1e-12


def test_skew_rejects_two_dim_cocycle():
    with pytest.raises(ArithmeticError):
        CenterCocycle(LinearToral(CAT_MATRIX))


def test_skew_zero_coupling_fiber_average():
    m = SkewCircleExtension(CAT_MATRIX, 0.0, 0.05)
    # fiber is driven by the base only through nothing: theta_{n+1} = theta + eps sin(2 pi theta)
    assert birkhoff_center_average(m, np.array([0.1, 0.2, 0.3]), 4000) < 0
