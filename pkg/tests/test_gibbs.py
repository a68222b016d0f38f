import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nhgikn.gibbs import estimate_tau0, first_time_above, leb_center_exponent, sample_u_gibbs

ANCHOR = np.array([0.3, 0.6, 0.2])


def naive_first_time(trace, level):
    n = len(trace)
    for N in range(1, n + 1):
        if all(trace[k - 1] > level for k in range(N, n + 1)):
            return N
    return None


@given(st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=40), st.floats(-1, 1))
def test_first_time_above_matches_definition(values, level):
    assert first_time_above(np.array(values), level) == naive_first_time(values, level)


@pytest.fixture(scope="module")
def da_samples():
    from nhgikn.systems import M3_MATRIX, DAModel
    da = DAModel(M3_MATRIX, radius=0.12, strength=0.9)
    return sample_u_gibbs(da, ANCHOR, 0.03, 2000, 6, seed=0)


def test_da_is_mostly_expanding(da_samples):
    rep = estimate_tau0(da_samples)
    assert rep.mostly_expanding
    assert rep.tau0_hat == pytest.approx(0.5 * min(s.center_average for s in da_samples))
    assert rep.N0_hat is not None and rep.N0_hat >= 1
    for s in da_samples:
        assert np.all(s.trace[rep.N0_hat - 1:] > rep.tau0_hat + rep.delta)


def test_samples_are_seeded(da_samples):
    from nhgikn.systems import M3_MATRIX, DAModel
    again = sample_u_gibbs(DAModel(M3_MATRIX, radius=0.12, strength=0.9), ANCHOR, 0.03, 2000, 6, seed=0, threads=3)
    assert [s.center_average for s in again] == [s.center_average for s in da_samples]


def test_skew_is_not_mostly_expanding(skew):
    rep = estimate_tau0(sample_u_gibbs(skew, ANCHOR, 0.03, 2000, 4))
    assert not rep.mostly_expanding
    assert rep.N0_hat is None and rep.min_average < 0


def test_horizon_guard(skew):
    with pytest.raises(ValueError):
        sample_u_gibbs(skew, ANCHOR, 0.03, 100, 4)


def test_lebesgue_rotation_exponent_zero(rotation):
    est = leb_center_exponent(rotation, 500, 4)
    assert abs(est.mean) < 1e-12
