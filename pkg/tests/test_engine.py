import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from nhgikn.engine import (NO_RESERVOIR, GiknError, GiknParams, compute_constants, gikn_step, mn_window,
                           run_gikn, select_mn)
from nhgikn.gibbs import estimate_tau0, sample_u_gibbs
from nhgikn.measures import goodness_check
from nhgikn.orbits import PeriodicOrbit, annotate

ANCHOR = [0.3, 0.6, 0.2]


def params(phi, tau0, **kw):
    return GiknParams(phi_sup=phi, tau0=tau0, N0=1, rho=1 / (2 * phi), eta=(2 * phi - tau0) / (2 * phi), **kw)


def brute_mn(lam, delta, phi, n_min=1):
    lo = (2 * phi + 2 * delta - lam) / (-lam - 2 * delta)
    hi = (2 * phi + 3 * delta - lam) / (-lam - 3 * delta)
    for n in range(n_min, 100000):
        for m in range(1, int(hi * n) + 2):
            if lo * n < m < hi * n:
                return m, n


@given(lam=st.floats(-2, -0.01), frac=st.floats(0.01, 0.24), phi=st.floats(0.05, 3), n_min=st.integers(1, 50))
def test_select_mn_matches_enumeration(lam, frac, phi, n_min):
    delta = frac * abs(lam)
    lo, hi = mn_window(lam, delta, phi)
    assume(hi - lo > 1e-3)
    m, n = select_mn(lam, delta, phi, n_min)
    assert (m, n) == brute_mn(lam, delta, phi, n_min)
    assert lo < m / n < hi and m / n > 2 * phi / abs(lam)


def test_select_mn_worked_example():
    # lambda_q = -1, delta = 0.1, |phi|_0 = 1.5: window (4.2/0.8, 4.3/0.7) = (5.25, 6.142...)
    lo, hi = mn_window(-1.0, 0.1, 1.5)
    assert lo == pytest.approx(5.25) and hi == pytest.approx(4.3 / 0.7)
    assert select_mn(-1.0, 0.1, 1.5) == (6, 1)
    assert select_mn(-1.0, 0.1, 1.5, n_min=2) == (11, 2)


def test_select_mn_rejects_bad_inputs():
    with pytest.raises(ValueError):
        select_mn(0.1, 0.01, 1.0)
    with pytest.raises(ValueError):
        select_mn(-1.0, 0.3, 1.0)


def test_eta_limits():
    assert params(1.0, 1.0).eta == 0.5
    assert params(1.0, 1e-9).eta == pytest.approx(1.0)
    with pytest.raises(ValueError):
        GiknParams(phi_sup=1.0, tau0=0.5, N0=1, rho=0.4, eta=0.75)
    with pytest.raises(ValueError):
        params(1.0, 0.5, delta_fraction=0.25)


def test_schedules():
    p = params(0.77, 0.22, eps0=1.0, d0=0.02)
    assert [p.eps(k) for k in (1, 2, 3)] == [0.5, 0.25, 0.125]
    assert p.d_for(0.5) == 0.02 and p.d_for(0.01) == 0.005
    assert p.kappa_for(-0.4) == pytest.approx(1 - 0.4 / 0.77)


def test_no_reservoir_on_skew(skew):
    rep = estimate_tau0(sample_u_gibbs(skew, ANCHOR, 0.03, 2000, 4))
    with pytest.raises(GiknError, match="no expansion reservoir") as exc:
        compute_constants(skew, None, rep)
    assert exc.value.stage == "constants" and NO_RESERVOIR in str(exc.value)


@pytest.fixture(scope="module")
def da_setup():
    from nhgikn.systems import M3_MATRIX, DAModel
    da = DAModel(M3_MATRIX, radius=0.12, strength=0.9)
    rep = estimate_tau0(sample_u_gibbs(da, ANCHOR, 0.03, 3000, 16))
    P = compute_constants(da, None, rep, d0=0.02, seed=1)
    p1 = annotate(da, PeriodicOrbit.from_points(da, np.zeros((1, 3))))
    return da, P, p1


def test_da_constants(da_setup):
    da, P, p1 = da_setup
    assert P.phi_sup == pytest.approx(0.770, abs=2e-3)
    assert 0 < P.tau0 <= P.phi_sup and 0.5 <= P.eta < 1
    assert p1.lambda_c < 0


def test_precondition_rejects_expanding_center(da_setup, m3):
    _, P, _ = da_setup
    q = annotate(m3, PeriodicOrbit.from_points(m3, np.zeros((1, 3))))
    with pytest.raises(GiknError) as exc:
        gikn_step(m3, q, P, 0.5)
    assert exc.value.stage == "precondition"


@pytest.fixture(scope="module")
def da_step(da_setup):
    da, P, p1 = da_setup
    return gikn_step(da, p1, P, P.eps(1), index=1)


def test_da_step_invariants(da_setup, da_step):
    da, P, p1 = da_setup
    s = da_step
    lam_q = p1.lambda_c
    assert P.eta * lam_q < s.lambda_p < 0
    assert s.time_proportion == s.m / (s.m + s.n + s.N_d)
    assert s.time_proportion >= 1 + lam_q / (2 * P.phi_sup)
    assert s.goodness.kappa >= 1 - 2 * P.rho * abs(lam_q) and s.goodness.verified
    assert s.p.period == s.m + s.n + s.N_d and s.p.residual < 1e-10
    assert s.gap < s.d and s.p.shadowing_distance <= P.L_max * s.gap
    lo, hi = mn_window(lam_q, s.delta, P.phi_sup)
    assert lo < s.m / s.n < hi


def test_goodness_report_is_reproducible(da_setup, da_step):
    da, _, p1 = da_setup
    again = goodness_check(da, da_step.p, p1, da_step.eps)
    assert again.kappa == da_step.goodness.kappa


def test_single_step_run_matches_step(da_setup, da_step):
    da, P, p1 = da_setup
    run = run_gikn(da, p1, 1, P)
    assert not run.truncated and len(run.steps) == 1
    assert np.array_equal(run.steps[0].p.points, da_step.p.points)
    assert run.limit.passed and run.final_ok is None
    assert run.decay_ratios == [abs(da_step.lambda_p) / abs(p1.lambda_c)]


def test_truncated_run_keeps_verified_prefix(da_setup, da_step):
    da, P, p1 = da_setup
    run = run_gikn(da, p1, 2, P)
    assert run.truncated and run.failure["step"] == 2
    assert len(run.steps) == 1 and not run.passed
    d = run.to_dict()
    assert d["diagnostics"]["truncated"] and d["diagnostics"]["failure"]["stage"]
    assert len(run.plot_rows()) == 2
    assert math.isnan(run.plot_rows()[0][4])
