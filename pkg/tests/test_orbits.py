import numpy as np
import pytest

from nhgikn.orbits import (GapError, PeriodicOrbit, PseudoOrbit, ShadowingError, annotate,
                           build_gikn_pseudo_orbit, classify_periodic, liao_gan_sums, minimal_period_points,
                           newton_close, orbit_rows, periodic_census, same_orbit, step_defects)
from nhgikn.systems import IdentityMap


def det_oracle(A, k):
    A = np.array(A, dtype=np.int64)
    M = np.linalg.matrix_power(A, k) - np.eye(len(A), dtype=np.int64)
    return abs(int(round(np.linalg.det(M.astype(float)))))


def test_cat_census_counts(cat):
    census = periodic_census(cat, 4, grid_resolution=32)
    for k in range(1, 5):
        assert census.count_points(k) == det_oracle(cat.matrix, k)
    assert [census.count_points(k) for k in range(1, 5)] == [1, 5, 16, 45]
    assert max(o.residual for o in census.all_orbits()) < 1e-12


def perturbed_orbit(model, orbit, gap, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(orbit.shape)
    return PseudoOrbit.from_points(model, orbit + gap * v / np.linalg.norm(v, axis=1, keepdims=True))


@pytest.mark.parametrize("name", ["cat", "m3"])
def test_shadowing_distance_proportional_to_gap(name, request):
    model = request.getfixturevalue(name)
    orbit = periodic_census(model, 3, grid_resolution=8).orbits[3][0].points
    ratios = []
    for gap in (1e-2, 1e-3, 1e-4):
        po = perturbed_orbit(model, orbit, gap, 0)
        p = newton_close(model, po, L_max=None)
        assert p.residual < 1e-12
        ratios.append(p.shadowing_distance / po.gap)
    assert max(ratios) / min(ratios) < 2.0
    assert max(ratios) < 10.0


def test_newton_close_recovers_fixed_point(m3):
    p = newton_close(m3, PseudoOrbit.from_points(m3, [[0.01, -0.02, 0.005]]))
    assert np.max(np.minimum(p.points, 1 - p.points)) < 1e-12


def test_gap_checks(m3):
    po = PseudoOrbit.from_points(m3, [[0.3, 0.3, 0.3]])
    with pytest.raises(GapError):
        newton_close(m3, po, d0=0.01)
    with pytest.raises(GapError):
        newton_close(m3, PseudoOrbit.from_points(m3, [[0.0, 0.0, 0.0]], cyclic=False))


def test_escape_detected(m3):
    po = PseudoOrbit.from_points(m3, [[0.3, 0.3, 0.3]])
    with pytest.raises(ShadowingError):
        newton_close(m3, po, L_max=1e-3)


def test_identity_closes_by_least_squares():
    # G + H is singular; the least-squares branch still returns a genuine fixed-point orbit
    m = IdentityMap(3)
    p = newton_close(m, PseudoOrbit.from_points(m, [[0.1, 0.2, 0.3], [0.1, 0.2, 0.30001]]), continuation=False)
    assert p.residual < 1e-12


def test_classification(m3, da, rotation):
    c = classify_periodic(m3, np.zeros((1, 3)))
    assert c.stable_index == 1 and not c.marginal
    assert classify_periodic(da, np.zeros((1, 3))).stable_index == 2
    assert classify_periodic(rotation, PeriodicOrbit.from_points(rotation, [[0.0, 0.0, 0.0]]).points).marginal


def test_rotation_census_is_nonhyperbolic():
    from nhgikn.systems import CAT_MATRIX, SkewCircleExtension
    m = SkewCircleExtension(CAT_MATRIX, 0.5, 0.0)
    census = periodic_census(m, 2, grid_resolution=6)
    assert census.all_orbits() and all(o.marginal for o in census.all_orbits())


def test_minimal_period_and_same_orbit():
    pts = np.array([[0.1, 0.2], [0.3, 0.4]])
    assert len(minimal_period_points(np.concatenate([pts, pts]))) == 2
    assert same_orbit(pts, pts[::-1])
    assert not same_orbit(pts, pts + 0.01)


def test_orbit_rows(m3):
    p = annotate(m3, PeriodicOrbit.from_points(m3, np.zeros((1, 3))))
    rows = list(orbit_rows([p], 3))
    assert rows == [[0, 0, 0.0, 0.0, 0.0, 1, p.lambda_c, 1, 0.0]]


def test_step_defects_open_and_cyclic(m3):
    pts = m3.orbit(np.array([0.1, 0.2, 0.3]), 3)
    assert np.max(step_defects(m3, pts, cyclic=False)) < 1e-14
    assert len(step_defects(m3, pts, cyclic=True)) == 4


def test_gikn_pseudo_orbit_blocks(da):
    q = annotate(da, PeriodicOrbit.from_points(da, np.zeros((1, 3))))
    from nhgikn.bundles import estimate_unstable_direction
    u = estimate_unstable_direction(da, np.zeros(3)).dir
    x = 0.004 * u
    g = build_gikn_pseudo_orbit(da, q, x, m=30, n=3, d=0.02, max_time=60)
    L = g.pseudo.block_lengths()
    assert L["q"] == 30 and L["transit"] == 3 and L["closing"] == g.N_d
    assert len(g.pseudo) == 33 + g.N_d
    assert g.pseudo.gap < 0.02
    with pytest.raises(ValueError):
        build_gikn_pseudo_orbit(da, q, np.array([0.3, 0.3, 0.3]), 10, 3, 0.02)


def test_liao_gan_on_fixed_point(da):
    s = liao_gan_sums(da, PseudoOrbit.from_points(da, np.zeros((1, 3))))
    assert s["satisfied"] and s["center_partial_max"] < 0
