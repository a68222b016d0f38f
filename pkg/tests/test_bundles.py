import numpy as np
import pytest

from nhgikn.bundles import (SplittingError, estimate_splitting, estimate_unstable_direction, line_angle,
                            orbit_splitting, verify_partial_hyperbolicity)
from nhgikn.systems import IdentityMap


def test_m3_splitting_matches_eigenvectors(m3):
    sp = estimate_splitting(m3, np.array([0.1, 0.2, 0.3]))
    order = np.argsort(np.abs(m3.eigenvalues))  # s, c, u
    V = np.real(m3.eigenvectors[:, order])
    assert line_angle(sp.e_s, V[:, 0]) < 1e-10
    assert line_angle(sp.e_c, V[:, 1]) < 1e-10
    assert line_angle(sp.e_u, V[:, 2]) < 1e-10


def test_splitting_is_invariant_on_da(da):
    sp = orbit_splitting(da, np.array([0.05, 0.02, 0.01]), 5, 60)
    for name in ("e_s", "e_c", "e_u"):
        e = getattr(sp, name)
        img = np.einsum("kij,kj->ki", sp.jacobians[:-1], e[:-1])
        assert np.max(line_angle(img, e[1:])) < 1e-8, name


def test_unstable_direction_has_unit_norm(da):
    tv = estimate_unstable_direction(da, np.array([0.4, 0.1, 0.9]))
    assert np.linalg.norm(tv.dir) == pytest.approx(1.0)
    assert tv.residual < 1e-6


def test_m3_certificate_valid(m3):
    cert = verify_partial_hyperbolicity(m3, grid_resolution=3, n=8)
    assert cert.valid and cert.failure is None
    # sup of the four ratios for a linear map is max(|mu_c|/|mu_u|, |mu_s|/|mu_c|, |mu_s|, 1/|mu_u|)
    mu = np.sort(np.abs(m3.eigenvalues))
    assert cert.lam_hat == pytest.approx(max(mu[1] / mu[2], mu[0] / mu[1], mu[0], 1 / mu[2]), rel=1e-8)
    assert cert.lam_hat == pytest.approx(0.4789, abs=1e-4)


def test_da_certificate_valid(da):
    assert verify_partial_hyperbolicity(da, grid_resolution=4, n=8).valid


def test_identity_certificate_invalid():
    cert = verify_partial_hyperbolicity(IdentityMap(3), grid_resolution=2, n=4)
    assert not cert.valid
    assert "fails" in cert.failure


def test_identity_splitting_rejected():
    with pytest.raises(SplittingError):
        estimate_splitting(IdentityMap(3), np.zeros(3))


def test_bad_lookback():
    with pytest.raises(ValueError):
        orbit_splitting(IdentityMap(3), np.zeros(3), 0, 0)
