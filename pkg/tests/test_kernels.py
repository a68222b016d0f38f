import os
import subprocess
import sys

import numpy as np
import pytest

from nhgikn import kernels
from nhgikn.systems import CAT_MATRIX, M3_MATRIX, DAModel, SkewCircleExtension

IMPLS = kernels.implementations()
needs_ext = pytest.mark.skipif("cython" not in IMPLS, reason="compiled extension not built")


def test_extension_selected_by_default():
    assert kernels.BACKEND in ("cython", "python")
    if "cython" in IMPLS and os.environ.get("NHGIKN_PURE_PYTHON") != "1":
        assert kernels.BACKEND == "cython"


def test_env_var_forces_fallback():
    env = dict(os.environ, NHGIKN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from nhgikn import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(3)
    da = DAModel(M3_MATRIX, radius=0.12, strength=0.9)
    J = da.differential(da.orbit(np.array([0.01, 0.02, 0.03]), 299))
    return rng, da, J


@needs_ext
def test_orbits_agree(data):
    rng, da, _ = data
    M = np.array(M3_MATRIX, float)
    sk = SkewCircleExtension(CAT_MATRIX, 0.1, 0.05, [{"k": [1, 0], "cos": 0.02, "sin": 0.01}])
    c = sk.coupling
    x = rng.random(3)
    py, cy = IMPLS["python"], IMPLS["cython"]
    # chaotic orbits: compare over a horizon where rounding differences stay small
    for fn in (lambda im: kernels.affine_orbit(M, x, 15, impl=im),
               lambda im: kernels.skew_orbit(sk.base, 0.1, 0.05, c.modes, c.cos, c.sin, x, 15, impl=im),
               lambda im: kernels.da_orbit(M, da.center, da.radius, da.strength, da.lc, da.ec, x, 15, impl=im)):
        assert np.max(np.abs(fn(py) - fn(cy))) < 1e-6


@needs_ext
def test_cocycle_kernels_agree(data):
    _, _, J = data
    py, cy = IMPLS["python"], IMPLS["cython"]
    a1, Q1 = kernels.qr_log_diagonals(J, impl=py)
    a2, Q2 = kernels.qr_log_diagonals(J, impl=cy)
    assert np.allclose(a1, a2, rtol=1e-10) and np.allclose(Q1, Q2, atol=1e-8)
    v1, l1 = kernels.push_path(J, np.ones(3), impl=py)
    v2, l2 = kernels.push_path(J, np.ones(3), impl=cy)
    assert np.allclose(v1, v2, atol=1e-10) and np.allclose(l1, l2, atol=1e-10)
    w1, m1 = kernels.push_direction(J, np.ones(3), impl=py)
    w2, m2 = kernels.push_direction(J, np.ones(3), impl=cy)
    assert np.allclose(w1, w2, atol=1e-10) and np.allclose(m1, m2, atol=1e-10)


def _dense_cyclic(J, b):
    P, d, _ = J.shape
    A = np.zeros((P * d, P * d))
    for i in range(P):
        A[i * d:(i + 1) * d, i * d:(i + 1) * d] += J[i]
        j = (i + 1) % P
        A[i * d:(i + 1) * d, j * d:(j + 1) * d] -= np.eye(d)
    return np.linalg.solve(A, b.reshape(-1)).reshape(P, d)


@pytest.mark.parametrize("name", sorted(IMPLS))
@pytest.mark.parametrize("P", [1, 2, 7, 40])
def test_cyclic_solver_matches_dense(name, P):
    rng = np.random.default_rng(P)
    J = rng.standard_normal((P, 3, 3)) + 2 * np.eye(3)
    b = rng.standard_normal((P, 3))
    Rs, Gs, Bs, cs, G, H, c = kernels.cyclic_qr_factor(J, b, impl=IMPLS[name])
    X = kernels.cyclic_back_substitute(Rs, Gs, Bs, cs, np.linalg.solve(G + H, c), impl=IMPLS[name])
    assert np.allclose(X, _dense_cyclic(J, b), atol=1e-9)


@pytest.mark.parametrize("name", sorted(IMPLS))
def test_cyclic_solver_stable_under_exponential_growth(name, data):
    _, _, J = data  # products of these grow like e^{1.18 k}
    b = np.random.default_rng(0).standard_normal((len(J), 3))
    Rs, Gs, Bs, cs, G, H, c = kernels.cyclic_qr_factor(J, b, impl=IMPLS[name])
    X = kernels.cyclic_back_substitute(Rs, Gs, Bs, cs, np.linalg.solve(G + H, c), impl=IMPLS[name])
    res = np.einsum("kij,kj->ki", J, X) - np.roll(X, -1, axis=0) - b
    assert np.max(np.abs(res)) < 1e-10
