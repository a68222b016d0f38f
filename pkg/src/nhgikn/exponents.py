"""Lyapunov exponents: QR spectra, periodic center exponents, Birkhoff center averages."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .bundles import PLANE_SINE_MIN, OrbitSplitting, SplittingError, grid_points, orbit_splitting, orient
from .systems import MapModel, SkewCircleExtension
from .torus import wrap

QR_CHUNK = 65536
PHI_SAFETY = 1.05


class ExponentError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: np.ndarray
    n: int
    seed: int
    start: np.ndarray

    def to_dict(self):
        return {"exponents": [float(v) for v in self.exponents], "n": self.n, "seed": self.seed,
                "start": [float(v) for v in self.start]}


def _random_frame(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def _qr_accumulate(model, x, steps, Q):
    """Frame propagation along the orbit of x for `steps` steps, chunked to bound memory."""
    acc = np.zeros(model.dim)
    cur = np.asarray(x, dtype=float)
    left = steps
    while left > 0:
        k = min(left, QR_CHUNK)
        orb = model.orbit(cur, k)
        a, Q = kernels.qr_log_diagonals(model.differential(orb[:-1]), Q)
        acc += a
        cur = orb[-1]
        left -= k
    return acc, Q, cur


def qr_lyapunov_spectrum(model: MapModel, x, n: int = 10_000, seed: int = 0, burn_in: int = 100) -> LyapunovSpectrum:
    """Full spectrum by orthonormal frame propagation with per-step QR.

    The first ``burn_in`` steps only align the frame and are not averaged.
    """
    if n < 100:
        raise ValueError("qr_lyapunov_spectrum needs n >= 100")
    rng = np.random.default_rng(seed)
    x = wrap(np.asarray(x, dtype=float))
    Q = _random_frame(rng, model.dim)
    _, Q, cur = _qr_accumulate(model, x, burn_in, Q)
    acc, _, _ = _qr_accumulate(model, cur, n, Q)
    ex = acc / n
    if not np.all(np.isfinite(ex)):
        raise ExponentError("non-finite growth in QR propagation")
    return LyapunovSpectrum(exponents=np.sort(ex)[::-1], n=n, seed=seed, start=x)


def _cycle_jacobians(model, points):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return model.differential(pts)


def periodic_log_moduli(model: MapModel, points, tol: float = 1e-15, max_cycles: int = 400) -> np.ndarray:
    """log-moduli of the eigenvalues of the period cocycle, by repeated QR cycles around the orbit.

    Returned in decreasing order, not divided by the period.
    """
    J = _cycle_jacobians(model, points)
    Q = np.eye(model.dim)
    prev = None
    for _ in range(max_cycles):
        acc, Q = kernels.qr_log_diagonals(J, Q)
        if prev is not None and np.max(np.abs(acc - prev)) <= tol * max(1.0, np.max(np.abs(acc))):
            break
        prev = acc
    if not np.all(np.isfinite(acc)):
        raise ExponentError("non-finite period cocycle")
    return np.sort(acc)[::-1]


def center_exponent_periodic(model: MapModel, orbit) -> float:
    """lambda^c(p): log of the middle-modulus eigenvalue of the period cocycle over the period."""
    pts = getattr(orbit, "points", orbit)
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if model.dim != 3:
        raise ExponentError("center exponent needs a 3-dimensional model")
    lm = periodic_log_moduli(model, pts)
    if min(lm[0] - lm[1], lm[1] - lm[2]) < 1e-12:
        raise ExponentError("center not resolved: middle eigenvalue modulus coincides with a neighbor")
    return float(lm[1] / len(pts))


def periodic_splitting(model: MapModel, points, tol: float = 1e-15, max_cycles: int = 400,
                       seed: int = 0) -> OrbitSplitting:
    """Exact (to rounding) invariant splitting on a periodic orbit via cyclic power iteration."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    J = model.differential(pts)
    Jinv = np.linalg.inv(J)
    rng = np.random.default_rng(seed)
    d = model.dim

    def cyc(mats, v):
        last = None
        for _ in range(max_cycles):
            path, _ = kernels.push_path(mats, v)
            v = path[-1]
            if last is not None and min(np.linalg.norm(v - last), np.linalg.norm(v + last)) < tol:
                break
            last = v
        return path[:-1]

    eu = cyc(J, rng.standard_normal(d))  # indexed 0..P-1
    es = cyc(Jinv[::-1], rng.standard_normal(d))  # starts at index 0 == P, then P-1, ...
    es = np.concatenate([es[:1], es[1:][::-1]])
    ec = None
    sines = None
    if d == 3:
        ncu = cyc(np.transpose(Jinv, (0, 2, 1)), rng.standard_normal(d))
        ncs = cyc(np.transpose(J, (0, 2, 1))[::-1], rng.standard_normal(d))
        ncs = np.concatenate([ncs[:1], ncs[1:][::-1]])
        crs = np.cross(ncu, ncs)
        sines = np.linalg.norm(crs, axis=1)
        if np.min(sines) < PLANE_SINE_MIN:
            raise SplittingError("periodic splitting not resolved (E^cu and E^cs nearly coincide)")
        ec = orient(crs / sines[:, None])
    return OrbitSplitting(points=pts.copy(), e_s=orient(es), e_c=ec, e_u=orient(eu), jacobians=J,
                          residual=0.0, plane_sine=sines, lookback=0)


class CenterCocycle:
    """phi(x) = log|Df(x)|_{E^c(x)}| with the exact center where the model provides it."""

    def __init__(self, model: MapModel, lookback: int = 40):
        if model.dim != 3:
            raise ExponentError("center cocycle needs a 3-dimensional model")
        self.model = model
        self.lookback = lookback
        self.exact = model.center_log_derivative(np.zeros(3)) is not None

    def at_points(self, points, seed: int = 0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.exact:
            return np.asarray(self.model.center_log_derivative(pts), dtype=float).reshape(len(pts))
        out = np.empty(len(pts))
        for i, p in enumerate(pts):
            sp = orbit_splitting(self.model, p, 0, self.lookback, rng=np.random.default_rng(seed + i))
            out[i] = np.log(np.linalg.norm(sp.jacobians[0] @ sp.e_c[0]))
        return out

    def along_orbit(self, x, n: int, seed: int = 0, max_unresolved: float = 0.01) -> np.ndarray:
        """phi(f^i x) for i = 0..n-1."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.exact:
            return self.at_points(self.model.orbit(wrap(np.asarray(x, dtype=float)), n - 1))
        sp = orbit_splitting(self.model, x, n - 1, self.lookback, rng=np.random.default_rng(seed), check=False)
        bad = np.mean(sp.plane_sine < PLANE_SINE_MIN)
        if bad > max_unresolved:
            raise SplittingError(f"splitting unresolved at {100 * bad:.1f}% of orbit points")
        return np.log(np.linalg.norm(np.einsum("kij,kj->ki", sp.jacobians, sp.e_c), axis=1))

    def sup_norm(self, sample=None, resolution: int = 6, safety: float = PHI_SAFETY) -> float:
        """Upper estimate of sup|phi|: closed form when known, else sampled max times a safety factor."""
        m = self.model
        if isinstance(m, SkewCircleExtension):
            k = 2 * np.pi * abs(m.epsilon)
            return float(max(abs(np.log1p(k)), abs(np.log1p(-k))))
        pts = grid_points(3, resolution) if sample is None else np.atleast_2d(sample)
        for c, r in m.nonaffine_regions() or []:
            ball = (2 * grid_points(3, resolution) - 1) * r
            pts = np.concatenate([pts, wrap(c + ball[np.linalg.norm(ball, axis=1) < r])])
        return float(safety * np.max(np.abs(self.at_points(pts))))


def birkhoff_center_average(model: MapModel, x, n: int, N: int = 40, seed: int = 0) -> float:
    """(1/n) sum_{i<n} phi(f^i x)."""
    return float(np.mean(CenterCocycle(model, N).along_orbit(x, n, seed=seed)))


def measure_center_exponent(model: MapModel, mu, N: int = 40) -> float:
    """Integral of phi against an atomic measure; periodic measures use their exact splitting."""
    cc = CenterCocycle(model, N)
    if cc.exact:
        phi = cc.at_points(mu.atoms)
    elif getattr(mu, "periodic", False):
        sp = periodic_splitting(model, mu.atoms)
        phi = np.log(np.linalg.norm(np.einsum("kij,kj->ki", sp.jacobians, sp.e_c), axis=1))
    else:
        phi = cc.at_points(mu.atoms)
    return float(np.dot(mu.weights, phi))
