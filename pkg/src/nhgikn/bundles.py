"""Invariant splitting E^s + E^c + E^u and sampled partial-hyperbolicity certificates.

Directions come from power iteration on the derivative cocycle:

* e_u: push a generic vector forward along the backward orbit of x;
* e_s: push backward (with Df^-1) along the forward orbit;
* E^cu, E^cs: tracked through their unit normals, which transform by
  Df^-T (forward) and Df^T (backward); e_c is the cross product of the normals.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .systems import MapModel, orbit_segment
from .torus import wrap

DEFAULT_MIN_ANGLE = 1e-3
PLANE_SINE_MIN = 1e-6
RESIDUAL_TOL = 1e-8


class SplittingError(ArithmeticError):
    """The splitting could not be resolved at the requested lookback."""


def orient(v: np.ndarray) -> np.ndarray:
    """Deterministic sign: the largest-magnitude component is made positive."""
    v = np.array(v, dtype=float, copy=True)
    flat = v.reshape(-1, v.shape[-1])
    idx = np.argmax(np.abs(flat), axis=1)
    sgn = np.sign(flat[np.arange(len(flat)), idx])
    sgn[sgn == 0] = 1.0
    return (flat * sgn[:, None]).reshape(v.shape)


def line_angle(u, v) -> np.ndarray | float:
    """Angle in [0, pi/2] between the lines spanned by u and v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    dot = np.abs(np.sum(u * v, axis=-1))
    if u.shape[-1] == 3:
        crs = np.linalg.norm(np.cross(u, v), axis=-1)
    else:
        crs = np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
    out = np.arctan2(crs / (nu * nv), dot / (nu * nv))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TangentVector:
    base: np.ndarray
    dir: np.ndarray
    residual: float = 0.0


@dataclass(frozen=True)
class Splitting:
    base: np.ndarray
    e_s: np.ndarray
    e_c: np.ndarray | None
    e_u: np.ndarray
    convergence_residual: float
    lookback: int
    plane_sine: float = 1.0

    def min_angle(self) -> float:
        vecs = [v for v in (self.e_s, self.e_c, self.e_u) if v is not None]
        return min(line_angle(a, b) for i, a in enumerate(vecs) for b in vecs[i + 1:])


@dataclass
class OrbitSplitting:
    """Splitting sampled along an orbit segment x_0 = x, ..., x_n."""

    points: np.ndarray
    e_s: np.ndarray
    e_c: np.ndarray | None
    e_u: np.ndarray
    jacobians: np.ndarray  # Df at points[0..n]
    residual: float
    plane_sine: np.ndarray | None = None
    lookback: int = 0

    def at(self, i: int = 0) -> Splitting:
        return Splitting(base=self.points[i].copy(), e_s=self.e_s[i].copy(),
                         e_c=None if self.e_c is None else self.e_c[i].copy(),
                         e_u=self.e_u[i].copy(), convergence_residual=self.residual,
                         lookback=self.lookback,
                         plane_sine=1.0 if self.plane_sine is None else float(self.plane_sine[i]))

    def rates(self):
        """One-step expansion factors |Df(x_i) e(x_i)| for each bundle, i = 0..n-1."""
        n = len(self.points) - 1
        J = self.jacobians[:n]

        def one(e):
            return np.linalg.norm(np.einsum("kij,kj->ki", J, e[:n]), axis=1)

        return one(self.e_s), None if self.e_c is None else one(self.e_c), one(self.e_u)


def _seed_vectors(rng: np.random.Generator, d: int):
    a = rng.standard_normal(d)
    b = rng.standard_normal(d)
    return a, b


def orbit_splitting(model: MapModel, x, n: int = 0, N: int = 60, rng=None,
                    min_angle: float = DEFAULT_MIN_ANGLE, check: bool = True) -> OrbitSplitting:
    """Estimate (e_s, e_c, e_u) at x, f(x), ..., f^n(x) with lookback N on both sides."""
    if N < 1:
        raise ValueError("lookback N must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    x = wrap(np.asarray(x, dtype=float))
    d = model.dim
    back = orbit_segment(model, x, -N)[::-1]  # f^-N x ... x
    fwd = orbit_segment(model, x, n + N)  # x ... f^(n+N) x
    pts = np.concatenate([back[:-1], fwd])
    end = len(pts) - 1
    J = model.differential(pts)
    Jinv = np.linalg.inv(J)
    sl = slice(N, N + n + 1)

    for _attempt in range(3):
        a, b = _seed_vectors(rng, d)
        eu, _ = kernels.push_path(J[:N + n], a)
        eu2, _ = kernels.push_path(J[:N + n], b)
        es, _ = kernels.push_path(Jinv[N:end][::-1], a)
        es2, _ = kernels.push_path(Jinv[N:end][::-1], b)
        es, es2 = es[::-1], es2[::-1]  # now indexed N..end
        res = max(line_angle(eu[N], eu2[N]), line_angle(es[0], es2[0]))
        if res < 1e-3:
            break
    e_u = orient(eu[sl])
    e_s = orient(es[: n + 1])
    e_c = None
    sines = None
    if d == 3:
        ncu, _ = kernels.push_path(np.transpose(Jinv[:N + n], (0, 2, 1)), b)
        ncs, _ = kernels.push_path(np.transpose(J[N:end], (0, 2, 1))[::-1], a)
        ncs = ncs[::-1]
        crs = np.cross(ncu[sl], ncs[: n + 1])
        sines = np.linalg.norm(crs, axis=1)
        if check and np.min(sines) < PLANE_SINE_MIN:
            i = int(np.argmin(sines))
            raise SplittingError(f"splitting not resolved at lookback {N}: E^cu and E^cs nearly coincide "
                                 f"(plane sine {sines[i]:.2e}) at orbit index {i}")
        e_c = orient(crs / np.where(sines > 0, sines, 1.0)[:, None])
    out = OrbitSplitting(points=pts[sl].copy(), e_s=e_s, e_c=e_c, e_u=e_u, jacobians=J[sl].copy(),
                         residual=float(res), plane_sine=sines, lookback=N)
    if check:
        sp = out.at(0)
        ang = sp.min_angle()
        if ang < min_angle:
            raise SplittingError(f"bundle directions closer than {min_angle:g} rad (min angle {ang:.3g})")
    return out


def estimate_unstable_direction(model: MapModel, x, N: int = 60, rng=None) -> TangentVector:
    """Unit vector of E^u(x) by forward power iteration along the backward orbit."""
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    x = wrap(np.asarray(x, dtype=float))
    back = orbit_segment(model, x, -N)[::-1]
    J = model.differential(back[:-1])
    for _attempt in range(3):
        a, b = _seed_vectors(rng, model.dim)
        u1, _ = kernels.push_direction(J, a)
        u2, _ = kernels.push_direction(J, b)
        res = line_angle(u1, u2)
        if res < 1e-3:
            break
    return TangentVector(base=x, dir=orient(u1), residual=float(res))


def estimate_splitting(model: MapModel, x, N: int = 60, rng=None,
                       min_angle: float = DEFAULT_MIN_ANGLE) -> Splitting:
    return orbit_splitting(model, x, 0, N, rng=rng, min_angle=min_angle).at(0)


INEQUALITIES = ("stable_contraction", "unstable_expansion", "center_over_stable", "unstable_over_center")


@dataclass
class PHCertificate:
    grid_resolution: int
    n: int
    lookback: int
    lam_hat: float
    margins: dict
    worst_points: dict
    valid: bool
    failure: str | None = None
    npoints: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "grid_resolution": self.grid_resolution, "n": self.n, "lookback": self.lookback,
            "lam_hat": self.lam_hat, "margins": self.margins,
            "worst_points": {k: [float(c) for c in v] for k, v in self.worst_points.items()},
            "valid": self.valid, "failure": self.failure, "npoints": self.npoints,
        }


def grid_points(dim: int, resolution: int) -> np.ndarray:
    g = (np.arange(resolution) + 0.5) / resolution
    return np.stack(np.meshgrid(*([g] * dim), indexing="ij"), axis=-1).reshape(-1, dim)


def _ratios_at(model, x, n, N, seed):
    """The four n-th root ratios at x (smaller than 1 means the inequality holds)."""
    sp = orbit_splitting(model, x, n, N, rng=np.random.default_rng(seed), check=False)
    rs, rc, ru = sp.rates()
    ls, lu = np.sum(np.log(rs)), np.sum(np.log(ru))
    out = [ls / n, -lu / n]
    if rc is not None:
        lc = np.sum(np.log(rc))
        out += [(ls - lc) / n, (lc - lu) / n]
        if sp.plane_sine is not None and np.min(sp.plane_sine) < PLANE_SINE_MIN:
            out = [max(v, 0.0) for v in out]  # unresolved splitting cannot certify anything
    return np.exp(out)


def verify_partial_hyperbolicity(model: MapModel, grid_resolution: int = 6, n: int = 8, N: int = 40,
                                 points=None, seed: int = 0, threads: int = 1) -> PHCertificate:
    """Check the four sampled partial-hyperbolicity inequalities at iterate depth n (C = 1)."""
    if n < 1 or N < 1:
        raise ValueError("n and N must be >= 1")
    pts = grid_points(model.dim, grid_resolution) if points is None else wrap(np.atleast_2d(points))
    seeds = np.random.SeedSequence(seed).generate_state(len(pts))

    def task(i):
        return _ratios_at(model, pts[i], n, N, int(seeds[i]))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            ratios = list(ex.map(task, range(len(pts))))
    else:
        ratios = [task(i) for i in range(len(pts))]
    R = np.array(ratios)
    names = INEQUALITIES[: R.shape[1]]
    worst = np.argmax(R, axis=0)
    margins = {k: float(1.0 - R[worst[j], j]) for j, k in enumerate(names)}
    worst_points = {k: pts[worst[j]] for j, k in enumerate(names)}
    lam_hat = float(np.max(R))
    bad = [k for k in names if not margins[k] > 0]
    failure = None
    if bad:
        k = bad[0]
        failure = f"inequality {k} fails at {np.array2string(worst_points[k], precision=6)} (margin {margins[k]:.3g})"
    return PHCertificate(grid_resolution=grid_resolution, n=n, lookback=N, lam_hat=lam_hat, margins=margins,
                         worst_points=worst_points, valid=not bad, failure=failure, npoints=len(pts))
