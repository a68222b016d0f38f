"""Strong-unstable leaves: growth, dense returns, heteroclinic crossings.

A leaf is represented by a straight seed segment {y + t e} at a backward
iterate y = f^-k(x), with e the unstable direction at y, together with the
images of finitely many parameters t.  Every vertex is an exact image of a
seed parameter, so any point of the leaf or of its forward images can be
re-evaluated at full precision.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .bundles import estimate_unstable_direction, line_angle, orbit_splitting
from .systems import MapModel, orbit_segment
from .torus import displacement, torus_distance, wrap

DEFAULT_MAX_VERTICES = 2_000_000
PIECE = 0.4  # cover pieces this short see a unique nearest translate of a target


class LeafError(RuntimeError):
    pass


class DenseReturnError(LeafError):
    pass


@dataclass(frozen=True)
class LeafParam:
    """t -> f^(k+j)(y + t e) for the seed point y (torus) and unit direction e."""

    model: MapModel
    y: np.ndarray
    e: np.ndarray
    k: int

    def torus_points(self, t, j: int = 0) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        pts = wrap(self.y + t[:, None] * self.e)
        for _ in range(self.k + j):
            pts = self.model.evaluate(pts)
        return pts

    def cover_points(self, t, j: int = 0, near=None) -> np.ndarray:
        """Torus images moved to the translates nearest to ``near`` (same shape)."""
        pts = self.torus_points(t, j)
        if near is None:
            return pts
        return np.asarray(near, dtype=float) + displacement(near, pts)


@dataclass
class LeafSegment:
    points: np.ndarray  # cover coordinates, continuous
    base: np.ndarray  # torus points
    arclength: np.ndarray  # signed arc length from the origin vertex
    origin_index: int
    h: float
    params: np.ndarray  # seed parameters of the vertices
    param: LeafParam | None
    radius: float

    def __len__(self):
        return len(self.points)

    @property
    def origin(self) -> np.ndarray:
        return self.base[self.origin_index]

    def max_gap(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.max(np.linalg.norm(np.diff(self.points, axis=0), axis=1)))


def _refine(param: LeafParam, T: np.ndarray, V: np.ndarray, j: int, limit, max_vertices: int):
    """Insert parameters until every chord of V satisfies ``limit`` (array of max lengths or a float)."""
    while True:
        seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
        lim = limit(V) if callable(limit) else limit
        bad = np.nonzero(seg > lim)[0]
        if not len(bad):
            return T, V
        if len(T) + len(bad) > max_vertices:
            raise LeafError(f"leaf exceeds the vertex cap {max_vertices}")
        tm = 0.5 * (T[bad] + T[bad + 1])
        vm = param.cover_points(tm, j, near=0.5 * (V[bad] + V[bad + 1]))
        T = np.insert(T, bad + 1, tm)
        V = np.insert(V, bad + 1, vm, axis=0)


def grow_unstable_leaf(model: MapModel, x, radius: float, h: float, N: int = 40, seed: int = 0,
                       max_vertices: int = DEFAULT_MAX_VERTICES, tangent_tol: float = 1e-3,
                       check_samples: int = 16, max_back: int = 60) -> LeafSegment:
    """The local strong-unstable leaf through x of arc-length radius ``radius``, vertex spacing <= h."""
    x = wrap(np.asarray(x, dtype=float))
    if not radius > 0:
        raise ValueError("radius must be positive")
    if not h > 0:
        raise ValueError("h must be positive")
    if radius < 1e-14:
        return LeafSegment(points=x[None].copy(), base=x[None].copy(), arclength=np.zeros(1), origin_index=0,
                           h=h, params=np.zeros(1), param=None, radius=radius)
    total = N + max_back
    back = orbit_segment(model, x, -total)[::-1]  # f^-total x ... x
    J = model.differential(back[:-1])
    rng = np.random.default_rng(seed)
    eu_path, logs = kernels.push_path(J, rng.standard_normal(model.dim))
    cum = np.concatenate([np.cumsum(logs[::-1])[::-1], [0.0]])  # log growth from index i to x
    half = 1.5 * radius
    k = 0
    for kk in range(max_back + 1):
        k = kk
        if half * np.exp(-cum[total - kk]) <= 5.0 * h:
            break
    for _attempt in range(6):
        idx = total - k
        y = back[idx]
        e = eu_path[idx]
        ell = half * np.exp(-cum[idx])
        param = LeafParam(model, y.copy(), e.copy(), k)
        T = np.linspace(-ell, ell, 11)
        V = y + T[:, None] * e
        for j in range(1, k + 1):
            V = model.lift(V)
            T, V = _refine_seed(param, T, V, j, h, max_vertices)
        if k == 0:
            T, V = _refine_seed(param, T, V, 0, h, max_vertices)
        o = int(np.argmin(np.abs(T)))
        V = V - np.round(V[o] - x)
        s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(V, axis=0), axis=1))])
        s = s - s[o]
        if s[0] <= -radius and s[-1] >= radius:
            break
        half *= 2.0
    else:
        raise LeafError("could not grow the leaf to the requested radius")
    keep = (s >= -radius) & (s <= radius)
    P, T, s = V[keep], T[keep], s[keep]
    o = int(np.argmin(np.abs(s)))
    leaf = LeafSegment(points=P, base=wrap(P), arclength=s, origin_index=o, h=h, params=T, param=param,
                       radius=radius)
    if check_samples and len(P) >= 3:
        idx = np.unique(np.linspace(1, len(P) - 2, min(check_samples, len(P) - 2)).astype(int))
        for i in idx:
            tan = P[i + 1] - P[i - 1]
            ref = estimate_unstable_direction(model, leaf.base[i], N).dir
            if line_angle(tan, ref) > tangent_tol:
                raise LeafError("leaf growth lost the unstable direction "
                                f"(angle {line_angle(tan, ref):.2e} at vertex {i})")
    return leaf


def _refine_seed(param, T, V, j, h, max_vertices):
    # cover images at step j of the seed (j counted from the seed, not from x)
    while True:
        seg = np.linalg.norm(np.diff(V, axis=0), axis=1)
        bad = np.nonzero(seg > h)[0]
        if not len(bad):
            return T, V
        if len(T) + len(bad) > max_vertices:
            raise LeafError(f"leaf exceeds the vertex cap {max_vertices}")
        tm = 0.5 * (T[bad] + T[bad + 1])
        pts = wrap(param.y + tm[:, None] * param.e)
        for _ in range(j):
            pts = param.model.evaluate(pts)
        mid = 0.5 * (V[bad] + V[bad + 1])
        vm = mid + displacement(mid, pts)
        T = np.insert(T, bad + 1, tm)
        V = np.insert(V, bad + 1, vm, axis=0)


def segment_target_distance(A: np.ndarray, B: np.ndarray, target) -> tuple[np.ndarray, np.ndarray]:
    """Torus distance from ``target`` to each cover chord [A_i, B_i] (any length).

    Returns (distance, chord parameter in [0, 1] of the nearest point).  Long
    chords are cut into pieces shorter than 0.4 so that each piece sees a
    unique nearest translate of the target.
    """
    target = np.asarray(target, dtype=float)
    D = B - A
    L = np.linalg.norm(D, axis=1)
    npieces = np.maximum(1, np.ceil(L / PIECE).astype(np.int64))
    seg_id = np.repeat(np.arange(len(A)), npieces)
    offs = np.arange(len(seg_id)) - np.repeat(np.cumsum(npieces) - npieces, npieces)
    u0 = offs / npieces[seg_id]
    u1 = (offs + 1) / npieces[seg_id]
    a = A[seg_id] + u0[:, None] * D[seg_id]
    dvec = (u1 - u0)[:, None] * D[seg_id]
    mid = a + 0.5 * dvec
    tt = mid + displacement(mid, target)
    den = np.einsum("ij,ij->i", dvec, dvec)
    lam = np.where(den > 0, np.einsum("ij,ij->i", tt - a, dvec) / np.where(den > 0, den, 1.0), 0.0)
    lam = np.clip(lam, 0.0, 1.0)
    dist_p = np.linalg.norm(a + lam[:, None] * dvec - tt, axis=1)
    upar = u0 + lam * (u1 - u0)
    best = np.full(len(A), np.inf)
    np.minimum.at(best, seg_id, dist_p)
    # parameter of the minimizing piece per segment
    order = np.lexsort((dist_p, seg_id))
    first = np.concatenate([[True], seg_id[order][1:] != seg_id[order][:-1]])
    upar_best = np.empty(len(A))
    upar_best[seg_id[order][first]] = upar[order][first]
    return best, upar_best


@dataclass
class DenseReturn:
    z_n: np.ndarray
    N_d: int
    distance: float
    leaf: LeafSegment | None
    t: float


def _near_regions_limit(model, V, base_h, nl_h):
    regions = model.nonaffine_regions()
    if not regions:
        return base_h
    A, B = V[:-1], V[1:]
    lim = np.full(len(A), base_h)
    for c, r in regions:
        dist, _ = segment_target_distance(A, B, c)
        lim[dist < r + nl_h] = nl_h
    return lim


def find_dense_return(model: MapModel, z, target, d: float, max_time: int, h: float | None = None,
                      N: int = 40, seed: int = 0, max_vertices: int = DEFAULT_MAX_VERTICES,
                      candidates: int = 8) -> DenseReturn:
    """A point z_n on F^u_{d/4}(z) and the least N_d <= max_time with d(f^N_d(z_n), target) < d/2."""
    if not d > 0:
        raise ValueError("d must be positive")
    z = wrap(np.asarray(z, dtype=float))
    target = wrap(np.asarray(target, dtype=float))
    if torus_distance(z, target) < d / 2:
        return DenseReturn(z_n=z, N_d=0, distance=torus_distance(z, target), leaf=None, t=0.0)
    h = d / 16 if h is None else h
    leaf = grow_unstable_leaf(model, z, d / 4, h, N=N, seed=seed, max_vertices=max_vertices, check_samples=4)
    param = leaf.param
    T, V = leaf.params.copy(), leaf.points.copy()
    radii = [r for _, r in (model.nonaffine_regions() or [])]
    nl_h = min([d / 8] + [r / 8 for r in radii])
    for j in range(0, max_time + 1):
        if j > 0:
            if radii:
                T, V = _refine(param, T, V, j - 1, lambda W: _near_regions_limit(model, W, np.inf, nl_h),
                               max_vertices)
            V = model.lift(V)
        dist, upar = segment_target_distance(V[:-1], V[1:], target)
        order = np.argsort(dist, kind="stable")[:candidates]
        order = order[dist[order] < d / 2 + (nl_h if radii else 1e-12)]
        best = None
        for i in order:
            ts = T[i] + upar[i] * (T[i + 1] - T[i])
            dd = torus_distance(param.torus_points(ts, j)[0], target)
            if dd >= d / 2:
                res = minimize_scalar(lambda tt: torus_distance(param.torus_points(tt, j)[0], target),
                                      bounds=(T[i], T[i + 1]), method="bounded",
                                      options={"xatol": 1e-14 * max(1.0, abs(T[i]))})
                ts, dd = float(res.x), float(res.fun)
            if dd < d / 2 and (best is None or dd < best[1]):
                best = (ts, dd)
        if best is not None:
            ts, dd = best
            return DenseReturn(z_n=param.torus_points(ts, 0)[0], N_d=j, distance=dd, leaf=leaf, t=ts)
    raise DenseReturnError(f"minimality not observed at this d: no return within d/2 = {d / 2:g} "
                           f"in {max_time} iterates")


def _unstable_side(model, points, z, Q, u_dual, threshold, max_steps):
    """Iterate z forward; report the sign of its E^u coordinate relative to the orbit Q when it escapes."""
    P = len(Q)
    cur = wrap(np.asarray(z, dtype=float))
    phase = 0
    for step in range(max_steps):
        disp = displacement(Q[phase], cur)
        u = float(disp @ u_dual[phase])
        if abs(u) > threshold:
            return np.sign(u), step
        cur = model.evaluate(cur)
        phase = (phase + 1) % P
    return 0.0, max_steps


@dataclass
class HeteroclinicResult:
    intersects: bool
    point: np.ndarray | None = None
    angle: float | None = None
    bracket: float | None = None
    convergence_distance: float | None = None


def heteroclinic_intersects(model: MapModel, p, q, radius: float, tol: float = 1e-3, h: float | None = None,
                            patch: float = 0.05, threshold: float = 0.02, N: int = 40,
                            converge_tol: float = 1e-3, detail: bool = False):
    """Does W^u(p) (grown to ``radius``) cross the local stable manifold of q transversally?

    The local W^s(q) is the set of points near O_q whose E^u coordinate relative
    to O_q never escapes; a crossing is a sign change of the escape side along
    the leaf, bisected to machine precision and confirmed by forward
    convergence to O_q.
    """
    from .exponents import periodic_splitting
    from .orbits import classify_periodic

    if model.dim != 3:
        raise ValueError("heteroclinic test needs a 3-dimensional model")
    cls_q = classify_periodic(model, q)
    if cls_q.stable_index != 2 and not cls_q.marginal:
        raise ValueError(f"index mismatch: W^s(q) has dimension {cls_q.stable_index}, need 2")
    if not radius > 0 or radius < 1e-12:
        return HeteroclinicResult(False) if detail else False
    Q = np.atleast_2d(q.points)
    sp = periodic_splitting(model, Q)
    basis = np.stack([sp.e_s, sp.e_c, sp.e_u], axis=2)  # (P, d, 3)
    u_dual = np.linalg.inv(basis)[:, 2, :]  # rows dual to e_u
    max_steps = 400
    h = radius / 200 if h is None else h
    leaf = grow_unstable_leaf(model, np.atleast_2d(p.points)[0], radius, h, N=N, check_samples=0)
    near = np.min(torus_distance(leaf.base[:, None, :], Q[None, :, :]), axis=1) < patch
    if np.min(torus_distance(np.atleast_2d(p.points)[0], Q)) < 1e-9:
        near &= np.abs(leaf.arclength) > 2 * patch  # the leaf starts on O_q: skip the trivial crossing
    sides = np.zeros(len(leaf.base))
    for i in np.nonzero(near)[0]:
        sides[i], _ = _unstable_side(model, None, leaf.base[i], Q, u_dual, threshold, max_steps)
    param = leaf.param
    j0 = 0
    for i in range(len(sides) - 1):
        if not (near[i] and near[i + 1]) or sides[i] * sides[i + 1] >= 0:
            continue
        a, b = leaf.params[i], leaf.params[i + 1]
        sa = sides[i]
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid in (a, b):
                break
            sm, _ = _unstable_side(model, None, param.torus_points(mid, j0)[0], Q, u_dual, threshold, max_steps)
            if sm == 0:
                a = b = mid
                break
            if sm == sa:
                a = mid
            else:
                b = mid
        zs = param.torus_points(0.5 * (a + b), j0)[0]
        bracket = float(torus_distance(param.torus_points(a, j0)[0], param.torus_points(b, j0)[0]))
        # on W^s the orbit approaches O_q until the rounding error along E^u grows back out
        orb = model.orbit(zs, 30 * len(Q))[10 * len(Q):]
        conv = float(np.min(torus_distance(orb[:, None, :], Q[None, :, :])))
        if conv > converge_tol:
            continue
        spz = orbit_splitting(model, zs, 0, N, check=False)
        ncs = np.cross(spz.e_s[0], spz.e_c[0])
        angle = float(np.arcsin(min(1.0, abs(ncs @ spz.e_u[0]) / np.linalg.norm(ncs))))
        if angle > tol:
            res = HeteroclinicResult(True, zs, angle, bracket, conv)
            return res if detail else True
    return HeteroclinicResult(False) if detail else False
