"""Pseudo-orbits, Newton closing of periodic orbits, classification and census."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .bundles import orbit_splitting
from .exponents import CenterCocycle, center_exponent_periodic, periodic_log_moduli
from .leaves import DenseReturn, find_dense_return
from .systems import MapModel
from .torus import torus_distance, wrap

DEDUP_TOL = 1e-8


class NewtonError(ArithmeticError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class ShadowingError(NewtonError):
    pass


class GapError(ValueError):
    pass


def step_defects(model: MapModel, points, cyclic: bool = True) -> np.ndarray:
    """d(f(x_i), x_{i+1}) for consecutive points (wrapping around if cyclic)."""
    pts = np.atleast_2d(points)
    img = model.evaluate(pts)
    nxt = np.roll(pts, -1, axis=0) if cyclic else pts[1:]
    img = img if cyclic else img[:-1]
    return np.atleast_1d(torus_distance(img, nxt))


@dataclass
class PseudoOrbit:
    points: np.ndarray
    gap: float
    cyclic: bool = True
    blocks: list = field(default_factory=list)  # (role, start, length)
    defects: np.ndarray | None = None

    @classmethod
    def from_points(cls, model: MapModel, points, cyclic: bool = True, blocks=None) -> "PseudoOrbit":
        pts = wrap(np.atleast_2d(np.asarray(points, dtype=float)))
        dfx = step_defects(model, pts, cyclic)
        gap = float(np.max(dfx)) if len(dfx) else 0.0
        return cls(points=pts, gap=gap, cyclic=cyclic, blocks=list(blocks or []), defects=dfx)

    def __len__(self):
        return len(self.points)

    def block_lengths(self) -> dict:
        return {role: length for role, _start, length in self.blocks}


@dataclass
class PeriodicOrbit:
    points: np.ndarray
    residual: float
    iterations: int = 0
    shadowing_distance: float = 0.0
    source_gap: float = 0.0
    lambda_c: float | None = None
    stable_index: int | None = None
    log_moduli: np.ndarray | None = None
    marginal: bool | None = None

    @property
    def period(self) -> int:
        return len(self.points)

    @classmethod
    def from_points(cls, model: MapModel, points) -> "PeriodicOrbit":
        pts = wrap(np.atleast_2d(np.asarray(points, dtype=float)))
        return cls(points=pts, residual=float(np.max(step_defects(model, pts))))


def _newton_correction(J: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve J_i dx_i - dx_{i+1} = rhs_i cyclically by orthogonal block elimination.

    Orthogonal steps keep the elimination stable when products of the J_i grow
    exponentially, which defeats pivoted LU on long orbits.
    """
    Rs, Gs, Bs, cs, G, H, c = kernels.cyclic_qr_factor(J, rhs)
    try:
        x0 = np.linalg.solve(G + H, c)
    except np.linalg.LinAlgError:  # nonhyperbolic closing direction
        x0 = np.linalg.lstsq(G + H, c, rcond=None)[0]
    return kernels.cyclic_back_substitute(Rs, Gs, Bs, cs, x0)


def _newton_solve(model, X, K, offset, tol, max_iter):
    """Newton with backtracking on F(x_i) - x_{i+1} - k_i - offset_i = 0; returns (X, iterations)."""
    history = []
    it = 0

    def residual(Y):
        return model.lift(Y) - np.roll(Y, -1, axis=0) - K - offset

    R = residual(X)
    while True:
        res = float(np.max(np.abs(R)))
        history.append(res)
        if not np.isfinite(res):
            raise NewtonError("Newton diverged (non-finite residual)", res)
        if res < tol:
            return X, it
        if it >= max_iter:
            raise NewtonError(f"Newton did not converge in {max_iter} iterations (residual {res:.3g})", res)
        if it >= 6 and res > 0.5 * min(history[-6:-1]) and res > 1e3 * tol:
            raise NewtonError(f"Newton stagnated at residual {res:.3g}", res)
        dX = _newton_correction(model.differential(X), -R)
        t = 1.0
        for _ in range(12):  # backtrack until the max-norm residual decreases
            Xt = X + t * dX
            Rt = residual(Xt)
            if float(np.max(np.abs(Rt))) < res:
                break
            t *= 0.5
        X, R = Xt, Rt
        it += 1


def newton_close(model: MapModel, po: PseudoOrbit, tol: float = 1e-12, max_iter: int = 40,
                 L_max: float | None = 100.0, d0: float | None = None, continuation: bool = True,
                 min_stride: float = 1e-3) -> PeriodicOrbit:
    """Multiple-shooting Newton for a cyclic pseudo-orbit; returns the shadowing periodic orbit.

    Unknowns are the P points on the cover; the residual F(x_i) - x_{i+1} - k_i
    uses integer translates k_i frozen from the pseudo-orbit. When plain Newton
    stalls, the defects are removed gradually: solve with defects (1 - s) r_i
    for s stepping from 0 to 1, each solve warm-started from the previous one.
    """
    if not po.cyclic:
        raise GapError("newton_close needs a cyclic pseudo-orbit")
    if d0 is not None and not po.gap < d0:
        raise GapError(f"pseudo-orbit gap {po.gap:.3g} is not below d0 = {d0:g}")
    X0 = np.array(po.points, dtype=float)
    K = np.round(model.lift(X0) - np.roll(X0, -1, axis=0))
    zero = np.zeros_like(X0)
    try:
        X, it = _newton_solve(model, X0.copy(), K, zero, tol, max_iter)
    except NewtonError:
        if not continuation:
            raise
        R0 = model.lift(X0) - np.roll(X0, -1, axis=0) - K
        X, s, stride, it = X0.copy(), 0.0, 0.25, 0
        while s < 1.0:
            s_try = min(1.0, s + stride)
            try:
                X_try, k = _newton_solve(model, X, K, (1 - s_try) * R0, tol, max_iter)
            except NewtonError as exc:
                stride *= 0.5
                if stride < min_stride:
                    raise NewtonError(f"continuation stalled at s = {s:.4g}: {exc}", exc.residual) from exc
                continue
            X, s, it = X_try, s_try, it + k
            stride = min(1.0, 1.5 * stride)
    pts = wrap(X)
    resid = float(np.max(step_defects(model, pts)))
    shadow = float(np.max(torus_distance(pts, X0)))
    if L_max is not None:
        bound = L_max * po.gap if po.gap > 0 else 1e-10
        if shadow > bound:
            raise ShadowingError(f"shadowed orbit escaped: distance {shadow:.3g} exceeds L_max*gap = {bound:.3g}",
                                 resid)
    return PeriodicOrbit(points=pts, residual=resid, iterations=it, shadowing_distance=shadow, source_gap=po.gap)


@dataclass
class Classification:
    stable_index: int
    log_moduli: np.ndarray  # per period, decreasing
    marginal: bool

    @property
    def moduli(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_moduli)


def classify_periodic(model: MapModel, p, marginal_tol: float = 1e-10) -> Classification:
    pts = np.atleast_2d(getattr(p, "points", p))
    lm = periodic_log_moduli(model, pts)
    return Classification(stable_index=int(np.sum(lm < 0)), log_moduli=lm,
                          marginal=bool(np.any(np.abs(lm) < marginal_tol)))


def annotate(model: MapModel, p: PeriodicOrbit) -> PeriodicOrbit:
    """Fill the exponent and classification fields in place."""
    c = classify_periodic(model, p)
    p.stable_index, p.log_moduli, p.marginal = c.stable_index, c.log_moduli, c.marginal
    if model.dim == 3:
        try:
            p.lambda_c = center_exponent_periodic(model, p)
        except ArithmeticError:
            p.lambda_c = float(c.log_moduli[1] / p.period)
    return p


def minimal_period_points(points, tol: float = DEDUP_TOL) -> np.ndarray:
    pts = np.atleast_2d(points)
    P = len(pts)
    for j in range(1, P):
        if P % j == 0 and np.max(torus_distance(pts, np.roll(pts, -j, axis=0))) < tol:
            return pts[:j].copy()
    return pts


def same_orbit(a, b, tol: float = DEDUP_TOL) -> bool:
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    if len(a) != len(b):
        return False
    d0 = torus_distance(b, a[0])
    for r in np.nonzero(np.atleast_1d(d0) < tol)[0]:
        if np.max(torus_distance(a, np.roll(b, -r, axis=0))) < tol:
            return True
    return False


@dataclass
class Census:
    orbits: dict  # minimal period -> list of PeriodicOrbit
    max_period: int
    seeds: int
    failures: int = 0

    def count_points(self, k: int) -> int:
        """Number of distinct points of period dividing k."""
        return sum(j * len(v) for j, v in self.orbits.items() if k % j == 0)

    def all_orbits(self):
        return [o for j in sorted(self.orbits) for o in self.orbits[j]]


def periodic_census(model: MapModel, max_period: int, grid_resolution: int = 48, tol: float = 1e-12,
                    max_iter: int = 40, seeds=None) -> Census:
    """Grid-seeded Newton census of periodic orbits up to ``max_period``, deduplicated."""
    from .bundles import grid_points

    S = grid_points(model.dim, grid_resolution) if seeds is None else np.atleast_2d(seeds)
    found: dict[int, list] = {}
    failures = 0
    for k in range(1, max_period + 1):
        for x in S:
            po = PseudoOrbit.from_points(model, model.orbit(x, k - 1))
            try:
                orb = newton_close(model, po, tol=tol, max_iter=max_iter, L_max=None)
            except NewtonError:
                failures += 1
                continue
            pts = minimal_period_points(orb.points)
            lst = found.setdefault(len(pts), [])
            if any(same_orbit(pts, o.points) for o in lst):
                continue
            p = PeriodicOrbit(points=pts, residual=float(np.max(step_defects(model, pts))),
                              iterations=orb.iterations)
            lst.append(annotate(model, p))
    for j in found:
        found[j].sort(key=lambda o: tuple(np.round(o.points.min(axis=0), 12)) + tuple(np.round(o.points[0], 12)))
    return Census(orbits=dict(sorted(found.items())), max_period=max_period, seeds=len(S), failures=failures)


@dataclass
class GiknPseudoOrbit:
    pseudo: PseudoOrbit
    m: int
    n: int
    N_d: int
    j0: int
    dense: DenseReturn
    x: np.ndarray


def build_gikn_pseudo_orbit(model: MapModel, q: PeriodicOrbit, x, m: int, n: int, d: float,
                            max_time: int = 60, back: int = 12, h: float | None = None,
                            seed: int = 0, tour=None) -> GiknPseudoOrbit:
    """Cyclic pseudo-orbit: m steps near O_q, the transit x..f^(n-1)x, then a dense return to O_q.

    The q-block is the q-orbit itself followed by the last few backward
    iterates of x (which lie on F^u(q) and converge to O_q); the transit leaves
    along F^u(q); z_n on F^u_{d/4}(f^n x) returns within d/2 of the start of
    the q-block after N_d steps. With ``tour`` the closing block first passes
    within d/2 of each tour point in turn, chaining one dense return per leg.
    """
    if m < 1 or n < 1:
        raise ValueError("m and n must be >= 1")
    Q = np.atleast_2d(q.points)
    P = len(Q)
    x = wrap(np.asarray(x, dtype=float))
    if torus_distance(x, Q[0]) > d / 4 + 1e-15:
        raise ValueError("x must lie within d/4 of the first point of q")
    j0 = (-m) % P
    K = min(back, m)
    bx = []
    cur = x
    for _ in range(K):
        cur = model.inverse(cur)
        bx.append(cur)
    qblock = np.concatenate([Q[(j0 + np.arange(m - K)) % P], np.array(bx[::-1]).reshape(K, model.dim)])
    transit = model.orbit(x, n)  # x .. f^n x
    legs = []
    cur = transit[-1]
    targets = [] if tour is None else list(np.atleast_2d(tour))
    for leg, tgt in enumerate(targets + [Q[j0]]):
        dr = find_dense_return(model, cur, tgt, d, max_time, h=h, seed=seed + leg)
        if dr.N_d == 0:
            cur = dr.z_n
            continue
        seg = model.orbit(dr.z_n, dr.N_d)
        legs.append(seg[:-1])
        cur = seg[-1]
    closing = np.concatenate(legs) if legs else np.zeros((0, model.dim))
    N_d = len(closing)
    pts = np.concatenate([qblock, transit[:-1], closing])
    blocks = [("q", 0, m), ("transit", m, n), ("closing", m + n, N_d)]
    po = PseudoOrbit.from_points(model, pts, cyclic=True, blocks=blocks)
    if not po.gap < d:
        raise GapError(f"pseudo-orbit gap {po.gap:.3g} is not below d = {d:g}")
    return GiknPseudoOrbit(pseudo=po, m=m, n=n, N_d=N_d, j0=j0, dense=dr, x=x)


def liao_gan_sums(model: MapModel, po: PseudoOrbit, N: int = 40, link_tol: float = 1e-9) -> dict:
    """Partial Birkhoff averages of the Liao-Gan hypotheses with E = E^s+E^c, F = E^u.

    Returns the maxima over k of (1/k) sum_{i<k} log|Df|E^c(x_i)| and of the
    backward averages of log|Df^-1|E^u|; both negative means the hypotheses hold.
    """
    pts = po.points
    P = len(pts)
    dfx = step_defects(model, pts, cyclic=False)
    breaks = np.concatenate([[0], np.nonzero(dfx > link_tol)[0] + 1, [P]])
    phi = np.empty(P)
    lu = np.empty(P)
    cc = CenterCocycle(model, N) if model.dim == 3 else None
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        sp = orbit_splitting(model, pts[a], b - a - 1, N, check=False) if b - a > 1 else \
            orbit_splitting(model, pts[a], 0, N, check=False)
        J = model.differential(pts[a:b])
        lu[a:b] = np.log(np.linalg.norm(np.einsum("kij,kj->ki", J, sp.e_u[: b - a]), axis=1))
        if cc is not None:
            phi[a:b] = cc.at_points(pts[a:b]) if cc.exact else \
                np.log(np.linalg.norm(np.einsum("kij,kj->ki", J, sp.e_c[: b - a]), axis=1))
    k = np.arange(1, P + 1)
    cs_max = float(np.max(np.cumsum(phi) / k)) if cc is not None else float("nan")
    u_max = float(np.max(np.cumsum(-lu[::-1]) / k))
    lam = max(cs_max, u_max) if cc is not None else u_max
    return {"center_partial_max": cs_max, "unstable_backward_partial_max": u_max, "lambda": lam,
            "satisfied": bool(lam < 0)}


ORBIT_CSV_HEADER = ["orbit_id", "index", "x0", "x1", "x2", "period", "lambda_c", "stable_index", "residual"]


def orbit_rows(orbits, dim: int):
    """CSV rows (orbit_id, index, coords..., period, lambda_c, stable_index, residual)."""
    for oid, o in enumerate(orbits):
        for i, pt in enumerate(o.points):
            yield [oid, i, *[float(c) for c in pt[:dim]], o.period,
                   float("nan") if o.lambda_c is None else o.lambda_c,
                   -1 if o.stable_index is None else o.stable_index, o.residual]
