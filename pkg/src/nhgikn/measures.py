"""Atomic measures, the weak-* metric, (eps, kappa)-good certificates and the GIKN limit check."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np
import scipy.sparse as sps
from scipy.sparse.csgraph import maximum_flow
from scipy.spatial import cKDTree

from .torus import TorusError, wrap

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class AtomicMeasure:
    atoms: np.ndarray
    weights: np.ndarray
    periodic: bool = False

    def __post_init__(self):
        if abs(float(np.sum(self.weights)) - 1.0) > 1e-14 * max(1, len(self.weights)):
            raise ValueError("weights must sum to 1")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @classmethod
    def uniform(cls, points, periodic: bool = False) -> "AtomicMeasure":
        pts = wrap(np.atleast_2d(np.asarray(points, dtype=float)))
        return cls(atoms=pts, weights=np.full(len(pts), 1.0 / len(pts)), periodic=periodic)

    @classmethod
    def periodic_orbit(cls, orbit) -> "AtomicMeasure":
        return cls.uniform(getattr(orbit, "points", orbit), periodic=True)

    @classmethod
    def weighted(cls, points, weights) -> "AtomicMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(atoms=wrap(np.atleast_2d(points)), weights=w / w.sum())

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def mix(self, other: "AtomicMeasure", t: float = 0.5) -> "AtomicMeasure":
        return AtomicMeasure(atoms=np.concatenate([self.atoms, other.atoms]),
                             weights=np.concatenate([(1 - t) * self.weights, t * other.weights]))


@lru_cache(maxsize=None)
def _frequencies(dim: int, count: int) -> tuple:
    """Nonzero k in a half-space (first nonzero entry positive), by |k|_1 then lexicographic."""
    out = []
    r = 1
    while len(out) < count:
        shell = []
        for k in product(range(-r, r + 1), repeat=dim):
            if sum(abs(c) for c in k) != r:
                continue
            first = next(c for c in k if c != 0)
            if first > 0:
                shell.append(k)
        out.extend(sorted(shell))
        r += 1
    return tuple(out[:count])


@dataclass(frozen=True)
class TestFunctionFamily:
    """phi_1 = 1, then cos(2 pi k.x), sin(2 pi k.x) for k in a fixed enumeration; all sup norms 1."""

    dim: int

    def terms(self, N_terms: int):
        """List of (kind, k) for the first N_terms functions."""
        ks = _frequencies(self.dim, (N_terms + 1) // 2 + 1)
        out = [("const", (0,) * self.dim)]
        for k in ks:
            out.append(("cos", k))
            out.append(("sin", k))
        return out[:N_terms]

    def integrals(self, mu: AtomicMeasure, N_terms: int) -> np.ndarray:
        terms = self.terms(N_terms)
        K = np.array([k for _, k in terms], dtype=float)
        phase = TWO_PI * (mu.atoms @ K.T)
        kinds = np.array([kind for kind, _ in terms])
        vals = np.where(kinds == "cos", np.cos(phase), np.where(kinds == "sin", np.sin(phase), 1.0))
        return mu.weights @ vals

    def sup_norms(self, N_terms: int) -> np.ndarray:
        return np.ones(N_terms)


def weak_star_distance(mu: AtomicMeasure, nu: AtomicMeasure, family: TestFunctionFamily | None = None,
                       N_terms: int = 64) -> float:
    """sum_{n=1}^{N} |int phi_n dmu - int phi_n dnu| / (2^n (|phi_n|_0 + 1)); tail below 2^-N."""
    if mu.dim != nu.dim:
        raise TorusError("measures live on tori of different dimension")
    if N_terms < 1:
        raise ValueError("N_terms must be >= 1")
    family = family or TestFunctionFamily(mu.dim)
    diff = np.abs(family.integrals(mu, N_terms) - family.integrals(nu, N_terms))
    scale = np.ldexp(1.0, -np.arange(1, N_terms + 1)) / (family.sup_norms(N_terms) + 1.0)
    total = 0.0
    for v in diff * scale:  # fixed order for reproducibility
        total += float(v)
    return total


def _orbit_points(o) -> np.ndarray:
    return wrap(np.atleast_2d(np.asarray(getattr(o, "points", o), dtype=float)))


def admissible_pairs(Op, Oq, eps: float) -> np.ndarray:
    """Pairs (a, b) with d(p_{a+i}, q_{b+i}) < eps for i = 0..m-1, m = #O_q (indices mod periods)."""
    P, Qp = _orbit_points(Op), _orbit_points(Oq)
    nP, m = len(P), len(Qp)
    tp, tq = cKDTree(P, boxsize=1.0), cKDTree(Qp, boxsize=1.0)
    sdm = tp.sparse_distance_matrix(tq, eps, output_type="coo_matrix")
    keep = sdm.data < eps
    a, b = sdm.row[keep].astype(np.int64), sdm.col[keep].astype(np.int64)
    # exact zero distances are not stored by the sparse matrix
    same = tp.query_ball_tree(tq, 0.0)
    za = [i for i, lst in enumerate(same) for _ in lst]
    zb = [j for lst in same for j in lst]
    a = np.concatenate([a, np.array(za, dtype=np.int64)])
    b = np.concatenate([b, np.array(zb, dtype=np.int64)])
    keys = np.unique(a * m + b)
    if len(keys) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    a, b = keys // m, keys % m
    nxt_key = ((a + 1) % nP) * m + (b + 1) % m
    pos = np.searchsorted(keys, nxt_key)
    pos_c = np.minimum(pos, len(keys) - 1)
    jump = np.where(keys[pos_c] == nxt_key, pos_c, -1)
    # pointer doubling: walk m-1 steps through close pairs
    steps = m - 1
    cur = np.arange(len(keys))
    ok = np.ones(len(keys), dtype=bool)
    J = jump
    while steps:
        if steps & 1:
            nxt = np.where(ok, J[np.maximum(cur, 0)], -1)
            ok &= nxt >= 0
            cur = np.where(ok, nxt, cur)
        steps >>= 1
        if steps:
            J = np.where(J >= 0, J[np.maximum(J, 0)], -1)
    return np.stack([a[ok], b[ok]], axis=1)


def _feasible(adj_a, adj_b, nP, m, c):
    """Max-flow: each q-point receives exactly c distinct p-points along admissible pairs."""
    src, sink = 0, 1 + m + nP
    rows = np.concatenate([np.zeros(m, dtype=np.int64), 1 + adj_b, 1 + m + np.arange(nP)])
    cols = np.concatenate([1 + np.arange(m), 1 + m + adj_a, np.full(nP, sink)])
    caps = np.concatenate([np.full(m, c), np.ones(len(adj_a)), np.ones(nP)]).astype(np.int32)
    G = sps.csr_matrix((caps, (rows, cols)), shape=(sink + 1, sink + 1))
    res = maximum_flow(G, src, sink)
    flow = res.flow.tocoo()
    sel = (flow.row >= 1) & (flow.row <= m) & (flow.col > m) & (flow.col < sink) & (flow.data > 0)
    pi = np.full(nP, -1, dtype=np.int64)
    pi[flow.col[sel] - 1 - m] = flow.row[sel] - 1
    return res.flow_value == c * m, pi


@dataclass
class GoodnessReport:
    eps: float
    kappa: float
    kappa_untrimmed: float
    multiplicity: int
    K: np.ndarray  # indices of O_p in the matched set
    pi: np.ndarray  # pi[a] = index in O_q, or -1
    multiplicity_table: np.ndarray
    period_p: int
    period_q: int
    verified: bool = True
    notes: list = field(default_factory=list)

    def to_dict(self):
        return {"eps": self.eps, "kappa": self.kappa, "kappa_untrimmed": self.kappa_untrimmed,
                "multiplicity": self.multiplicity, "matched": int(len(self.K)), "period_p": self.period_p,
                "period_q": self.period_q, "verified": self.verified}


def verify_goodness(Op, Oq, eps: float, pi: np.ndarray) -> bool:
    """Re-check the three conditions of (eps, kappa)-goodness for a projection pi (-1 = not in K)."""
    P, Qp = _orbit_points(Op), _orbit_points(Oq)
    m = len(Qp)
    K = np.nonzero(pi >= 0)[0]
    if len(K) == 0:
        return True
    from .torus import torus_distance

    for i in range(m):
        dd = torus_distance(P[(K + i) % len(P)], Qp[(pi[K] + i) % m])
        if np.any(np.atleast_1d(dd) >= eps):
            return False
    counts = np.bincount(pi[K], minlength=m)
    return bool(np.all(counts == counts[0]))


def goodness_check(model, Op, Oq, eps: float) -> GoodnessReport:
    """Largest kappa such that O_p is (eps, kappa)-good for O_q, with an optimal projection.

    ``model`` is accepted for interface symmetry; the orbits, listed in
    dynamical order, already determine f on their points.
    """
    P, Qp = _orbit_points(Op), _orbit_points(Oq)
    nP, m = len(P), len(Qp)
    pairs = admissible_pairs(P, Qp, eps)
    untrimmed = len(np.unique(pairs[:, 0])) / nP if len(pairs) else 0.0
    best_c, best_pi = 0, np.full(nP, -1, dtype=np.int64)
    if len(pairs):
        lo, hi = 0, nP // m  # feasibility is monotone in c
        while lo < hi:
            c = (lo + hi + 1) // 2
            ok, pi = _feasible(pairs[:, 0], pairs[:, 1], nP, m, c)
            if ok:
                lo, best_pi = c, pi
            else:
                hi = c - 1
        best_c = lo
    K = np.nonzero(best_pi >= 0)[0]
    table = np.bincount(best_pi[K], minlength=m) if len(K) else np.zeros(m, dtype=np.int64)
    rep = GoodnessReport(eps=eps, kappa=best_c * m / nP, kappa_untrimmed=untrimmed, multiplicity=best_c, K=K,
                         pi=best_pi, multiplicity_table=table, period_p=nP, period_q=m)
    rep.verified = verify_goodness(P, Qp, eps, best_pi)
    return rep


def support_density(tail, reference_sample=None, resolution: int = 16) -> dict:
    """Hausdorff distances between a reference sample and the union of the tail orbits."""
    from .bundles import grid_points

    pts = np.concatenate([_orbit_points(o) for o in tail])
    ref = grid_points(pts.shape[1], resolution) if reference_sample is None else wrap(np.atleast_2d(reference_sample))
    fwd = float(np.max(cKDTree(pts, boxsize=1.0).query(ref)[0]))
    rev = float(np.max(cKDTree(ref, boxsize=1.0).query(pts)[0]))
    return {"forward": fwd, "reverse": rev}


@dataclass
class LimitSummary:
    eps_partial_sum: float
    kappa_partial_product: float
    kappas_measured: list
    distances: list
    density: list
    first_failure: int | None
    passed: bool
    notes: list

    def to_dict(self):
        return {"eps_partial_sum": self.eps_partial_sum, "kappa_partial_product": self.kappa_partial_product,
                "kappas_measured": self.kappas_measured, "weak_star_distances": self.distances,
                "support_density": self.density, "first_failure": self.first_failure, "passed": self.passed,
                "notes": self.notes}


def gikn_limit_check(orbits, eps_schedule, kappa_schedule, reference_sample=None, N_terms: int = 64,
                     reports=None) -> LimitSummary:
    """Check O_{n+1} is (eps_n, kappa_n)-good for O_n along the sequence and summarize the limit data."""
    eps = [float(e) for e in eps_schedule]
    kap = [float(k) for k in kappa_schedule]
    steps = len(orbits) - 1
    if len(eps) < steps or len(kap) < steps:
        raise ValueError("schedules shorter than the orbit sequence")
    measured, dists, dens = [], [], []
    first = None
    notes = []
    for i in range(steps):
        rep = reports[i] if reports is not None else goodness_check(None, orbits[i + 1], orbits[i], eps[i])
        measured.append(rep.kappa)
        mu, nu = AtomicMeasure.periodic_orbit(orbits[i]), AtomicMeasure.periodic_orbit(orbits[i + 1])
        dists.append(weak_star_distance(mu, nu, N_terms=N_terms))
        if reference_sample is not None:
            dens.append(support_density(orbits[i + 1:i + 2], reference_sample))
        if first is None and not (rep.kappa >= kap[i] and rep.verified):
            first = i
    psum = float(np.sum(eps[:steps]))
    pprod = float(np.prod(kap[:steps])) if steps else 1.0
    if pprod == 1.0:
        notes.append("all kappa_n = 1: product 1 is the boundary case, accepted")
    if not pprod > 0:
        notes.append("kappa product vanishes")
        if first is None:
            first = int(np.argmin(kap[:steps]))
    passed = first is None and pprod > 0 and np.isfinite(psum)
    return LimitSummary(eps_partial_sum=psum, kappa_partial_product=pprod, kappas_measured=measured,
                        distances=dists, density=dens, first_failure=first, passed=bool(passed), notes=notes)
