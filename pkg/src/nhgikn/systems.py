"""Concrete invertible maps of T^2 and T^3 with closed-form differentials.

Every model works on the universal cover through ``lift`` (a continuous map
R^d -> R^d commuting with integer translations); ``evaluate`` wraps the result
into the fundamental domain.  All evaluation methods broadcast over leading
axes, so a batch of points of shape ``(k, d)`` is evaluated in one call.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import kernels
from .torus import TorusError, wrap

TWO_PI = 2.0 * np.pi
DEFAULT_ORBIT_CAP = 10_000_000


class ModelError(ValueError):
    """Invalid model parameters."""


def _int_det(m: list[list[int]]) -> int:
    if len(m) == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    if len(m) == 3:
        a, b, c = m
        return (a[0] * (b[1] * c[2] - b[2] * c[1])
                - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]))
    raise ModelError("only 2x2 and 3x3 matrices are supported")


def _int_inverse(m: list[list[int]]) -> np.ndarray:
    """Exact inverse of a unimodular integer matrix (entries are integers)."""
    det = _int_det(m)
    n = len(m)
    cof = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[m[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            cof[i][j] = (-1) ** (i + j) * (_int_det(minor) if n == 3 else minor[0][0])
    inv = [[Fraction(cof[j][i], det) for j in range(n)] for i in range(n)]
    return np.array([[float(v) for v in row] for row in inv])


def _as_int_matrix(matrix, size=None) -> list[list[int]]:
    arr = np.asarray(matrix)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ModelError(f"matrix must be square, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ModelError(f"matrix must be {size}x{size}")
    if not np.all(np.equal(np.mod(arr, 1), 0)):
        raise ModelError("matrix entries must be integers")
    m = [[int(v) for v in row] for row in arr]
    if abs(_int_det(m)) != 1:
        raise ModelError(f"matrix must have determinant +-1, got {_int_det(m)}")
    return m


def sorted_spectrum(matrix: np.ndarray):
    """Eigenvalues sorted by decreasing modulus with matching unit eigenvectors."""
    w, v = np.linalg.eig(np.asarray(matrix, dtype=float))
    order = np.argsort(-np.abs(w), kind="stable")
    w, v = w[order], v[:, order]
    if np.all(np.abs(w.imag) < 1e-12):
        w, v = w.real, v.real
        v = v / np.linalg.norm(v, axis=0)
        # deterministic sign: largest component positive
        for j in range(v.shape[1]):
            if v[np.argmax(np.abs(v[:, j])), j] < 0:
                v[:, j] = -v[:, j]
    return w, v


class MapModel(ABC):
    """An invertible smooth self-map of T^d with analytic differentials."""

    dim: int
    orbit_cap: int = DEFAULT_ORBIT_CAP

    @abstractmethod
    def lift(self, v: np.ndarray) -> np.ndarray:
        """The map on the cover R^d."""

    @abstractmethod
    def lift_inverse(self, v: np.ndarray) -> np.ndarray:
        """The inverse map on the cover."""

    @abstractmethod
    def differential(self, x: np.ndarray) -> np.ndarray:
        """Df(x) as a (..., d, d) array."""

    @abstractmethod
    def to_config(self) -> dict:
        """Plain-data description, round-trippable through ``model_from_config``."""

    def evaluate(self, x) -> np.ndarray:
        x = self._check(x)
        return wrap(self.lift(x))

    def inverse(self, x) -> np.ndarray:
        x = self._check(x)
        return wrap(self.lift_inverse(x))

    def inverse_differential(self, x) -> np.ndarray:
        """D(f^-1)(x) = Df(f^-1(x))^-1."""
        x = self._check(x)
        return np.linalg.inv(self.differential(self.lift_inverse(x)))

    def nonaffine_regions(self):
        """Balls (center, radius) outside of which the lift is affine.

        ``None`` means the map is nowhere known to be affine.
        """
        return None

    def center_log_derivative(self, x):
        """log|Df| along an exactly known invariant center direction, or None."""
        return None

    def center_direction(self, x):
        """Exactly known invariant center direction field, or None."""
        return None

    def orbit(self, x, n: int) -> np.ndarray:
        """Forward orbit x, f(x), ..., f^n(x) as an (n+1, d) array."""
        x = self._check(x)
        out = np.empty((n + 1, self.dim))
        out[0] = x
        for i in range(n):
            out[i + 1] = self.evaluate(out[i])
        return out

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise TorusError(f"point of dimension {x.shape[-1]} given to a {self.dim}-dimensional model")
        return x


class LinearToral(MapModel):
    """The automorphism of T^d induced by a unimodular integer matrix."""

    def __init__(self, matrix):
        self._imatrix = _as_int_matrix(matrix)
        self.matrix = np.array(self._imatrix, dtype=float)
        self.matrix_inv = _int_inverse(self._imatrix)
        self.dim = self.matrix.shape[0]
        self.eigenvalues, self.eigenvectors = sorted_spectrum(self.matrix)

    def lift(self, v):
        return np.asarray(v, dtype=float) @ self.matrix.T

    def lift_inverse(self, v):
        return np.asarray(v, dtype=float) @ self.matrix_inv.T

    def differential(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix, x.shape[:-1] + (self.dim, self.dim)).copy()

    def inverse_differential(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.matrix_inv, x.shape[:-1] + (self.dim, self.dim)).copy()

    def nonaffine_regions(self):
        return []

    def center_log_derivative(self, x):
        if self.dim != 3 or np.iscomplexobj(self.eigenvalues):
            return None
        x = np.asarray(x, dtype=float)
        lc = float(np.log(abs(self.eigenvalues[1])))
        return np.full(x.shape[:-1], lc) if x.ndim > 1 else lc

    def center_direction(self, x):
        if self.dim != 3 or np.iscomplexobj(self.eigenvalues):
            return None
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.eigenvectors[:, 1], x.shape).copy()

    def orbit(self, x, n):
        x = self._check(x)
        return kernels.affine_orbit(self.matrix, x, int(n))

    def to_config(self):
        return {"type": "linear", "matrix": self._imatrix}


@dataclass(frozen=True)
class Coupling:
    """Real trigonometric polynomial on T^2: sum of a cos(2 pi k.x) + b sin(2 pi k.x)."""

    modes: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))  # (J, 2) integer frequencies
    cos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sin: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def from_terms(cls, terms) -> "Coupling":
        terms = list(terms or [])
        modes = np.array([t["k"] for t in terms], dtype=float).reshape(-1, 2)
        if not np.all(np.equal(np.mod(modes, 1), 0)):
            raise ModelError("coupling frequencies must be integers")
        return cls(modes=modes,
                   cos=np.array([float(t.get("cos", 0.0)) for t in terms]),
                   sin=np.array([float(t.get("sin", 0.0)) for t in terms]))

    def __call__(self, x):
        phase = TWO_PI * (np.asarray(x, dtype=float) @ self.modes.T)
        return np.cos(phase) @ self.cos + np.sin(phase) @ self.sin

    def gradient(self, x):
        phase = TWO_PI * (np.asarray(x, dtype=float) @ self.modes.T)
        weights = -np.sin(phase) * self.cos + np.cos(phase) * self.sin
        return TWO_PI * (weights @ self.modes)

    def sup_bound(self) -> float:
        return float(np.sum(np.hypot(self.cos, self.sin)))

    def terms(self):
        return [{"k": [int(a), int(b)], "cos": float(c), "sin": float(s)}
                for (a, b), c, s in zip(self.modes, self.cos, self.sin)]


class SkewCircleExtension(MapModel):
    """(x, theta) -> (A x, theta + alpha + coupling(x) + eps sin(2 pi theta)) on T^2 x S^1."""

    dim = 3

    def __init__(self, base, alpha=0.0, epsilon=0.0, coupling=None):
        self._ibase = _as_int_matrix(base, size=2)
        self.base = np.array(self._ibase, dtype=float)
        if abs(np.trace(self.base)) <= 2:
            raise ModelError("base matrix must be hyperbolic (|trace| > 2)")
        self.base_inv = _int_inverse(self._ibase)
        self.alpha = float(alpha)
        self.epsilon = float(epsilon)
        if not TWO_PI * abs(self.epsilon) < 1.0:
            raise ModelError("fiber map is not a circle diffeomorphism: "
                             f"2*pi*|eps| = {TWO_PI * abs(self.epsilon):.4g} >= 1")
        self.coupling = coupling if isinstance(coupling, Coupling) else Coupling.from_terms(coupling)

    def lift(self, v):
        v = np.asarray(v, dtype=float)
        x, th = v[..., :2], v[..., 2]
        out = np.empty_like(v)
        out[..., :2] = x @ self.base.T
        out[..., 2] = th + self.alpha + self.coupling(x) + self.epsilon * np.sin(TWO_PI * th)
        return out

    def lift_inverse(self, v):
        v = np.asarray(v, dtype=float)
        y, phi = v[..., :2], v[..., 2]
        x = y @ self.base_inv.T
        target = phi - self.alpha - self.coupling(x)
        th = np.array(target, dtype=float, copy=True)
        for _ in range(60):
            g = th + self.epsilon * np.sin(TWO_PI * th) - target
            dg = 1.0 + TWO_PI * self.epsilon * np.cos(TWO_PI * th)
            step = g / dg
            th = th - step
            if np.all(np.abs(step) < 1e-16):
                break
        out = np.empty_like(v)
        out[..., :2] = x
        out[..., 2] = th
        return out

    def differential(self, x):
        x = np.asarray(x, dtype=float)
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., :2, :2] = self.base
        J[..., 2, :2] = self.coupling.gradient(x[..., :2])
        J[..., 2, 2] = 1.0 + TWO_PI * self.epsilon * np.cos(TWO_PI * x[..., 2])
        return J

    def fiber_derivative(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + TWO_PI * self.epsilon * np.cos(TWO_PI * x[..., 2])

    def center_log_derivative(self, x):
        out = np.log(np.abs(self.fiber_derivative(x)))
        return float(out) if np.ndim(out) == 0 else out

    def center_direction(self, x):
        x = np.asarray(x, dtype=float)
        e = np.zeros(x.shape)
        e[..., 2] = 1.0
        return e

    def orbit(self, x, n):
        x = self._check(x)
        c = self.coupling
        return kernels.skew_orbit(self.base, self.alpha, self.epsilon, c.modes, c.cos, c.sin, x, int(n))

    def to_config(self):
        return {"type": "skew", "matrix": self._ibase, "alpha": self.alpha,
                "epsilon": self.epsilon, "coupling": self.coupling.terms()}


def bump(t, r):
    """C^2 bump (1 - (t/r)^2)^3 on [0, r), zero beyond."""
    u2 = (np.asarray(t, dtype=float) / r) ** 2
    return np.where(u2 < 1.0, (1.0 - np.minimum(u2, 1.0)) ** 3, 0.0)


class DAModel(MapModel):
    """Local deformation of a hyperbolic 3x3 automorphism along its center eigendirection.

    f(x) = M x - s * bump(|w|) * (l . w) * e_c with w the displacement of x
    from the deformation center, e_c the unit center eigenvector of M and l the
    matching left eigenvector (l . e_c = 1).  At a fixed center the center
    multiplier drops from lambda_c to lambda_c - s.
    """

    dim = 3

    def __init__(self, matrix, center=(0.0, 0.0, 0.0), radius=0.1, strength=0.0, check_grid: int = 24):
        self._imatrix = _as_int_matrix(matrix, size=3)
        self.matrix = np.array(self._imatrix, dtype=float)
        self.matrix_inv = _int_inverse(self._imatrix)
        w, v = sorted_spectrum(self.matrix)
        if np.iscomplexobj(w) or not (abs(w[0]) > 1 and abs(w[2]) < 1 and abs(w[0]) > abs(w[1]) > abs(w[2])):
            raise ModelError("linear part needs three real eigenvalues of distinct modulus straddling 1")
        self.eigenvalues, self.eigenvectors = w, v
        self.center_value = float(w[1])
        self.ec = v[:, 1].copy()
        left = np.linalg.inv(v)
        self.lc = left[1] / (left[1] @ self.ec)
        self.center = wrap(np.asarray(center, dtype=float))
        self.radius = float(radius)
        self.strength = float(strength)
        if not 0.0 < self.radius < 0.5:
            raise ModelError("deformation radius must lie in (0, 1/2)")
        if self.strength != 0.0 and check_grid:
            self._verify_invertible(check_grid)

    def _disp(self, v):
        w = np.asarray(v, dtype=float) - self.center
        return w - np.round(w)

    def lift(self, v):
        v = np.asarray(v, dtype=float)
        w = self._disp(v)
        b = bump(np.linalg.norm(w, axis=-1), self.radius)
        return v @ self.matrix.T - self.strength * (b * (w @ self.lc))[..., None] * self.ec

    def lift_inverse(self, v):
        v = np.asarray(v, dtype=float)
        x = v @ self.matrix_inv.T
        if self.strength == 0.0:
            return x
        # only the center coordinate moves: solve tau = (s/lam_c) b(x+tau e_c) (l.(w+tau e_c))
        k = self.strength / self.center_value
        w0 = self._disp(x)
        a0 = w0 @ self.lc
        tau = np.zeros(x.shape[:-1])
        for _ in range(80):
            w = w0 + tau[..., None] * self.ec
            rho = np.linalg.norm(w, axis=-1)
            u2 = (rho / self.radius) ** 2
            inside = u2 < 1.0
            b = np.where(inside, (1.0 - np.minimum(u2, 1.0)) ** 3, 0.0)
            db = np.where(inside, -6.0 * (1.0 - np.minimum(u2, 1.0)) ** 2 / self.radius ** 2, 0.0) * (w @ self.ec)
            a = a0 + tau
            g = tau - k * b * a
            dg = 1.0 - k * (db * a + b)
            step = g / dg
            tau = tau - step
            if np.all(np.abs(step) < 1e-17):
                break
        return x + tau[..., None] * self.ec

    def differential(self, x):
        x = np.asarray(x, dtype=float)
        w = self._disp(x)
        rho = np.linalg.norm(w, axis=-1)
        u2 = (rho / self.radius) ** 2
        inside = u2 < 1.0
        b = np.where(inside, (1.0 - np.minimum(u2, 1.0)) ** 3, 0.0)
        db = np.where(inside, -6.0 * (1.0 - np.minimum(u2, 1.0)) ** 2 / self.radius ** 2, 0.0)
        grad_term = (w @ self.lc)[..., None] * db[..., None] * w  # (l.w) grad b
        row = b[..., None] * self.lc + grad_term
        J = np.broadcast_to(self.matrix, x.shape[:-1] + (3, 3)).copy()
        J -= self.strength * self.ec[:, None] * row[..., None, :]
        return J

    def nonaffine_regions(self):
        if self.strength == 0.0:
            return []
        return [(self.center.copy(), self.radius)]

    def orbit(self, x, n):
        x = self._check(x)
        return kernels.da_orbit(self.matrix, self.center, self.radius, self.strength, self.lc, self.ec, x, int(n))

    def _verify_invertible(self, res):
        # center-line monotonicity makes the deformation a bijection; check det on a grid
        g = (np.arange(res) + 0.5) / res
        pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        near = self.center + self.radius * (2 * pts - 1)
        dets = np.linalg.det(self.differential(np.concatenate([pts, near])))
        if not np.all(dets > 1e-9):
            raise ModelError(f"deformation destroys invertibility (min det Df = {dets.min():.3g}); reduce strength")

    def to_config(self):
        return {"type": "da", "matrix": self._imatrix, "center": [float(c) for c in self.center],
                "radius": self.radius, "strength": self.strength}


class IdentityMap(MapModel):
    """The identity of T^d; a deliberately non-hyperbolic control model."""

    def __init__(self, dim=3):
        self.dim = int(dim)

    def lift(self, v):
        return np.array(v, dtype=float, copy=True)

    def lift_inverse(self, v):
        return np.array(v, dtype=float, copy=True)

    def differential(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-1] + (self.dim, self.dim)).copy()

    def nonaffine_regions(self):
        return []

    def to_config(self):
        return {"type": "identity", "dim": self.dim}


def orbit_segment(model: MapModel, x, n: int, cap: int | None = None) -> np.ndarray:
    """Points x, f(x), ..., f^n(x) (or backward images for n < 0), length |n| + 1."""
    cap = model.orbit_cap if cap is None else cap
    n = int(n)
    if abs(n) > cap:
        raise ModelError(f"orbit length {abs(n)} exceeds the configured cap {cap}")
    x = wrap(model._check(x))
    if n >= 0:
        return model.orbit(x, n)
    out = np.empty((-n + 1, model.dim))
    out[0] = x
    for i in range(-n):
        out[i + 1] = model.inverse(out[i])
    return out


CAT_MATRIX = [[2, 1], [1, 1]]
M3_MATRIX = [[2, 1, 0], [1, 2, 1], [0, 1, 1]]

_MODEL_KEYS = {
    "linear": {"type", "matrix"},
    "skew": {"type", "matrix", "alpha", "epsilon", "coupling"},
    "da": {"type", "matrix", "center", "radius", "strength"},
    "identity": {"type", "dim"},
}


def model_from_config(cfg: dict) -> MapModel:
    """Build a model from its plain-data description (strict about keys)."""
    kind = cfg.get("type")
    if kind not in _MODEL_KEYS:
        raise ModelError(f"unknown model type {kind!r}; expected one of {sorted(_MODEL_KEYS)}")
    unknown = set(cfg) - _MODEL_KEYS[kind]
    if unknown:
        raise ModelError(f"unknown key(s) in model section: {', '.join(sorted(unknown))}")
    if kind == "linear":
        return LinearToral(cfg["matrix"])
    if kind == "skew":
        return SkewCircleExtension(cfg.get("matrix", CAT_MATRIX), cfg.get("alpha", 0.0),
                                   cfg.get("epsilon", 0.0), cfg.get("coupling"))
    if kind == "da":
        return DAModel(cfg.get("matrix", M3_MATRIX), cfg.get("center", (0, 0, 0)),
                       cfg.get("radius", 0.1), cfg.get("strength", 0.0))
    return IdentityMap(cfg.get("dim", 3))
