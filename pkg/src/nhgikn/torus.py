"""Geometry of the flat torus T^d = R^d / Z^d (d = 2, 3).

Points are stored as float arrays in the fundamental domain [0, 1)^d.  Most
functions accept a single point of shape ``(d,)`` or a batch ``(..., d)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TorusError(ValueError):
    """Invalid input to a torus operation."""


def wrap(v) -> np.ndarray:
    """Reduce ``v`` coordinatewise modulo 1 into [0, 1)."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise TorusError(f"cannot wrap non-finite coordinates: {v!r}")
    w = np.mod(v, 1.0)
    # np.mod(-1e-20, 1.0) == 1.0 in floating point
    w[w >= 1.0] = 0.0
    return w


def displacement(a, b) -> np.ndarray:
    """Shortest cover displacement from ``a`` to a translate of ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise TorusError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    return b - nearest_translate_offset(a, b) - a


def nearest_translate_offset(a, b) -> np.ndarray:
    """Integer vector k such that b - k is the translate of b nearest to a.

    Ties (a coordinate difference of exactly 1/2) go to the nonnegative
    displacement, so the result is deterministic.
    """
    diff = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    return np.floor(diff + 0.5)


def torus_distance(a, b) -> np.ndarray | float:
    """Euclidean distance on T^d, minimized over integer translates."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != b.shape[-1]:
        raise TorusError(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    diff = np.abs(np.mod(b - a, 1.0))
    diff = np.minimum(diff, 1.0 - diff)
    out = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LiftedPath:
    """A path on the torus together with a continuous lift to the cover.

    ``points = base + offsets`` with integer ``offsets``; projecting a cover
    point back to the torus returns the stored base point exactly.
    """

    points: np.ndarray  # (k, d) cover coordinates
    base: np.ndarray  # (k, d) torus points
    offsets: np.ndarray  # (k, d) integer translates

    def __len__(self) -> int:
        return len(self.points)

    def project(self) -> np.ndarray:
        return self.base.copy()


def canonical_lift(points, start=None) -> LiftedPath:
    """Lift a sequence of torus points with small steps to a continuous cover path.

    Each cover point is the translate of its torus point nearest to the
    previous cover point.  ``start`` (default: the first point) fixes the first
    cover point and must project to the first torus point.
    """
    base = np.atleast_2d(np.asarray(points, dtype=float))
    if base.size == 0:
        raise TorusError("cannot lift an empty path")
    if start is None:
        start = base[0]
    start = np.asarray(start, dtype=float)
    if start.shape != base[0].shape:
        raise TorusError("start has the wrong dimension")
    if torus_distance(wrap(start), base[0]) > 1e-12:
        raise TorusError("start does not project to the first point")
    steps = np.diff(base, axis=0)
    steps = steps - np.floor(steps + 0.5)
    if len(steps):
        norms = np.linalg.norm(steps, axis=1)
        bad = np.nonzero(norms >= 0.5)[0]
        if len(bad):
            i = int(bad[0])
            raise TorusError(f"lift ambiguous: gap {norms[i]:.3g} >= 1/2 between points {i} and {i + 1}")
    # cumulative integer jumps: exact, no drift
    jumps = -np.floor(np.diff(base, axis=0) + 0.5)
    offsets = np.zeros_like(base)
    offsets[0] = np.round(start - base[0])
    offsets[1:] = offsets[0] + np.cumsum(jumps, axis=0)
    cover = base + offsets
    cover[0] = start
    return LiftedPath(points=cover, base=base.copy(), offsets=offsets)
