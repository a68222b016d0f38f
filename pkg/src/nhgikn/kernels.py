"""Kernel dispatch: the compiled extension when importable, numpy otherwise.

Set ``NHGIKN_PURE_PYTHON=1`` before import to force the fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("NHGIKN_PURE_PYTHON") != "1":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=float)


def affine_orbit(M, x, n, impl=None):
    return (impl or _impl).affine_orbit(_c(M), _c(x), int(n))


def skew_orbit(A, alpha, eps, modes, ca, sa, x, n, impl=None):
    return (impl or _impl).skew_orbit(_c(A), float(alpha), float(eps), _c(np.reshape(modes, (-1, 2))),
                                      _c(ca), _c(sa), _c(x), int(n))


def da_orbit(M, c, r, s, lc, ec, x, n, impl=None):
    return (impl or _impl).da_orbit(_c(M), _c(c), float(r), float(s), _c(lc), _c(ec), _c(x), int(n))


def qr_log_diagonals(J, Q0=None, impl=None):
    J = _c(J)
    Q0 = np.eye(J.shape[1]) if Q0 is None else _c(Q0)
    return (impl or _impl).qr_log_diagonals(J, Q0)


def push_direction(J, v, impl=None):
    return (impl or _impl).push_direction(_c(J), _c(v))


def push_path(J, v, impl=None):
    return (impl or _impl).push_path(_c(J), _c(v))


def cyclic_qr_factor(J, b, impl=None):
    return (impl or _impl).cyclic_qr_factor(_c(J), _c(b))


def cyclic_back_substitute(Rs, Gs, Bs, cs, x0, impl=None):
    return (impl or _impl).cyclic_back_substitute(_c(Rs), _c(Gs), _c(Bs), _c(cs), _c(x0))


def implementations():
    """All available backends by name (for agreement tests and benchmarks)."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels

        out["cython"] = _ckernels
    except ImportError:  # pragma: no cover
        pass
    return out
