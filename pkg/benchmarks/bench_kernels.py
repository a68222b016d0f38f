"""Compiled extension vs numpy fallback on the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import timeit

import numpy as np

from nhgikn import kernels
from nhgikn.systems import CAT_MATRIX, M3_MATRIX, DAModel, SkewCircleExtension


def cases(scale: int):
    rng = np.random.default_rng(0)
    M = np.array(M3_MATRIX, dtype=float)
    da = DAModel(M3_MATRIX, radius=0.12, strength=0.9)
    sk = SkewCircleExtension(CAT_MATRIX, 0.0, 0.05, [{"k": [1, 0], "cos": 0.02, "sin": 0.01}])
    J = da.differential(da.orbit(rng.random(3), scale - 1))
    b = rng.standard_normal((scale, 3))
    c = sk.coupling
    return {
        "affine_orbit": lambda im: kernels.affine_orbit(M, rng.random(3), scale, impl=im),
        "skew_orbit": lambda im: kernels.skew_orbit(np.array(CAT_MATRIX, float), 0.0, 0.05, c.modes, c.cos, c.sin,
                                                    rng.random(3), scale, impl=im),
        "da_orbit": lambda im: kernels.da_orbit(M, da.center, da.radius, da.strength, da.lc, da.ec, rng.random(3),
                                                scale, impl=im),
        "qr_log_diagonals": lambda im: kernels.qr_log_diagonals(J, impl=im),
        "push_path": lambda im: kernels.push_path(J, np.ones(3), impl=im),
        "cyclic_qr_factor": lambda im: kernels.cyclic_qr_factor(J, b, impl=im),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--scale", type=int, default=20000, help="orbit / cocycle length")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)
    impls = kernels.implementations()
    rows = []
    for name, fn in cases(args.scale).items():
        t = {k: min(timeit.repeat(lambda: fn(im), number=1, repeat=args.repeat)) for k, im in impls.items()}
        rows.append({"kernel": name, **{f"{k}_s": v for k, v in t.items()},
                     "speedup": t["python"] / t["cython"] if "cython" in t else None})
    print(f"{'kernel':<18}" + "".join(f"{k + ' [s]':>14}" for k in impls) + f"{'speedup':>10}")
    for r in rows:
        sp = "-" if r["speedup"] is None else f"{r['speedup']:.1f}x"
        print(f"{r['kernel']:<18}" + "".join(f"{r[k + '_s']:>14.4f}" for k in impls) + f"{sp:>10}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"scale": args.scale, "rows": rows}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
