"""nhgikn command line: analyze | orbits | gibbs | gikn | metric."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .bundles import grid_points, verify_partial_hyperbolicity
from .config import ConfigError, config_hash, load
from .engine import GiknError, compute_constants, run_gikn
from .exponents import qr_lyapunov_spectrum
from .gibbs import estimate_tau0, leb_center_exponent, sample_u_gibbs
from .measures import AtomicMeasure, TestFunctionFamily, weak_star_distance
from .orbits import ORBIT_CSV_HEADER, NewtonError, PeriodicOrbit, PseudoOrbit, annotate, newton_close, \
    orbit_rows, periodic_census
from .systems import model_from_config
from .torus import wrap

log = logging.getLogger("nhgikn")

EXIT_OK, EXIT_GATE, EXIT_ERROR = 0, 1, 2
DEFAULT_ANCHOR = (0.3, 0.6, 0.2)


class CommandError(RuntimeError):
    """A precondition failure reported with a diagnostic and exit status 2."""


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_report(out: Path, command: str, cfg: dict, body: dict, gates: dict):
    report = {"command": command, "version": __version__, "backend": kernels.BACKEND, "config": cfg,
              "config_sha256": config_hash(cfg), "seed": cfg["seed"], "gates": gates,
              "passed": all(gates.values()), "result": body}
    text = json.dumps(_clean(report), sort_keys=True, indent=2) + "\n"
    (out / "report.json").write_text(text)
    return report


def _model(cfg):
    return model_from_config(cfg["model"])


# ---------------------------------------------------------------- commands

def cmd_analyze(cfg, out: Path):
    model = _model(cfg)
    a = cfg["analyze"]
    cert = verify_partial_hyperbolicity(model, a["grid_resolution"], a["n"], a["lookback"], seed=cfg["seed"],
                                        threads=cfg["threads"])
    rng = np.random.default_rng(cfg["seed"])
    starts = wrap(rng.random((a["spectrum_points"], model.dim)))
    spectra = [qr_lyapunov_spectrum(model, x, a["spectrum_n"], seed=cfg["seed"] + i) for i, x in enumerate(starts)]
    body = {"certificate": cert.to_dict(), "spectra": [s.to_dict() for s in spectra]}
    rows = [[i, *s.exponents] for i, s in enumerate(spectra)]
    write_csv(out / "spectra.csv", ["sample"] + [f"lambda_{j}" for j in range(model.dim)], rows)
    if model.dim == 3 and cert.valid:
        leb = leb_center_exponent(model, a["leb_n"], a["leb_samples"], seed=cfg["seed"], threads=cfg["threads"])
        body["lambda_c_leb"] = leb.to_dict()
    return body, {"partially_hyperbolic": bool(cert.valid)}


def cmd_orbits(cfg, out: Path):
    model = _model(cfg)
    o = cfg["orbits"]
    census = periodic_census(model, o["max_period"], o["grid_resolution"], tol=o["tol"])
    orbs = census.all_orbits()
    write_csv(out / "orbits.csv", ORBIT_CSV_HEADER[: 2 + model.dim] + ORBIT_CSV_HEADER[5:],
              orbit_rows(orbs, model.dim))
    counts = {str(k): census.count_points(k) for k in range(1, o["max_period"] + 1)}
    body = {"point_counts": counts, "orbit_counts": {str(k): len(v) for k, v in census.orbits.items()},
            "max_residual": max((x.residual for x in orbs), default=0.0),
            "nonhyperbolic": sum(bool(x.marginal) for x in orbs), "orbits": len(orbs),
            "seeds": census.seeds, "newton_failures": census.failures}
    return body, {"residuals_below_tol": bool(body["max_residual"] < o["tol"])}


def _gibbs(cfg, model):
    g = cfg["gibbs"]
    anchor = DEFAULT_ANCHOR[: model.dim] if g["anchor"] is None else g["anchor"]
    samples = sample_u_gibbs(model, anchor, g["leaf_radius"], g["n"], g["samples"], seed=cfg["seed"],
                             threads=cfg["threads"], keep_atoms=False)
    return samples, estimate_tau0(samples, g["threshold"], g["delta"])


def cmd_gibbs(cfg, out: Path):
    model = _model(cfg)
    g = cfg["gibbs"]
    samples, rep = _gibbs(cfg, model)
    write_csv(out / "gibbs_samples.csv", ["sample", "y0", "y1", "y2", "center_average"],
              [[i, *s.seed_point, s.center_average] for i, s in enumerate(samples)])
    leb = leb_center_exponent(model, g["leb_n"], g["leb_samples"], seed=cfg["seed"], threads=cfg["threads"])
    return {"gibbs": rep.to_dict(), "lambda_c_leb": leb.to_dict()}, {}


def _seed_orbit(cfg, model) -> PeriodicOrbit:
    g = cfg["gikn"]
    if g["seed_orbit"] is not None:
        pts = wrap(np.atleast_2d(np.asarray(g["seed_orbit"], dtype=float)))
        try:
            p = newton_close(model, PseudoOrbit.from_points(model, pts), L_max=None)
        except NewtonError as exc:
            raise CommandError(f"seed orbit does not close: {exc}") from exc
        return annotate(model, p)
    census = periodic_census(model, g["seed_census_period"], cfg["orbits"]["grid_resolution"])
    cands = [o for o in census.all_orbits() if o.lambda_c is not None and o.lambda_c < 0]
    if not cands:
        raise CommandError("no periodic orbit with negative center exponent in the census")
    return min(cands, key=lambda o: (o.lambda_c, o.period))


def cmd_gikn(cfg, out: Path):
    model = _model(cfg)
    if model.dim != 3:
        raise CommandError("gikn needs a 3-dimensional model")
    g = cfg["gikn"]
    p1 = _seed_orbit(cfg, model)
    if not p1.lambda_c < 0:
        raise CommandError(f"seed orbit has lambda^c = {p1.lambda_c:.6g} >= 0; rejected")
    _, rep = _gibbs(cfg, model)
    knobs = {k: g[k] for k in ("d0", "xi", "L", "L_max", "delta_fraction", "eps0", "period_cap", "n_min",
                               "m_factor", "retries", "max_time", "back", "horizon", "newton_tol", "slack",
                               "homoclinic_audit", "homoclinic_radius", "tour_resolution", "liao_gan")}
    try:
        params = compute_constants(model, grid_points(3, g["phi_resolution"]), rep, phi_sup=g["phi_sup"],
                                   seed=cfg["seed"], threshold=cfg["gibbs"]["threshold"], **knobs)
    except GiknError as exc:
        raise CommandError(str(exc)) from exc
    run = run_gikn(model, p1, g["steps"], params, reference_sample=grid_points(3, g["density_resolution"]),
                   tolerance=g["tolerance"], progress=lambda s: log.info("step %d: period %d, lambda_c %.6g",
                                                                       s.index, s.p.period, s.lambda_p))
    for k, orb in enumerate(run.orbits, start=1):
        write_csv(out / f"orbit_p{k}.csv", ORBIT_CSV_HEADER, orbit_rows([orb], 3))
    write_csv(out / "plot_data.csv", ["n", "lambda_c", "kappa_n", "eps_n", "weak_star_distance", "period"],
              run.plot_rows())
    body = {"gibbs": rep.to_dict(), "seed_orbit": {"period": p1.period, "lambda_c": p1.lambda_c,
                                                   "points": p1.points}, **run.to_dict()}
    gates = {"completed_all_steps": not run.truncated, "exponent_decay": run.decay_ok,
             "limit_check": bool(run.limit is not None and run.limit.passed)}
    return body, gates


def _measure(spec, name):
    if spec is None:
        raise CommandError(f"metric.{name} is required")
    if isinstance(spec, str):
        rows = list(csv.DictReader(open(spec)))
        cols = [c for c in ("x0", "x1", "x2") if rows and c in rows[0]]
        if not cols:
            raise CommandError(f"metric.{name}: {spec} has no x0.. columns")
        return AtomicMeasure.uniform(np.array([[float(r[c]) for c in cols] for r in rows]))
    if isinstance(spec, dict):
        unknown = set(spec) - {"points", "weights"}
        if unknown:
            raise CommandError(f"unknown key '{sorted(unknown)[0]}' in metric.{name}")
        pts = np.atleast_2d(np.asarray(spec["points"], dtype=float))
        if spec.get("weights") is None:
            return AtomicMeasure.uniform(pts)
        return AtomicMeasure.weighted(pts, spec["weights"])
    return AtomicMeasure.uniform(np.atleast_2d(np.asarray(spec, dtype=float)))


def cmd_metric(cfg, out: Path):
    m = cfg["metric"]
    mu, nu = _measure(m["a"], "a"), _measure(m["b"], "b")
    if mu.dim != nu.dim:
        raise CommandError("measures live on tori of different dimension")
    fam = TestFunctionFamily(mu.dim)
    N = m["N_terms"]
    da, db = fam.integrals(mu, N), fam.integrals(nu, N)
    weights = 1.0 / (2.0 ** np.arange(1, N + 1) * (fam.sup_norms(N) + 1))
    contrib = np.abs(da - db) * weights
    write_csv(out / "metric_terms.csv", ["n", "integral_a", "integral_b", "weighted_difference"],
              [[i + 1, da[i], db[i], contrib[i]] for i in range(N)])
    return {"distance": weak_star_distance(mu, nu, fam, N), "N_terms": N, "atoms_a": len(mu.atoms),
            "atoms_b": len(nu.atoms)}, {}


COMMANDS = {"analyze": cmd_analyze, "orbits": cmd_orbits, "gibbs": cmd_gibbs, "gikn": cmd_gikn,
            "metric": cmd_metric}


def build_parser():
    p = argparse.ArgumentParser(prog="nhgikn", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML run configuration")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--out", default=None, help="output directory (default: output.dir)")
        s.add_argument("--threads", type=int, default=None, help="worker threads")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load(args.config)
    except (ConfigError, OSError) as exc:
        print(f"nhgikn: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.threads is not None:
        if args.threads < 1:
            print("nhgikn: --threads must be >= 1", file=sys.stderr)
            return EXIT_ERROR
        cfg["threads"] = args.threads
    if args.out is not None:
        cfg["output"]["dir"] = args.out
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    try:
        body, gates = COMMANDS[args.command](cfg, out)
    except (CommandError, ValueError, ArithmeticError) as exc:
        print(f"nhgikn {args.command}: {exc}", file=sys.stderr)
        write_report(out, args.command, cfg, {"error": str(exc)}, {"completed": False})
        return EXIT_ERROR
    report = write_report(out, args.command, cfg, body, gates)
    for k, v in gates.items():
        print(f"{k}: {'pass' if v else 'FAIL'}")
    print(f"report: {out / 'report.json'}")
    return EXIT_OK if report["passed"] else EXIT_GATE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
