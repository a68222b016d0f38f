"""Run configuration: YAML in, a fully resolved and hashed mapping out."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import yaml

from .systems import model_from_config


class ConfigError(ValueError):
    pass


# None means "any value" (lists, optional overrides)
DEFAULTS = {
    "model": {"type": "linear", "matrix": [[2, 1, 0], [1, 2, 1], [0, 1, 1]]},
    "seed": 0,
    "threads": 1,
    "output": {"dir": "out"},
    "analyze": {"grid_resolution": 6, "n": 8, "lookback": 40, "spectrum_points": 3, "spectrum_n": 10000,
                "leb_n": 5000, "leb_samples": 8},
    "orbits": {"max_period": 4, "grid_resolution": 32, "tol": 1e-12},
    "gibbs": {"anchor": None, "leaf_radius": 0.03, "n": 100000, "samples": 16, "threshold": 1e-3, "delta": None,
              "leb_n": 3000, "leb_samples": 8},
    "gikn": {"steps": 6, "seed_orbit": None, "seed_census_period": 2, "eps0": 1.0, "d0": 0.02, "xi": 0.2,
             "L": 1.0, "L_max": 100.0, "delta_fraction": 0.2, "period_cap": 400000, "n_min": 2,
             "m_factor": 10.0, "retries": 64, "max_time": 60, "back": 12, "horizon": 4000, "newton_tol": 1e-11,
             "slack": 0.1, "homoclinic_audit": False, "homoclinic_radius": 200.0, "tour_resolution": 0,
             "liao_gan": True, "tolerance": 1e-2, "phi_sup": None, "phi_resolution": 6, "density_resolution": 8},
    "metric": {"a": None, "b": None, "N_terms": 64},
}
FREE_SECTIONS = {"model"}  # validated by the model factory


def _merge(default, given, path):
    if isinstance(default, dict):
        if not isinstance(given, dict):
            raise ConfigError(f"{path or 'config'} must be a mapping")
        unknown = sorted(set(given) - set(default))
        if unknown:
            where = f" in section '{path}'" if path else ""
            raise ConfigError(f"unknown key '{unknown[0]}'{where}")
        out = {}
        for k, v in default.items():
            sub = f"{path}.{k}" if path else k
            out[k] = _merge(v, given[k], sub) if k in given else copy.deepcopy(v)
        return out
    if default is None or given is None:
        return given
    if isinstance(default, bool):
        if not isinstance(given, bool):
            raise ConfigError(f"{path} must be true or false")
        return given
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(given, bool) or not isinstance(given, int):
            raise ConfigError(f"{path} must be an integer")
        return given
    if isinstance(default, float):
        if isinstance(given, bool) or not isinstance(given, (int, float)):
            raise ConfigError(f"{path} must be a number")
        return float(given)
    if isinstance(default, str):
        if not isinstance(given, str):
            raise ConfigError(f"{path} must be a string")
        return given
    return given


def resolve(raw: dict | None) -> dict:
    """Defaults filled in, unknown keys rejected, model parameters checked."""
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at top level")
    unknown = sorted(set(raw) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown key '{unknown[0]}'")
    cfg = {}
    for k, v in DEFAULTS.items():
        if k in FREE_SECTIONS:
            cfg[k] = copy.deepcopy(raw.get(k, v))
        else:
            cfg[k] = _merge(v, raw[k], k) if k in raw else copy.deepcopy(v)
    try:
        model_from_config(cfg["model"])
    except (ValueError, TypeError, KeyError, ArithmeticError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    return cfg


def load(path) -> dict:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return resolve(raw)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()
