"""Empirical u-Gibbs sampling along unstable leaves and the mostly-expanding diagnostics."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .exponents import CenterCocycle
from .leaves import grow_unstable_leaf
from .measures import AtomicMeasure
from .systems import MapModel
from .torus import wrap

DEFAULT_THRESHOLD = 1e-3


@dataclass
class GibbsSample:
    seed_point: np.ndarray
    horizon: int
    empirical: AtomicMeasure
    center_average: float
    trace: np.ndarray  # k -> (1/k) sum_{i<k} phi(f^i y), k = 1..horizon


def _ordered_map(fn, items, threads):
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def _sample_streams(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def sample_u_gibbs(model: MapModel, anchor, leaf_radius: float, n: int, n_samples: int, seed: int = 0,
                   h: float | None = None, threads: int = 1, keep_atoms: bool = True) -> list[GibbsSample]:
    """Leaf-Lebesgue random points y on F^u(anchor) with their empirical measures eps_n(y)."""
    if n < 1000:
        raise ValueError("sample_u_gibbs needs n >= 1000")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    leaf = grow_unstable_leaf(model, anchor, leaf_radius, h or leaf_radius / 64, check_samples=4)
    cc = CenterCocycle(model)
    streams = _sample_streams(seed, n_samples)

    def one(i):
        s = streams[i].uniform(-leaf_radius, leaf_radius)
        if leaf.param is None:
            y = leaf.origin
        else:
            t = float(np.interp(s, leaf.arclength, leaf.params))
            y = leaf.param.torus_points(t)[0]
        orbit = model.orbit(y, n - 1)
        phi = cc.along_orbit(y, n, seed=i)
        trace = np.cumsum(phi) / np.arange(1, n + 1)
        emp = AtomicMeasure.uniform(orbit) if keep_atoms else AtomicMeasure.uniform(orbit[:1])
        return GibbsSample(seed_point=y, horizon=n, empirical=emp, center_average=float(trace[-1]), trace=trace)

    return _ordered_map(one, range(n_samples), threads)


@dataclass
class GibbsReport:
    sample_count: int
    horizon: int
    min_average: float
    quantiles: dict
    tau0_hat: float
    delta: float
    N0_hat: int | None
    verdict: str
    threshold: float

    @property
    def mostly_expanding(self) -> bool:
        return self.verdict == "empirically mostly expanding"

    def to_dict(self):
        return {"sample_count": self.sample_count, "horizon": self.horizon, "min_average": self.min_average,
                "quantiles": self.quantiles, "tau0_hat": self.tau0_hat, "delta": self.delta,
                "N0_hat": self.N0_hat, "verdict": self.verdict, "threshold": self.threshold}


def first_time_above(trace: np.ndarray, level: float) -> int | None:
    """Least N such that trace[k-1] > level for all N <= k <= len(trace) (1-based times)."""
    below = np.nonzero(trace <= level)[0]
    if len(below) == 0:
        return 1
    last = int(below[-1]) + 1  # 1-based time of the last violation
    return last + 1 if last < len(trace) else None


def estimate_tau0(samples, threshold: float = DEFAULT_THRESHOLD, delta: float | None = None) -> GibbsReport:
    """tau0 = (1/2) min of the sampled center averages; N0 = first time all partial averages exceed tau0 + delta."""
    if not samples:
        raise ValueError("no samples")
    avgs = np.array([s.center_average for s in samples])
    mn = float(np.min(avgs))
    tau0 = 0.5 * mn
    if delta is None:
        delta = tau0 / 8 if tau0 > 0 else 0.0
    N0 = None
    if tau0 > 0:
        times = [first_time_above(s.trace, tau0 + delta) for s in samples]
        N0 = None if any(t is None for t in times) else int(max(times))
    q = np.quantile(avgs, [0.0, 0.1, 0.5, 0.9, 1.0])
    verdict = "empirically mostly expanding" if mn > threshold else "not mostly expanding (empirical)"
    return GibbsReport(sample_count=len(samples), horizon=int(samples[0].horizon), min_average=mn,
                       quantiles={k: float(v) for k, v in zip(("min", "q10", "median", "q90", "max"), q)},
                       tau0_hat=tau0, delta=float(delta), N0_hat=N0, verdict=verdict, threshold=threshold)


@dataclass
class LebesgueEstimate:
    mean: float
    stderr: float
    averages: np.ndarray

    def to_dict(self):
        return {"mean": self.mean, "stderr": self.stderr, "samples": len(self.averages)}


def leb_center_exponent(model: MapModel, n: int, n_samples: int, seed: int = 0, threads: int = 1) -> LebesgueEstimate:
    """Center Birkhoff averages from volume-uniform starting points; mean and standard error."""
    streams = _sample_streams(seed, n_samples)
    cc = CenterCocycle(model)

    def one(i):
        x = wrap(streams[i].random(model.dim))
        return float(np.mean(cc.along_orbit(x, n, seed=i)))

    avgs = np.array(_ordered_map(one, range(n_samples), threads))
    se = float(np.std(avgs, ddof=1) / np.sqrt(len(avgs))) if len(avgs) > 1 else 0.0
    return LebesgueEstimate(mean=float(np.mean(avgs)), stderr=se, averages=avgs)
