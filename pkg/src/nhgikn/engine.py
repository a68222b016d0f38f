"""The GIKN construction: one contracting step q -> p and the inductive loop toward lambda^c = 0."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bundles import grid_points
from .exponents import CenterCocycle
from .gibbs import GibbsReport, first_time_above
from .leaves import LeafError, grow_unstable_leaf, heteroclinic_intersects
from .measures import AtomicMeasure, GoodnessReport, gikn_limit_check, goodness_check, support_density, \
    weak_star_distance
from .orbits import GapError, NewtonError, PeriodicOrbit, annotate, build_gikn_pseudo_orbit, liao_gan_sums, \
    newton_close
from .systems import MapModel
from .torus import wrap

NO_RESERVOIR = "mostly expanding hypothesis not observed; GIKN step has no expansion reservoir"


class GiknError(RuntimeError):
    """A failed stage of the construction; ``stage`` names it and ``data`` keeps what was measured."""

    def __init__(self, stage: str, message: str, **data):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.data = data


@dataclass(frozen=True)
class GiknParams:
    phi_sup: float
    tau0: float
    N0: int
    rho: float
    eta: float
    d0: float = 0.1
    xi: float = 0.2
    L: float = 1.0
    L_max: float = 100.0
    delta_fraction: float = 0.2
    threshold: float = 1e-3
    eps0: float = 1.0
    period_cap: int = 400_000
    seed: int = 0
    n_min: int = 2
    m_factor: float = 10.0
    retries: int = 64
    max_time: int = 60
    back: int = 12
    horizon: int = 4000
    newton_tol: float = 1e-11
    slack: float = 0.1
    homoclinic_audit: bool = False
    homoclinic_radius: float = 200.0
    tour_resolution: int = 0
    liao_gan: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not (self.phi_sup > 0 and 0 < self.tau0 <= self.phi_sup):
            raise ValueError(f"need 0 < tau0 <= |phi|_0, got tau0={self.tau0}, |phi|_0={self.phi_sup}")
        if not math.isclose(self.rho, 1 / (2 * self.phi_sup), rel_tol=1e-12):
            raise ValueError("rho must equal 1/(2|phi|_0)")
        if not math.isclose(self.eta, (2 * self.phi_sup - self.tau0) / (2 * self.phi_sup), rel_tol=1e-12):
            raise ValueError("eta must equal (2|phi|_0 - tau0)/(2|phi|_0)")
        if not 0 < self.delta_fraction < 0.25:
            raise ValueError("delta_fraction must lie in (0, 1/4)")
        if self.m_factor < 1 or self.retries < 1 or self.period_cap < 1:
            raise ValueError("m_factor, retries and period_cap must be positive")

    def delta_for(self, lam_q: float) -> float:
        return self.delta_fraction * min(abs(lam_q), self.tau0)

    def d_for(self, eps: float) -> float:
        return min(self.d0, self.xi / (self.L + 1), eps / (self.L + 1))

    def eps(self, n: int) -> float:
        return self.eps0 * 2.0 ** (-n)

    def kappa_for(self, lam: float) -> float:
        return 1 - 2 * self.rho * abs(lam)

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def compute_constants(model: MapModel, region_sample, gibbs_report: GibbsReport, phi_sup: float | None = None,
                      **overrides) -> GiknParams:
    """rho and eta from the sup of |phi| and the empirical tau0; other knobs from ``overrides``."""
    if not gibbs_report.mostly_expanding or not gibbs_report.tau0_hat > 0:
        raise GiknError("constants", NO_RESERVOIR, min_average=gibbs_report.min_average)
    if gibbs_report.N0_hat is None:
        raise GiknError("constants", "sampled averages never stay above tau0 + delta within the horizon")
    if phi_sup is None:
        phi_sup = CenterCocycle(model).sup_norm(region_sample)
    tau0 = min(gibbs_report.tau0_hat, phi_sup)
    return GiknParams(phi_sup=float(phi_sup), tau0=float(tau0), N0=int(gibbs_report.N0_hat),
                      rho=1 / (2 * phi_sup), eta=(2 * phi_sup - tau0) / (2 * phi_sup), **overrides)


def mn_window(lam_q: float, delta: float, phi_sup: float) -> tuple[float, float]:
    a = -lam_q
    return (2 * phi_sup + 2 * delta + a) / (a - 2 * delta), (2 * phi_sup + 3 * delta + a) / (a - 3 * delta)


def select_mn(lam_q: float, delta: float, phi_sup: float, n_min: int = 1, cap: int = 10**9) -> tuple[int, int]:
    """Smallest n >= n_min with an integer m strictly inside the ratio window; that m is the least one."""
    if not lam_q < 0:
        raise ValueError("select_mn needs lambda^c(q) < 0")
    if not 0 < delta < abs(lam_q) / 4:
        raise ValueError("need 0 < delta < |lambda^c(q)|/4")
    lo, hi = mn_window(lam_q, delta, phi_sup)
    if not (lo < hi and lo > 2 * phi_sup / abs(lam_q)):
        raise ValueError("ratio window is empty")
    for n in range(max(1, n_min), cap + 1):
        m = math.floor(lo * n) + 1
        if m < hi * n:
            return m, n
    raise ValueError(f"no (m, n) with n <= {cap}; raise n_min")


@dataclass
class GiknStep:
    index: int
    eps: float
    d: float
    delta: float
    q_period: int
    lambda_q: float
    m: int
    n: int
    N_d: int
    x: np.ndarray
    N0_x: int
    candidates_tried: int
    gap: float
    blocks: dict
    p: PeriodicOrbit
    lambda_p: float
    goodness: GoodnessReport
    kappa_required: float
    time_proportion: float
    time_bound: float
    window: tuple
    claim_window_ok: bool
    weak_star: float
    liao_gan: dict | None
    homoclinic: dict | None
    seconds: float
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {"index": self.index, "eps": self.eps, "d": self.d, "delta": self.delta, "q_period": self.q_period,
                "lambda_q": self.lambda_q, "m": self.m, "n": self.n, "N_d": self.N_d,
                "x": [float(v) for v in self.x], "N0_x": self.N0_x, "candidates_tried": self.candidates_tried,
                "gap": self.gap, "blocks": self.blocks, "p_period": self.p.period, "newton_residual": self.p.residual,
                "newton_iterations": self.p.iterations, "shadowing_distance": self.p.shadowing_distance,
                "lambda_p": self.lambda_p, "stable_index": self.p.stable_index,
                "goodness": self.goodness.to_dict(), "kappa_required": self.kappa_required,
                "time_proportion": self.time_proportion, "time_bound": self.time_bound,
                "exponent_window": list(self.window), "claim_window_ok": self.claim_window_ok,
                "weak_star_distance": self.weak_star, "liao_gan": self.liao_gan, "homoclinic": self.homoclinic,
                "warnings": self.warnings}


def _rng(params: GiknParams, index: int):
    return np.random.default_rng(np.random.SeedSequence([params.seed, index]))


def _tour(params: GiknParams):
    if params.tour_resolution <= 0:
        return None
    return grid_points(3, params.tour_resolution)


def _required_n(lo: float, target: float, P_q: int, N_d: int, back: int) -> int:
    """n with (lo*n - P_q - back)/((lo+1)*n + N_d) >= target, or a large value when out of reach."""
    slope = lo - target * (lo + 1)
    if slope <= 0:
        return 10**12
    return int(math.ceil((P_q + back + target * N_d) / slope))


def gikn_step(model: MapModel, q: PeriodicOrbit, params: GiknParams, eps_target: float, index: int = 1,
              d: float | None = None) -> GiknStep:
    """One contracting step: a periodic orbit p, (eps, kappa)-good for q, with eta*lambda_q < lambda_p < 0."""
    t_start = time.perf_counter()
    if q.lambda_c is None:
        annotate(model, q)
    lam_q = float(q.lambda_c)
    if not lam_q < 0:
        raise GiknError("precondition", f"lambda^c(q) = {lam_q:.6g} is not negative", lambda_q=lam_q)
    Phi, tau0 = params.phi_sup, params.tau0
    delta = params.delta_for(lam_q)
    if not 0 < delta < 0.25 * min(abs(lam_q), tau0):
        raise GiknError("precondition", "delta outside (0, min(|lambda_q|, tau0)/4)")
    d = params.d_for(eps_target) if d is None else d
    lo, hi = mn_window(lam_q, delta, Phi)
    kappa_req = params.kappa_for(lam_q)
    time_bound = 1 + lam_q / (2 * Phi)
    P_q = q.period
    Q0 = q.points[0]
    rng = _rng(params, index)
    cc = CenterCocycle(model)
    warnings = []

    try:
        leaf = grow_unstable_leaf(model, Q0, d / 4, d / 64, seed=params.seed + index, check_samples=4)
    except LeafError as exc:
        raise GiknError("candidate", f"unstable leaf of q: {exc}") from exc

    def sample_x():
        s = rng.uniform(-d / 4, d / 4) * (1 - 1e-9)
        if leaf.param is None:
            return leaf.origin
        return leaf.param.torus_points(float(np.interp(s, leaf.arclength, leaf.params)))[0]

    level = tau0 + delta
    n_floor = max(params.N0, params.n_min)
    # a first guess for n from the kappa requirement with a short closing block
    n_floor = max(n_floor, _required_n(lo, max(kappa_req, time_bound), P_q, 10, params.back))
    tried = 0
    x = N0x = None
    trace = None
    while tried < params.retries:
        tried += 1
        xc = sample_x()
        horizon = max(params.horizon, 2 * n_floor)
        tr = np.cumsum(cc.along_orbit(xc, horizon)) / np.arange(1, horizon + 1)
        t0 = first_time_above(tr, level)
        if t0 is not None and t0 <= horizon // 2:
            x, N0x, trace = xc, t0, tr
            break
    if x is None:
        raise GiknError("candidate", f"no x on the unstable leaf of q keeps averages above tau0+delta = {level:.4g} "
                                     f"after {tried} candidates")

    n_try = max(n_floor, N0x)
    built = None
    for _attempt in range(40):
        m, n = select_mn(lam_q, delta, Phi, n_try)
        if m + n + params.max_time * (1 + (0 if _tour(params) is None else len(_tour(params)))) > params.period_cap:
            raise GiknError("select_mn", f"period would exceed the cap {params.period_cap} (m={m}, n={n})",
                            m=m, n=n, lambda_q=lam_q)
        if n > len(trace):
            horizon = 2 * n
            trace = np.cumsum(cc.along_orbit(x, horizon)) / np.arange(1, horizon + 1)
        if np.any(trace[N0x - 1:n] <= level):
            raise GiknError("candidate", "partial averages of x fall back below tau0+delta before n", n=n)
        try:
            built = build_gikn_pseudo_orbit(model, q, x, m, n, d, max_time=params.max_time, back=params.back,
                                            seed=params.seed + index, tour=_tour(params))
        except (LeafError, GapError, ValueError) as exc:
            raise GiknError("pseudo_orbit", str(exc), m=m, n=n) from exc
        total = m + n + built.N_d
        kappa_pred = ((m - params.back) // P_q) * P_q / total
        need = []
        if m < params.m_factor * built.N_d:
            need.append(math.ceil(params.m_factor * built.N_d / hi))
        if kappa_pred < max(kappa_req, time_bound) or m / total < time_bound:
            need.append(_required_n(lo, max(kappa_req, time_bound), P_q, built.N_d, params.back))
            need.append(n + 1)
        if not need:
            break
        n_try = max(need)
        built = None
    if built is None:
        raise GiknError("select_mn", "could not meet the m >= m_factor*N_d and kappa requirements")

    try:
        p = newton_close(model, built.pseudo, tol=params.newton_tol, L_max=params.L_max, d0=d)
    except NewtonError as exc:
        raise GiknError("newton", str(exc), residual=exc.residual, period=len(built.pseudo)) from exc
    try:
        annotate(model, p)
    except ArithmeticError as exc:
        raise GiknError("exponent", str(exc)) from exc
    lam_p = float(p.lambda_c)
    win = (params.eta * lam_q, 0.0)
    claim_ok = params.eta * lam_q < lam_p < lam_q / 2
    if not win[0] < lam_p < win[1]:
        raise GiknError("exponent_window", f"lambda^c(p) = {lam_p:.6g} outside ({win[0]:.6g}, 0); "
                                           "tau0 may be overestimated", lambda_p=lam_p, lambda_q=lam_q,
                        period=p.period)
    if not claim_ok:
        warnings.append("lambda^c(p) outside the claim window (eta*lambda_q, lambda_q/2)")
    prop = m / (m + n + built.N_d)
    if not prop >= time_bound:
        raise GiknError("time_proportion", f"m/(m+n+N_d) = {prop:.6g} < {time_bound:.6g}")
    rep = goodness_check(model, p, q, eps_target)
    if not (rep.verified and rep.kappa >= kappa_req):
        raise GiknError("goodness", f"kappa = {rep.kappa:.6g} below 1-2rho|lambda_q| = {kappa_req:.6g}",
                        kappa=rep.kappa, lambda_p=lam_p)
    lg = None
    if params.liao_gan:
        try:
            lg = liao_gan_sums(model, built.pseudo)
            if not lg["satisfied"]:
                warnings.append("Liao-Gan partial sums not negative (advisory)")
        except ArithmeticError as exc:
            warnings.append(f"Liao-Gan sums unavailable: {exc}")
    hom = None
    if params.homoclinic_audit:
        try:
            h = min(0.005, params.homoclinic_radius / 200)
            a = heteroclinic_intersects(model, p, q, params.homoclinic_radius, h=h)
            b = heteroclinic_intersects(model, q, p, params.homoclinic_radius, h=h)
            hom = {"p_to_q": bool(a), "q_to_p": bool(b)}
            if not (a and b):
                warnings.append("homoclinic relation not observed (audit)")
        except (ArithmeticError, LeafError, ValueError) as exc:
            warnings.append(f"homoclinic audit failed: {exc}")
    wd = weak_star_distance(AtomicMeasure.periodic_orbit(q), AtomicMeasure.periodic_orbit(p))
    return GiknStep(index=index, eps=eps_target, d=d, delta=delta, q_period=P_q, lambda_q=lam_q, m=m, n=n,
                    N_d=built.N_d, x=x, N0_x=int(N0x), candidates_tried=tried, gap=built.pseudo.gap,
                    blocks=built.pseudo.block_lengths(), p=p, lambda_p=lam_p, goodness=rep,
                    kappa_required=kappa_req, time_proportion=prop, time_bound=time_bound, window=win,
                    claim_window_ok=bool(claim_ok), weak_star=wd, liao_gan=lg, homoclinic=hom,
                    seconds=time.perf_counter() - t_start, warnings=warnings)


@dataclass
class GiknRun:
    params: GiknParams
    p1: PeriodicOrbit
    steps: list
    failure: dict | None
    limit: object | None
    decay_ratios: list
    decay_ok: bool
    lambda_trace: list
    density: list
    final_ok: bool | None
    tolerance: float

    @property
    def truncated(self) -> bool:
        return self.failure is not None

    @property
    def orbits(self):
        return [self.p1] + [s.p for s in self.steps]

    @property
    def passed(self) -> bool:
        return (not self.truncated and self.decay_ok and self.limit is not None and self.limit.passed
                and all(s.time_proportion >= s.time_bound for s in self.steps))

    def plot_rows(self):
        """(n, lambda_c, kappa_n, eps_n, weak-* distance, period) per orbit of the run."""
        rows = [[1, self.lambda_trace[0], self.params.kappa_for(self.lambda_trace[0]), self.params.eps(1),
                 float("nan"), self.p1.period]]
        for k, s in enumerate(self.steps, start=2):
            rows.append([k, s.lambda_p, self.params.kappa_for(s.lambda_p), self.params.eps(k), s.weak_star,
                         s.p.period])
        return rows

    def to_dict(self):
        return {"params": self.params.to_dict(), "p1": {"period": self.p1.period, "lambda_c": self.p1.lambda_c},
                "steps": [s.to_dict() for s in self.steps],
                "diagnostics": {"failure": self.failure, "truncated": self.truncated,
                                "limit": None if self.limit is None else self.limit.to_dict(),
                                "lambda_trace": self.lambda_trace, "decay_ratios": self.decay_ratios,
                                "decay_ok": self.decay_ok, "support_density": self.density,
                                "final_below_tolerance": self.final_ok, "tolerance": self.tolerance,
                                "passed": self.passed}}


def run_gikn(model: MapModel, p1: PeriodicOrbit, steps: int, params: GiknParams, reference_sample=None,
             tolerance: float = 1e-2, progress=None) -> GiknRun:
    """Iterate gikn_step with eps_n = 2^-n eps0; stops at the first failing step and keeps what was built."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if p1.lambda_c is None:
        annotate(model, p1)
    if not p1.lambda_c < 0:
        raise GiknError("precondition", f"lambda^c(p1) = {p1.lambda_c:.6g} is not negative")
    done, failure = [], None
    q = p1
    for k in range(1, steps + 1):
        try:
            st = gikn_step(model, q, params, params.eps(k), index=k)
        except GiknError as exc:
            failure = {"step": k, "stage": exc.stage, "message": str(exc),
                       "data": {a: (float(b) if isinstance(b, (float, np.floating)) else b)
                                for a, b in exc.data.items()}}
            break
        done.append(st)
        if progress is not None:
            progress(st)
        q = st.p
    lam = [float(p1.lambda_c)] + [s.lambda_p for s in done]
    ratios = [abs(b) / abs(a) for a, b in zip(lam[:-1], lam[1:])]
    bound = (1 + params.eta) / 2 * (1 + params.slack)
    decay_ok = all(r <= bound for r in ratios)
    limit = None
    if done:
        orbits = [p1] + [s.p for s in done]
        limit = gikn_limit_check(orbits, [s.eps for s in done], [s.kappa_required for s in done],
                                 reports=[s.goodness for s in done])
    ref = grid_points(3, 8) if reference_sample is None else wrap(np.atleast_2d(reference_sample))
    dens = [support_density([s.p], ref) for s in done]
    final_ok = abs(lam[-1]) < tolerance if len(done) >= 6 else None
    return GiknRun(params=params, p1=p1, steps=done, failure=failure, limit=limit, decay_ratios=ratios,
                   decay_ok=bool(decay_ok), lambda_trace=lam, density=dens, final_ok=final_ok, tolerance=tolerance)
