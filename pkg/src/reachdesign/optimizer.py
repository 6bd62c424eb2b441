"""Multistart SQP over the design vector with reach-based cost and margins."""

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .constraints import FEAS_TOL, ConstraintMargins, evaluate, realizability_margins
from .dynamics import UnstableCandidateError
from .objective import CostBreakdown, CostSpec, total_cost
from .reach import reach, shared_direction_dedup

log = logging.getLogger(__name__)

PENALTY_CEILING = 1e12


@dataclass(frozen=True)
class CoDesignProblem:
    """Everything needed to score and constrain a design vector.

    ``cost`` is a :class:`CostSpec` or a callable ``p -> CostSpec`` for
    weightings that depend on the design. ``g`` adds realizability
    constraints ``g(p) <= 0`` beyond the box bounds. ``start_lower`` and
    ``start_upper`` restrict where multistart points are drawn.
    """

    family: object
    spec: object
    cost: object
    g: object = None
    start_lower: np.ndarray = None
    start_upper: np.ndarray = None
    name: str = ""
    max_generators: int = None

    def cost_spec(self, p):
        return self.cost(np.asarray(p, dtype=float)) if callable(self.cost) else self.cost

    @property
    def lower(self):
        return self.family.lower

    @property
    def upper(self):
        return self.family.upper

    @property
    def n_params(self):
        return self.family.n_params

    def start_region(self):
        lo = self.lower if self.start_lower is None else np.asarray(self.start_lower, dtype=float)
        hi = self.upper if self.start_upper is None else np.asarray(self.start_upper, dtype=float)
        return np.maximum(lo, self.lower), np.minimum(hi, self.upper)


@dataclass
class Evaluation:
    p: np.ndarray
    cost: float
    breakdown: CostBreakdown
    margins: ConstraintMargins
    result: object = None
    unstable: bool = False

    @property
    def feasible(self):
        return (not self.unstable) and self.margins.feasible


def evaluate_candidate(problem, p, store_tubes=False, tol=FEAS_TOL):
    """Reach -> cost -> margins for one design; divergence becomes a penalty."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValueError("design vector must be finite")
    cspec = problem.cost_spec(p)
    try:
        result = reach(
            problem.spec,
            problem.family,
            p,
            output_map=cspec.Q,
            store_tubes=store_tubes,
            max_generators=problem.max_generators,
        )
    except UnstableCandidateError:
        real, _ = realizability_margins(problem.family, p, problem.g)
        margins = ConstraintMargins.violated_everywhere(
            problem.spec, problem.n_params, real, PENALTY_CEILING, tol
        )
        empty = np.zeros(problem.spec.N)
        bd = CostBreakdown(PENALTY_CEILING, cspec.design_cost(p), PENALTY_CEILING, empty, empty)
        return Evaluation(p, PENALTY_CEILING, bd, margins, None, True)
    bd = total_cost(result, cspec, p)
    margins = evaluate(result, problem.spec, problem.family, p, problem.g, tol)
    return Evaluation(p, bd.total, bd, margins, result)


def merit(cost, margins, mu):
    """l1 exact-penalty merit on normalized margins."""
    return float(cost + mu * margins.total_violation(normalized=True))


def _env_workers():
    try:
        return max(1, int(os.environ.get("REACHDESIGN_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class SolverOptions:
    max_iterations: int = 200
    fd_step: float = 1e-6
    constraint_tol: float = FEAS_TOL
    starts: int = 8
    seed: int = 0
    scaling: np.ndarray = None
    stall_tol: float = 1e-8
    stall_window: int = 5
    method: str = "slsqp"
    fallback: bool = True
    fallback_iterations: int = 2000
    penalty: float = 1e3
    initial_points: list = None
    workers: int = None

    def __post_init__(self):
        if self.max_iterations < 1 or self.starts < 1 or self.stall_window < 1:
            raise ValueError("iteration, start and stall limits must be positive")
        if not (self.fd_step > 0 and self.constraint_tol > 0 and self.stall_tol > 0):
            raise ValueError("steps and tolerances must be positive")
        if self.method not in ("slsqp", "nelder-mead"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class StartSummary:
    index: int
    x0: list
    p: list
    cost: float
    feasible: bool
    violation: float
    iterations: int
    evaluations: int
    method: str
    message: str

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class OptimizationReport:
    p_star: np.ndarray
    cost: float
    breakdown: CostBreakdown
    margins: ConstraintMargins
    feasible: bool
    iterations: int
    evaluations: int
    wall_time: float
    starts: list
    trace: list = field(default_factory=list)
    status: str = "ok"

    def to_dict(self, include_timing=False):
        d = {
            "status": self.status,
            "feasible": self.feasible,
            "p_star": self.p_star.tolist(),
            "cost": self.cost,
            "breakdown": self.breakdown.to_dict(),
            "margins": self.margins.to_dict(),
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "starts": [s.to_dict() for s in self.starts],
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


class _Scaled:
    """Affine map between design space and the scaled search space."""

    def __init__(self, problem, scaling):
        self.lo = problem.lower
        span = problem.upper - problem.lower
        self.scale = np.where(span > 0, span, 1.0) if scaling is None else np.asarray(scaling, dtype=float)
        self.zlo = np.zeros_like(self.lo)
        self.zhi = (problem.upper - problem.lower) / self.scale

    def to_p(self, z):
        return self.lo + np.asarray(z) * self.scale

    def to_z(self, p):
        return (np.asarray(p, dtype=float) - self.lo) / self.scale


class _Run:
    """One local solve with memoized evaluations."""

    def __init__(self, problem, options, xmap, index):
        self.problem = problem
        self.options = options
        self.xmap = xmap
        self.index = index
        self.cache = {}
        self.evaluations = 0
        self.trace = []
        self.best = None
        self.plans = shared_direction_dedup(problem.spec)

    def ev(self, z):
        key = np.asarray(z, dtype=float).tobytes()
        hit = self.cache.get(key)
        if hit is None:
            p = np.clip(self.xmap.to_p(z), self.problem.lower, self.problem.upper)
            hit = evaluate_candidate(self.problem, p, tol=self.options.constraint_tol)
            self.evaluations += 1
            if len(self.cache) > 256:
                self.cache.clear()
            self.cache[key] = hit
            self._consider(hit)
        return hit

    def _consider(self, e):
        if self.best is None or _better(e, self.best):
            self.best = e


def _better(a, b):
    """Feasibility first, then cost, then smaller violation."""
    if a.feasible != b.feasible:
        return a.feasible
    if a.feasible:
        return a.cost < b.cost
    va, vb = a.margins.total_violation(), b.margins.total_violation()
    if va != vb:
        return va < vb
    return a.cost < b.cost


def _solve_one(problem, options, xmap, index, z0):
    run = _Run(problem, options, xmap, index)
    e0 = run.ev(z0)
    cscale = max(1.0, abs(e0.cost)) if not e0.unstable else 1.0
    history = []
    iters = [0]
    window = [options.stall_window]

    def fun(z):
        e = run.ev(z)
        return e.cost / cscale

    def cons(z):
        m = run.ev(z).margins
        # raw margins must clear twice the tolerance; box bounds stay with the solver
        back = 2 * options.constraint_tol
        nb = 2 * problem.n_params
        parts = [((getattr(m, g) - back) / getattr(m, f"{g}_scale")).ravel() for g in ("safety", "input", "invariance")]
        parts.append(((m.realizability - back) / m.realizability_scale)[nb:])
        return np.clip(np.concatenate(parts), -1e6, None)

    def callback(zk, *args):
        iters[0] += 1
        e = run.ev(zk)
        viol = max(0.0, -e.margins.min_margin)
        run.trace.append((index, iters[0], e.cost, viol))
        history.append(e.cost)
        w = window[0]
        if len(history) > w and max(history[-w - 1:]) - min(history[-w - 1:]) < options.stall_tol * max(1.0, abs(history[-1])):
            raise StopIteration

    bounds = list(zip(xmap.zlo, xmap.zhi))
    method = "SLSQP" if options.method == "slsqp" else "Nelder-Mead"
    message = ""
    with np.errstate(all="ignore"):
        if method == "SLSQP":
            try:
                res = minimize(
                    fun,
                    z0,
                    method="SLSQP",
                    bounds=bounds,
                    constraints=[{"type": "ineq", "fun": cons}],
                    callback=callback,
                    options={"maxiter": options.max_iterations, "ftol": options.stall_tol, "eps": options.fd_step},
                )
                message = str(res.message)
                run.ev(np.clip(res.x, xmap.zlo, xmap.zhi))
            except StopIteration:
                message = "stalled"
        if method != "SLSQP" or (options.fallback and not run.best.feasible):
            method = "Nelder-Mead" if method != "SLSQP" else "SLSQP+Nelder-Mead"
            mu = options.penalty

            def penalized(z):
                zc = np.clip(z, xmap.zlo, xmap.zhi)
                e = run.ev(zc)
                out = np.maximum(z - xmap.zhi, 0).sum() + np.maximum(xmap.zlo - z, 0).sum()
                return merit(e.cost / cscale, e.margins, mu) + mu * out

            zs = xmap.to_z(run.best.p)
            history.clear()
            # the best simplex vertex can sit still for a whole reflection cycle
            window[0] = options.stall_window * (problem.n_params + 1)
            try:
                res = minimize(
                    penalized,
                    zs,
                    method="Nelder-Mead",
                    callback=callback,
                    options={"maxiter": options.fallback_iterations, "xatol": 1e-10, "fatol": 1e-12,
                             "adaptive": True},
                )
                tail = str(res.message)
            except StopIteration:
                tail = "stalled"
            message = f"{message} | {tail}".strip(" |")
    best = run.best
    summary = StartSummary(
        index=index,
        x0=xmap.to_p(z0).tolist(),
        p=best.p.tolist(),
        cost=float(best.cost),
        feasible=bool(best.feasible),
        violation=best.margins.total_violation(normalized=False),
        iterations=iters[0],
        evaluations=run.evaluations,
        method=method,
        message=message,
    )
    return best, summary, run.trace


def start_points(problem, options, xmap):
    lo, hi = problem.start_region()
    pts = []
    for p in options.initial_points or []:
        pts.append(xmap.to_z(np.clip(np.asarray(p, dtype=float), problem.lower, problem.upper)))
    n_lhs = max(0, options.starts - len(pts))
    if n_lhs:
        sampler = qmc.LatinHypercube(d=problem.n_params, seed=options.seed)
        u = sampler.random(n_lhs)
        for row in u:
            pts.append(xmap.to_z(lo + row * (hi - lo)))
    return pts


def solve(problem, options=None):
    """Best design across multistarts; feasible candidates always win."""
    options = options or SolverOptions()
    t0 = time.perf_counter()
    xmap = _Scaled(problem, options.scaling)
    z0s = start_points(problem, options, xmap)
    workers = options.workers or _env_workers()
    jobs = [(problem, options, xmap, i, z) for i, z in enumerate(z0s)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda a: _solve_one(*a), jobs))
    else:
        outcomes = [_solve_one(*a) for a in jobs]
    best = None
    for e, s, _ in outcomes:
        log.info("start %d: cost=%.6g feasible=%s evals=%d", s.index, s.cost, s.feasible, s.evaluations)
        if best is None or _better(e, best):
            best = e
    final = evaluate_candidate(problem, best.p, tol=options.constraint_tol)
    summaries = [s for _, s, _ in outcomes]
    trace = [row for _, _, t in outcomes for row in t]
    return OptimizationReport(
        p_star=final.p,
        cost=final.cost,
        breakdown=final.breakdown,
        margins=final.margins,
        feasible=final.feasible,
        iterations=sum(s.iterations for s in summaries),
        evaluations=sum(s.evaluations for s in summaries) + 1,
        wall_time=time.perf_counter() - t0,
        starts=summaries,
        trace=trace,
        status="ok" if final.feasible else "no_feasible_point",
    )


@dataclass
class SensitivityProfile:
    directions: np.ndarray
    cost_slope: np.ndarray
    forward_slope: np.ndarray
    backward_slope: np.ndarray
    margin_slopes: np.ndarray
    kinks: np.ndarray


def sensitivity_scan(problem, p, directions, step=1e-6, kink_ratio=0.1):
    """Central-difference slopes of cost and raw margins along directions.

    Steps are taken in design units along each (unnormalized) direction.
    A kink is flagged when forward and backward cost slopes differ by more
    than ``kink_ratio`` relative to their magnitude.
    """
    p = np.asarray(p, dtype=float)
    D = np.atleast_2d(np.asarray(directions, dtype=float))
    base = evaluate_candidate(problem, p)
    c0 = base.cost
    fwd, bwd, cen, kinks, msl = [], [], [], [], []
    for d in D:
        ep = evaluate_candidate(problem, p + step * d)
        em = evaluate_candidate(problem, p - step * d)
        f = (ep.cost - c0) / step
        b = (c0 - em.cost) / step
        fwd.append(f)
        bwd.append(b)
        cen.append((ep.cost - em.cost) / (2 * step))
        scale = max(abs(f), abs(b), 1e-12)
        kinks.append(abs(f - b) > kink_ratio * scale)
        msl.append((ep.margins.vector(False) - em.margins.vector(False)) / (2 * step))
    return SensitivityProfile(D, np.array(cen), np.array(fwd), np.array(bwd), np.array(msl), np.array(kinks))


def kkt_residual(problem, p, step=1e-6, active_tol=1e-4):
    """Least-squares stationarity residual at ``p`` in scaled variables.

    Solves ``min ||grad f - J_active^T lam||`` with ``lam >= 0`` and returns
    the residual norm relative to ``||grad f||``.
    """
    from scipy.optimize import nnls

    xmap = _Scaled(problem, None)
    z = xmap.to_z(p)
    e0 = evaluate_candidate(problem, p)
    n = z.shape[0]
    g = np.empty(n)
    m0 = e0.margins.vector(True)
    J = np.empty((m0.shape[0], n))
    for i in range(n):
        zp = z.copy()
        h = step if z[i] + step <= xmap.zhi[i] else -step
        zp[i] += h
        e = evaluate_candidate(problem, xmap.to_p(zp))
        g[i] = (e.cost - e0.cost) / h
        J[:, i] = (e.margins.vector(True) - m0) / h
    active = m0 <= active_tol
    if not np.any(active):
        return float(np.linalg.norm(g) / max(np.linalg.norm(g), 1e-300)), 0
    # stationarity for margins >= 0: grad f = J_active^T lam, lam >= 0
    lam, res = nnls(J[active].T, g)
    return float(res / max(np.linalg.norm(g), 1e-300)), int(np.count_nonzero(active))


def feasible_descent(problem, p, n_random=24, steps=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8), seed=0,
                     tol=FEAS_TOL):
    """Largest cost decrease found by feasible probes around ``p``.

    Probes go along +-coordinate axes and seeded random unit directions in
    scaled variables. Suited to kinked optima where a multiplier fit is
    meaningless. Returns ``(relative_decrease, best_probe_or_None)``.
    """
    xmap = _Scaled(problem, None)
    z = xmap.to_z(p)
    e0 = evaluate_candidate(problem, p, tol=tol)
    n = z.shape[0]
    rng = np.random.default_rng(seed)
    R = rng.normal(size=(n_random, n))
    D = np.vstack([np.eye(n), -np.eye(n), R / np.linalg.norm(R, axis=1, keepdims=True)])
    best, where = 0.0, None
    for d in D:
        for t in steps:
            zt = np.clip(z + t * d, xmap.zlo, xmap.zhi)
            e = evaluate_candidate(problem, xmap.to_p(zt), tol=tol)
            drop = (e0.cost - e.cost) / max(abs(e0.cost), 1e-300)
            if e.feasible and drop > best:
                best, where = drop, e.p
    return float(best), where
