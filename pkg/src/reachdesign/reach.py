"""Reachable-tube propagation and support extraction for one candidate design."""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import BLOWUP_LIMIT, UnstableCandidateError, simulate_batch
from .geometry import (
    Box,
    DimensionError,
    DirectionSet,
    HPolytope,
    Zonotope,
    contained_in,
    linear_map,
    minkowski_sum,
    reduce_order,
)


def _rows(Z, L):
    # per-row evaluation keeps each value independent of the other rows in L
    return np.einsum("ij,j->i", L, Z.center) + np.abs(np.einsum("ij,jk->ik", L, Z.generators)).sum(axis=1)


@dataclass(frozen=True)
class ReachSpec:
    """Sets and horizon defining one reachability problem.

    ``R0`` must lie inside ``X_safe``; this is checked on construction.
    """

    R0: Box
    V: Box
    N: int
    X_safe: HPolytope
    U_adm: HPolytope
    R0_poly: HPolytope = None

    def __post_init__(self):
        if int(self.N) < 1:
            raise ValueError("horizon N must be at least 1")
        object.__setattr__(self, "N", int(self.N))
        if self.R0.dim != self.X_safe.dim:
            raise DimensionError("operating region and safe set dimensions differ")
        if self.R0_poly is None:
            object.__setattr__(self, "R0_poly", self.R0.to_hpolytope())
        elif self.R0_poly.dim != self.R0.dim:
            raise DimensionError("R0_poly dimension differs from R0")
        if not contained_in(self.R0.to_zonotope(), self.X_safe):
            raise ValueError("operating region R0 is not inside the safe set")

    @property
    def n_states(self):
        return self.R0.dim

    @property
    def n_inputs(self):
        return self.U_adm.dim

    @property
    def n_disturbances(self):
        return self.V.dim

    def check_model(self, model):
        if (model.n_states, model.n_inputs, model.n_disturbances) != (
            self.n_states,
            self.n_inputs,
            self.n_disturbances,
        ):
            raise DimensionError(
                f"model dims (n={model.n_states}, m={model.n_inputs}, d={model.n_disturbances}) "
                f"do not match spec (n={self.n_states}, m={self.n_inputs}, d={self.n_disturbances})"
            )


@dataclass(frozen=True)
class DirectionPlan:
    """Unique directions plus index maps back to each named template."""

    unique: np.ndarray
    index: dict

    def evaluate(self, Z):
        vals = _rows(Z, self.unique)
        return {name: vals[idx] for name, idx in self.index.items()}

    @property
    def n_requested(self):
        return sum(len(v) for v in self.index.values())

    @property
    def n_evaluated(self):
        return self.unique.shape[0]


def build_plan(named):
    """Deduplicate identical direction rows across named templates."""
    unique = []
    lookup = {}
    index = {}
    for name, L in named.items():
        idx = []
        for row in np.atleast_2d(np.asarray(L, dtype=float)):
            key = row.tobytes()
            if key not in lookup:
                lookup[key] = len(unique)
                unique.append(row)
            idx.append(lookup[key])
        index[name] = np.array(idx, dtype=int)
    return DirectionPlan(np.array(unique), index)


def shared_direction_dedup(spec):
    """State-side and input-side evaluation plans for ``spec``."""
    n, m = spec.n_states, spec.n_inputs
    state = build_plan(
        {"lx": DirectionSet.cardinal(n).matrix, "x": spec.X_safe.H, "r": spec.R0_poly.H}
    )
    inputs = build_plan({"lu": DirectionSet.cardinal(m).matrix, "u": spec.U_adm.H})
    return state, inputs


def naive_plan(spec):
    """Plans without deduplication, for equivalence checks."""
    n, m = spec.n_states, spec.n_inputs
    mats = {"lx": DirectionSet.cardinal(n).matrix, "x": spec.X_safe.H, "r": spec.R0_poly.H}
    offs = np.cumsum([0] + [len(v) for v in mats.values()])
    state = DirectionPlan(
        np.vstack(list(mats.values())),
        {k: np.arange(offs[i], offs[i + 1]) for i, k in enumerate(mats)},
    )
    umats = {"lu": DirectionSet.cardinal(m).matrix, "u": spec.U_adm.H}
    uoffs = np.cumsum([0] + [len(v) for v in umats.values()])
    inputs = DirectionPlan(
        np.vstack(list(umats.values())),
        {k: np.arange(uoffs[i], uoffs[i + 1]) for i, k in enumerate(umats)},
    )
    return state, inputs


@dataclass
class ReachResult:
    """Support vectors of one reach tube.

    Row ``k - 1`` of ``rho_lx`` / ``rho_x`` belongs to ``R(k)``, ``k = 1..N``.
    Row ``k`` of ``rho_lu`` / ``rho_u`` belongs to ``U(k)``, ``k = 0..N-1``.
    ``rho_lq`` holds cardinal supports of ``Q R(k)`` for ``k = 0..N``.
    """

    rho_lx: np.ndarray
    rho_x: np.ndarray
    rho_lu: np.ndarray
    rho_u: np.ndarray
    rho_r: np.ndarray
    rho_lx0: np.ndarray
    rho_lq: np.ndarray
    model: object = None
    states: list = field(default=None, repr=False)
    inputs: list = field(default=None, repr=False)

    @property
    def N(self):
        return self.rho_lx.shape[0]

    def state_box_supports(self):
        """Cardinal supports for ``k = 0..N`` stacked, shape (N+1, 2n)."""
        return np.vstack([self.rho_lx0, self.rho_lx])

    def max_input_support(self):
        return float(np.max(self.rho_lu))


def reach(spec, family, p, output_map=None, store_tubes=True, max_generators=None, plans=None):
    """Propagate ``R(k+1) = A_d R(k) + E_d V`` and collect template supports.

    ``output_map`` is the cost weighting matrix applied to each ``R(k)``
    before cardinal sampling (identity when omitted). ``max_generators``
    turns on order reduction, which only enlarges the supports.
    """
    model = family(p) if callable(family) else family
    spec.check_model(model)
    state_plan, input_plan = plans or shared_direction_dedup(spec)
    Q = np.eye(spec.n_states) if output_map is None else np.atleast_2d(np.asarray(output_map, dtype=float))
    if Q.shape[1] != spec.n_states:
        raise DimensionError(f"output map has {Q.shape[1]} columns, expected {spec.n_states}")
    Lq = DirectionSet.cardinal(Q.shape[0]).matrix
    N = spec.N
    n, m = spec.n_states, spec.n_inputs

    R = spec.R0.to_zonotope()
    EV = linear_map(model.E_d, spec.V.to_zonotope())
    rho_lx = np.empty((N, 2 * n))
    rho_x = np.empty((N, spec.X_safe.n_rows))
    rho_lu = np.empty((N, 2 * m))
    rho_u = np.empty((N, spec.U_adm.n_rows))
    rho_lq = np.empty((N + 1, Lq.shape[0]))
    states = [R] if store_tubes else None
    inputs = [] if store_tubes else None

    rho_lx0 = state_plan.evaluate(R)["lx"]
    for k in range(N + 1):
        rho_lq[k] = _rows(linear_map(Q, R), Lq)
        if k == N:
            break
        U = linear_map(model.K, R)
        vals = input_plan.evaluate(U)
        rho_lu[k], rho_u[k] = vals["lu"], vals["u"]
        if store_tubes:
            inputs.append(U)
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                R = minkowski_sum(linear_map(model.A_d, R), EV)
            except ValueError as exc:
                raise UnstableCandidateError(f"reach tube diverged at step {k + 1}") from exc
        if max_generators is not None:
            R = reduce_order(R, max_generators)
        vals = state_plan.evaluate(R)
        rho_lx[k], rho_x[k] = vals["lx"], vals["x"]
        if not np.all(np.isfinite(vals["lx"])) or np.abs(vals["lx"]).max() > BLOWUP_LIMIT:
            raise UnstableCandidateError(f"reach tube diverged at step {k + 1}")
        if store_tubes:
            states.append(R)
    rho_r = state_plan.evaluate(R)["r"]
    for a in (rho_lu, rho_u, rho_lq):
        if not np.all(np.isfinite(a)) or np.abs(a).max() > BLOWUP_LIMIT:
            raise UnstableCandidateError("support values diverged")
    return ReachResult(rho_lx, rho_x, rho_lu, rho_u, rho_r, rho_lx0, rho_lq, model, states, inputs)


def worst_case_trajectory(model, R0, V, direction, step, horizon=None):
    """Initial vertex and disturbance vertices maximizing ``l.x(step)``.

    For LTI dynamics over boxes this attains the support of ``R(step)``
    exactly. Steps after ``step`` keep pushing along the same direction.
    Returns ``(x0, v_seq)`` with ``v_seq`` of length ``horizon``.
    """
    l = np.asarray(direction, dtype=float)
    horizon = step if horizon is None else horizon
    A, E = model.A_d, model.E_d
    powers = [np.eye(model.n_states)]
    for _ in range(max(step, 1)):
        powers.append(A @ powers[-1])
    w = powers[step].T @ l
    x0 = np.where(w >= 0, R0.upper, R0.lower)
    v_seq = np.empty((horizon, V.dim))
    for j in range(horizon):
        lag = step - 1 - j if j < step else 0
        s = E.T @ (powers[lag].T @ l)
        v_seq[j] = np.where(s >= 0, V.upper, V.lower)
    return x0, v_seq


@dataclass
class ViolationReport:
    trials: int
    horizon: int
    tube_violations: int = 0
    safety_violations: int = 0
    worst_tube_excess: float = 0.0
    worst_safety_excess: float = 0.0
    first_safety_violation: tuple = None
    adversarial_trials: int = 0

    @property
    def clean(self):
        return self.tube_violations == 0 and self.safety_violations == 0

    def to_dict(self):
        return {
            "trials": self.trials,
            "adversarial_trials": self.adversarial_trials,
            "horizon": self.horizon,
            "tube_violations": self.tube_violations,
            "safety_violations": self.safety_violations,
            "worst_tube_excess": self.worst_tube_excess,
            "worst_safety_excess": self.worst_safety_excess,
            "first_safety_violation": None
            if self.first_safety_violation is None
            else list(self.first_safety_violation),
        }


def _check_trajectories(X, result, spec, report, slack):
    """Accumulate tube and safety violations for states ``X`` (T, H+1, n)."""
    n = spec.n_states
    Lh = DirectionSet.cardinal(n).matrix
    T, H1 = X.shape[0], X.shape[1]
    N = spec.N
    for k in range(H1):
        xk = X[:, k]
        if k == 0:
            excess = xk @ spec.R0_poly.H.T - spec.R0_poly.f
        elif k <= N:
            excess = np.hstack([xk @ Lh.T - result.rho_lx[k - 1], xk @ spec.X_safe.H.T - result.rho_x[k - 1]])
        else:
            excess = None
        if excess is not None:
            bad = excess > slack
            report.tube_violations += int(np.count_nonzero(np.any(bad, axis=1)))
            report.worst_tube_excess = max(report.worst_tube_excess, float(excess.max()))
        sx = xk @ spec.X_safe.H.T - spec.X_safe.f
        bad = np.any(sx > slack, axis=1)
        if np.any(bad):
            report.safety_violations += int(np.count_nonzero(bad))
            if report.first_safety_violation is None:
                report.first_safety_violation = (int(np.argmax(bad)), k)
        report.worst_safety_excess = max(report.worst_safety_excess, float(sx.max()))


def monte_carlo_falsify(spec, family, p, trials, horizon=None, seed=0, adversarial=True, slack=1e-9, result=None):
    """Search for states escaping the computed tube or the safe set.

    Uniform samples of ``x0`` in ``R0`` and ``v(k)`` in ``V`` are simulated;
    with ``adversarial`` the support-attaining vertex trajectory for every
    template direction and step is added.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if result is None:
        result = reach(spec, family, p, store_tubes=False)
    model = result.model
    horizon = spec.N if horizon is None else int(horizon)
    rng = np.random.default_rng(seed)
    report = ViolationReport(trials=int(trials), horizon=horizon)
    X0 = spec.R0.sample(rng, trials)
    V = rng.uniform(spec.V.lower, spec.V.upper, size=(trials, horizon, spec.n_disturbances))
    _check_trajectories(simulate_batch(model, X0, V), result, spec, report, slack)
    if adversarial:
        dirs = np.vstack([DirectionSet.cardinal(spec.n_states).matrix, spec.X_safe.H])
        x0s, vs = [], []
        for k in range(1, min(spec.N, horizon) + 1):
            for l in dirs:
                x0, v = worst_case_trajectory(model, spec.R0, spec.V, l, k, horizon)
                x0s.append(x0)
                vs.append(v)
        report.adversarial_trials = len(x0s)
        _check_trajectories(simulate_batch(model, np.array(x0s), np.array(vs)), result, spec, report, slack)
    return report
