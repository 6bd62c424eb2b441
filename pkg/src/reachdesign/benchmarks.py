"""Model builders: quarter-car active suspension and a four-state TMS loop."""

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .dynamics import ContinuousLti, DiscreteClosedLoop, SystemFamily, zoh_discretize
from .geometry import Box, HPolytope
from .objective import CostSpec
from .optimizer import CoDesignProblem
from .reach import ReachSpec

SUSPENSION_LABELS = ("k_s", "c_s", "p_c1", "p_c2", "p_c3", "p_c4")
SUSPENSION_UNITS = ("N/m", "N*s/m", "N/m", "N*s/m", "N/m", "N*s/m")
SUSPENSION_STATES = ("z_us-z_0", "zdot_us", "z_s-z_us", "zdot_s")
SUSPENSION_LOWER = np.array([1e4, 1e3, -1e6, -1e6, -1e6, -1e6])
SUSPENSION_UPPER = np.array([1e5, 1e4, 1e6, 1e6, 1e6, 1e6])

# Reference designs for the quarter-car example: set-based and simultaneous co-design
REFERENCE_SET_BASED = np.array([72064.0, 3888.0, -7922.6, 0.0, -50481.0, -3386.5])
REFERENCE_SIMULTANEOUS = np.array([23600.0, 1030.0, 3121.2, 918.32, -5928.3, -1870.1])


class OutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class SuspensionParams:
    """Quarter-car constants (SI units). ``m_s``/``m_us`` are quarter masses."""

    k_t: float = 232.5e3
    m_s: float = 325.0
    m_us: float = 65.0

    def __post_init__(self):
        if min(self.k_t, self.m_s, self.m_us) <= 0:
            raise ValueError("masses and stiffnesses must be positive")


def suspension_lti(k_s, c_s, params=SuspensionParams()):
    """State ``(z_us - z_0, zdot_us, z_s - z_us, zdot_s)``, input actuator force,
    disturbance road velocity ``zdot_0``."""
    if k_s <= 0 or c_s <= 0:
        raise ValueError("k_s and c_s must be positive")
    kt, ms, mus = params.k_t, params.m_s, params.m_us
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-kt / mus, -c_s / mus, k_s / mus, c_s / mus],
            [0.0, -1.0, 0.0, 1.0],
            [0.0, c_s / ms, -k_s / ms, -c_s / ms],
        ]
    )
    B = np.array([[0.0], [-1.0 / mus], [0.0], [1.0 / ms]])
    E = np.array([[-1.0], [0.0], [0.0], [0.0]])
    return ContinuousLti(A, B, E)


def suspension_output_map(k_s, c_s, params=SuspensionParams()):
    """Cost weighting: ``1e5 * x1`` and half the passive sprung-mass acceleration."""
    ms = params.m_s
    return np.array([[1e5, 0.0, 0.0, 0.0], [0.0, 0.5 * c_s / ms, -0.5 * k_s / ms, -0.5 * c_s / ms]])


@dataclass(frozen=True)
class SuspensionSetup:
    """Sets, horizon and weights of the suspension co-design problem."""

    dt: float = 0.01
    N: int = 20
    road_speed: float = 0.2
    r0_half_widths: tuple = (0.25, 0.75, 0.25, 0.75)
    travel_limit: float = 0.5
    force_limit: float = 4000.0
    gammas: tuple = (1.0, 1.0, 1e-5)
    mp_weights: tuple = (1e-2, 1e-1, 0.0, 0.0, 0.0, 0.0)
    lower: tuple = tuple(SUSPENSION_LOWER)
    upper: tuple = tuple(SUSPENSION_UPPER)
    start_gain_limit: float = 5e3
    params: SuspensionParams = SuspensionParams()
    disturbance: str = "hold"


class SuspensionBuild(NamedTuple):
    lti: ContinuousLti
    gain: np.ndarray
    problem: CoDesignProblem


def suspension_family(setup=SuspensionSetup()):
    lower = np.asarray(setup.lower, dtype=float)
    upper = np.asarray(setup.upper, dtype=float)

    def builder(p):
        lti = suspension_lti(p[0], p[1], setup.params)
        return zoh_discretize(lti, p[2:6].reshape(1, 4), setup.dt, setup.disturbance)

    return SystemFamily(builder, lower, upper, SUSPENSION_LABELS, SUSPENSION_UNITS, SUSPENSION_STATES)


def suspension_spec(setup=SuspensionSetup()):
    return ReachSpec(
        R0=Box.symmetric(setup.r0_half_widths),
        V=Box([-setup.road_speed], [setup.road_speed]),
        N=setup.N,
        X_safe=HPolytope([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, -1.0, 0.0]], [setup.travel_limit] * 2),
        U_adm=HPolytope([[1.0], [-1.0]], [setup.force_limit] * 2),
    )


def suspension_problem(setup=SuspensionSetup()):
    family = suspension_family(setup)
    g1, g2, g3 = setup.gammas

    def cost(p):
        return CostSpec(
            Q=suspension_output_map(p[0], p[1], setup.params),
            x_ref=np.zeros(2),
            u_ref=np.zeros(1),
            gamma1=g1,
            gamma2=g2,
            gamma3=g3,
            mp_weights=np.asarray(setup.mp_weights),
        )

    lim = setup.start_gain_limit
    start_lo = family.lower.copy()
    start_hi = family.upper.copy()
    start_lo[2:] = np.maximum(start_lo[2:], -lim)
    start_hi[2:] = np.minimum(start_hi[2:], lim)
    return CoDesignProblem(family, suspension_spec(setup), cost, None, start_lo, start_hi, "active_suspension")


def build_active_suspension(p=None, setup=SuspensionSetup()):
    """Continuous model, feedback gain and full problem for design ``p``.

    Without ``p`` the model is built at the lower bounds with zero gain.
    """
    problem = suspension_problem(setup)
    if p is None:
        p = np.concatenate([problem.lower[:2], np.zeros(4)])
    p = np.asarray(p, dtype=float)
    if p.shape != (6,):
        raise ValueError("suspension design vector has 6 entries")
    if not problem.family.in_bounds(p):
        raise OutOfBoundsError(f"design {p.tolist()} is outside its bounds")
    return SuspensionBuild(suspension_lti(p[0], p[1], setup.params), p[2:6].reshape(1, 4), problem)


# --- thermal management loop -------------------------------------------------

TMS_STATES = ("T_cp_w", "T_cp_f", "T_hx_w", "T_hx_f")


@dataclass(frozen=True)
class TmsParams:
    """Cold plate + heat exchanger constants (SI units, temperatures in K).

    ``Q_cp_bounds`` and ``T_tf_bounds`` bound the heat load and the tank
    outlet temperature, both treated as disturbances.
    """

    C_cp_w: float
    C_cp_f: float
    C_hx_w: float
    C_hx_f: float
    aA_cp: float
    aA_hx: float
    c_p: float
    m_dot_p: float
    m_dot_s: float
    aA_hx_s: float
    T_s: float
    Q_cp_bounds: tuple
    T_tf_bounds: tuple

    def __post_init__(self):
        for name in ("C_cp_w", "C_cp_f", "C_hx_w", "C_hx_f", "aA_cp", "aA_hx", "c_p", "m_dot_p", "m_dot_s",
                     "aA_hx_s", "T_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("Q_cp_bounds", "T_tf_bounds"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must be ordered")


def ntu_coefficient(c_p, m_dot_s, aA_hx_s):
    """Coefficient multiplying ``T_s - T_hx_w`` in the heat exchanger rejection rate."""
    cap = c_p * m_dot_s
    return cap * np.expm1(-aA_hx_s / cap)


def build_tms_subsystem(params):
    """Four-state linear model with disturbances ``(Q_cp, T_t_f, T_s)``.

    The secondary temperature enters as a third disturbance channel whose
    bounds collapse to the point ``T_s``.
    """
    P = params
    cpm = P.c_p * P.m_dot_p
    kap = ntu_coefficient(P.c_p, P.m_dot_s, P.aA_hx_s)
    A = np.array(
        [
            [-P.aA_cp / P.C_cp_w, P.aA_cp / P.C_cp_w, 0.0, 0.0],
            [P.aA_cp / P.C_cp_f, -(P.aA_cp + cpm) / P.C_cp_f, 0.0, 0.0],
            [0.0, 0.0, (kap - P.aA_hx) / P.C_hx_w, P.aA_hx / P.C_hx_w],
            [0.0, cpm / P.C_hx_f, P.aA_hx / P.C_hx_f, -(P.aA_hx + cpm) / P.C_hx_f],
        ]
    )
    E = np.array(
        [
            [1.0 / P.C_cp_w, 0.0, 0.0],
            [0.0, cpm / P.C_cp_f, 0.0],
            [0.0, 0.0, -kap / P.C_hx_w],
            [0.0, 0.0, 0.0],
        ]
    )
    return ContinuousLti(A, np.zeros((4, 1)), E)


def tms_disturbance_box(params):
    return Box(
        [params.Q_cp_bounds[0], params.T_tf_bounds[0], params.T_s],
        [params.Q_cp_bounds[1], params.T_tf_bounds[1], params.T_s],
    )


def tms_problem(params, R0, X_safe, N, dt, design_lower, design_upper, mass_weight=1.0, gammas=(1.0, 1.0, 0.0),
                x_ref=None):
    """Co-design template over ``p = (aA_hx, m_dot_p)``.

    The design cost is ``mass_weight * aA_hx`` as a stand-in for heat
    exchanger mass. The loop has no feedback, so ``U_adm`` is an inert
    ``[-1, 1]`` on a zero input.
    """

    def builder(p):
        lti = build_tms_subsystem(replace(params, aA_hx=float(p[0]), m_dot_p=float(p[1])))
        return zoh_discretize(lti, np.zeros((1, 4)), dt)

    family = SystemFamily(builder, design_lower, design_upper, ("aA_hx", "m_dot_p"), ("W/K", "kg/s"), TMS_STATES)
    spec = ReachSpec(R0=R0, V=tms_disturbance_box(params), N=N, X_safe=X_safe, U_adm=HPolytope([[1.0], [-1.0]], [1.0, 1.0]))
    g1, g2, g3 = gammas
    cost = CostSpec(
        Q=None,
        x_ref=np.zeros(4) if x_ref is None else np.asarray(x_ref, dtype=float),
        u_ref=np.zeros(1),
        gamma1=g1,
        gamma2=g2,
        gamma3=g3,
        mp_weights=np.array([mass_weight, 0.0]),
    )
    return CoDesignProblem(family, spec, cost, name="tms_subsystem")


def affine_discrete_family(A0, E, K0, lower, upper, A_terms=(), K_terms=(), dt=1.0, labels=()):
    """Discrete model ``A_d = A0 + sum p_i A_i``, ``K = K0 + sum p_i K_i``.

    Useful for toy problems written directly in discrete time.
    """
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    E = np.asarray(E, dtype=float).reshape(A0.shape[0], -1)
    K0 = np.atleast_2d(np.asarray(K0, dtype=float))
    A_terms = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A_terms]
    K_terms = [np.atleast_2d(np.asarray(k, dtype=float)) for k in K_terms]

    def builder(p):
        A = A0.copy()
        K = K0.copy()
        for i, Ai in enumerate(A_terms):
            A = A + p[i] * Ai
        for i, Ki in enumerate(K_terms):
            K = K + p[i] * Ki
        return DiscreteClosedLoop(A, E, K, dt)

    return SystemFamily(builder, lower, upper, labels)
