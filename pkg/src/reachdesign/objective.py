"""Scalar costs of reach tubes built from cardinal support values."""

from dataclasses import dataclass, field

import numpy as np

from .geometry import DimensionError


@dataclass(frozen=True)
class SetError:
    """Cardinal supports of an error set: ``rho_plus[i] = rho(+e_i)``, ``rho_minus[i] = rho(-e_i)``."""

    rho_plus: np.ndarray
    rho_minus: np.ndarray

    def __post_init__(self):
        plus = np.asarray(self.rho_plus, dtype=float).reshape(-1)
        minus = np.asarray(self.rho_minus, dtype=float).reshape(-1)
        if plus.shape != minus.shape:
            raise DimensionError("rho_plus and rho_minus lengths differ")
        if np.any(plus + minus < -1e-9 * np.maximum(1.0, np.abs(plus))):
            raise ValueError("supports describe an empty set")
        object.__setattr__(self, "rho_plus", plus)
        object.__setattr__(self, "rho_minus", minus)


def error_supports(rho_cardinal, ref=None):
    """Translate cardinal supports ``(+e_1..+e_q, -e_1..-e_q)`` by a reference.

    ``ref`` is a point (singleton reference) or a callable returning the
    reference set's support value in a given direction.
    """
    rho = np.asarray(rho_cardinal, dtype=float).reshape(-1)
    if rho.shape[0] % 2:
        raise DimensionError("cardinal supports must have even length")
    q = rho.shape[0] // 2
    plus, minus = rho[:q], rho[q:]
    if ref is None:
        return SetError(plus.copy(), minus.copy())
    if callable(ref):
        eye = np.eye(q)
        ref_minus = np.array([ref(-e) for e in eye])
        ref_plus = np.array([ref(e) for e in eye])
        return SetError(plus + ref_minus, minus + ref_plus)
    ref = np.asarray(ref, dtype=float).reshape(-1)
    if ref.shape[0] != q:
        raise DimensionError(f"reference has length {ref.shape[0]}, supports describe dimension {q}")
    return SetError(plus - ref, minus + ref)


def center_estimate(e):
    return (e.rho_plus - e.rho_minus) / 2


def half_widths(e):
    return (e.rho_plus + e.rho_minus) / 2


def r2_metric(e):
    """Radius bound plus distance of the estimated center from the origin."""
    return float(np.linalg.norm(half_widths(e)) + np.linalg.norm(center_estimate(e)))


@dataclass(frozen=True)
class CostSpec:
    """Weights of the set-based cost.

    ``Q`` maps states to penalized outputs (identity when ``None``).
    ``mp_weights`` gives a linear design cost ``mp_weights @ p``;
    ``mp_hook`` replaces it with an arbitrary callable.
    """

    Q: np.ndarray = None
    x_ref: object = None
    u_ref: object = None
    gamma1: float = 1.0
    gamma2: float = 1.0
    gamma3: float = 1.0
    mp_weights: np.ndarray = None
    mp_hook: object = field(default=None, compare=False)
    include_initial: bool = True

    def __post_init__(self):
        for name in ("gamma1", "gamma2", "gamma3"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.Q is not None:
            object.__setattr__(self, "Q", np.atleast_2d(np.asarray(self.Q, dtype=float)))
        if self.mp_weights is not None:
            object.__setattr__(self, "mp_weights", np.asarray(self.mp_weights, dtype=float).reshape(-1))

    def design_cost(self, p):
        if self.mp_hook is not None:
            return float(self.mp_hook(np.asarray(p, dtype=float)))
        if self.mp_weights is None:
            return 0.0
        p = np.asarray(p, dtype=float)
        if p.shape != self.mp_weights.shape:
            raise DimensionError("mp_weights and design vector lengths differ")
        return float(self.mp_weights @ p)


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    design: float
    terminal: float
    running_state: np.ndarray
    running_input: np.ndarray

    def to_dict(self):
        return {
            "total": self.total,
            "design": self.design,
            "terminal": self.terminal,
            "running_state": [float(v) for v in self.running_state],
            "running_input": [float(v) for v in self.running_input],
        }


def total_cost(result, spec, p):
    """Design cost + terminal set cost + running set costs.

    ``result.rho_lq`` must hold the cardinal supports of ``Q R(k)`` for
    ``k = 0..N`` (see :func:`reachdesign.reach.reach`).
    """
    N = result.N
    design = spec.design_cost(p)
    terminal = spec.gamma1 * r2_metric(error_supports(result.rho_lq[N], spec.x_ref))
    start = 0 if spec.include_initial else 1
    rs = np.zeros(N)
    ri = np.zeros(N)
    for k in range(start, N):
        if spec.gamma2:
            rs[k] = spec.gamma2 * r2_metric(error_supports(result.rho_lq[k], spec.x_ref))
        if spec.gamma3:
            ri[k] = spec.gamma3 * r2_metric(error_supports(result.rho_lu[k], spec.u_ref))
    total = design + terminal + float(rs.sum()) + float(ri.sum())
    return CostBreakdown(total, design, terminal, rs, ri)
