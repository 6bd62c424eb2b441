"""Parametric closed-loop discrete-time LTI models."""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .geometry import DimensionError, Zonotope, linear_map, minkowski_sum

# supports beyond this are treated as divergence, not propagated
BLOWUP_LIMIT = 1e12


class UnstableCandidateError(ArithmeticError):
    """The candidate's discretization or reach tube diverged."""


def _mat(a, name, ndim=2):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1 and ndim == 2:
        a = a.reshape(-1, 1)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ContinuousLti:
    """``dx/dt = A x + B u + E v``."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        A = _mat(self.A, "A")
        B = _mat(self.B, "B")
        E = _mat(self.E, "E")
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or E.shape[0] != n:
            raise DimensionError(f"inconsistent shapes A{A.shape} B{B.shape} E{E.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_disturbances(self):
        return self.E.shape[1]

    def closed_loop(self, K):
        K = np.atleast_2d(np.asarray(K, dtype=float))
        if K.shape != (self.n_inputs, self.n_states):
            raise DimensionError(f"gain shape {K.shape}, expected {(self.n_inputs, self.n_states)}")
        return self.A + self.B @ K


@dataclass(frozen=True)
class DiscreteClosedLoop:
    """``x(k+1) = A_d x(k) + E_d v(k)`` with ``u(k) = K x(k)``."""

    A_d: np.ndarray
    E_d: np.ndarray
    K: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        A = _mat(self.A_d, "A_d")
        E = _mat(self.E_d, "E_d")
        K = np.atleast_2d(_mat(self.K, "K"))
        n = A.shape[0]
        if A.shape != (n, n) or E.shape[0] != n or K.shape[1] != n:
            raise DimensionError(f"inconsistent shapes A_d{A.shape} E_d{E.shape} K{K.shape}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "A_d", A)
        object.__setattr__(self, "E_d", E)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_states(self):
        return self.A_d.shape[0]

    @property
    def n_inputs(self):
        return self.K.shape[0]

    @property
    def n_disturbances(self):
        return self.E_d.shape[1]

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.A_d))))


@dataclass(frozen=True)
class SystemFamily:
    """Design vector ``p`` -> closed-loop model, with box bounds on ``p``.

    ``builder`` must be deterministic and return consistent dimensions for
    every ``p`` inside the bounds.
    """

    builder: object
    lower: np.ndarray
    upper: np.ndarray
    labels: tuple = ()
    units: tuple = ()
    state_labels: tuple = ()
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("design bounds must be ordered and of equal length")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        labels = tuple(self.labels) or tuple(f"p{i + 1}" for i in range(lo.shape[0]))
        if len(labels) != lo.shape[0]:
            raise ValueError("one label per design component required")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "units", tuple(self.units) or ("",) * lo.shape[0])

    @property
    def n_params(self):
        return self.lower.shape[0]

    def __call__(self, p):
        return self.builder(np.asarray(p, dtype=float))

    def in_bounds(self, p, atol=0.0):
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.lower - atol) and np.all(p <= self.upper + atol))


DISTURBANCE_CONVENTIONS = ("hold", "scaled")


def zoh_discretize(sys, K, dt, disturbance="hold"):
    """Close the loop with ``u = K x`` and discretize with a zero-order hold.

    With ``disturbance="hold"`` the disturbance is held constant over each
    sample, so ``A_d`` and ``E_d`` come from one exponential of the block
    matrix ``[[A + B K, E], [0, 0]]``. ``"scaled"`` keeps that ``A_d`` but
    uses ``E_d = dt * E``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if disturbance not in DISTURBANCE_CONVENTIONS:
        raise ValueError(f"disturbance convention must be one of {DISTURBANCE_CONVENTIONS}")
    K = np.atleast_2d(np.asarray(K, dtype=float))
    A_cl = sys.closed_loop(K)
    n, d = sys.n_states, sys.n_disturbances
    M = np.zeros((n + d, n + d))
    M[:n, :n] = A_cl
    M[:n, n:] = sys.E
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            P = expm(M * dt)
        except (OverflowError, np.linalg.LinAlgError, ValueError) as exc:
            raise UnstableCandidateError(f"matrix exponential failed: {exc}") from exc
    if not np.all(np.isfinite(P)) or np.abs(P).max() > BLOWUP_LIMIT:
        raise UnstableCandidateError("matrix exponential overflowed")
    E_d = P[:n, n:] if disturbance == "hold" else dt * sys.E
    return DiscreteClosedLoop(P[:n, :n], E_d, K, dt)


def successor(R, V, model):
    """One-step reachable set ``A_d R + E_d V`` (exact for LTI)."""
    if R.dim != model.n_states:
        raise DimensionError(f"state set has dimension {R.dim}, model has {model.n_states}")
    if V.dim != model.n_disturbances:
        raise DimensionError(f"disturbance set has dimension {V.dim}, model has {model.n_disturbances}")
    return minkowski_sum(linear_map(model.A_d, R), linear_map(model.E_d, V))


def control_set(R, K):
    """Image of ``R`` under the linear feedback ``u = K x``."""
    return linear_map(np.atleast_2d(K), R)


def simulate(model, x0, v_seq):
    """Roll the closed loop forward.

    Returns ``(states, inputs)`` with shapes ``(N + 1, n)`` and ``(N, m)``.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    v_seq = np.atleast_2d(np.asarray(v_seq, dtype=float))
    if v_seq.shape[1] != model.n_disturbances and v_seq.shape[0] == model.n_disturbances:
        v_seq = v_seq.T
    if x0.shape[0] != model.n_states or v_seq.shape[1] != model.n_disturbances:
        raise DimensionError("initial state or disturbance sequence has the wrong dimension")
    N = v_seq.shape[0]
    X = np.empty((N + 1, model.n_states))
    X[0] = x0
    for k in range(N):
        X[k + 1] = model.A_d @ X[k] + model.E_d @ v_seq[k]
    U = X[:-1] @ model.K.T
    return X, U


def simulate_batch(model, X0, V):
    """Vectorized :func:`simulate` for ``X0`` (T, n) and ``V`` (T, N, d).

    Returns states with shape ``(T, N + 1, n)``.
    """
    X0 = np.atleast_2d(X0)
    T, N = V.shape[0], V.shape[1]
    X = np.empty((T, N + 1, model.n_states))
    X[:, 0] = X0
    for k in range(N):
        X[:, k + 1] = X[:, k] @ model.A_d.T + V[:, k] @ model.E_d.T
    return X


def integrate_rk4(sys, K, x0, v, dt, h=1e-5):
    """Reference continuous-time step with ``v`` held over ``[0, dt]``."""
    A_cl = sys.closed_loop(K)
    drift = sys.E @ np.asarray(v, dtype=float).reshape(-1)
    x = np.asarray(x0, dtype=float).copy()
    steps = int(round(dt / h))
    h = dt / steps
    f = lambda z: A_cl @ z + drift
    for _ in range(steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x

