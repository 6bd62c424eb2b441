"""Convex set representations and exact support-function operations.

Zonotopes are the propagated representation. H-rep polytopes and boxes only
describe static sets (safe region, operating region, admissible inputs).
"""

import numpy as np

ATOL = 1e-9


class DimensionError(ValueError):
    """Raised when operands live in incompatible spaces."""


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_direction(l, n):
    l = np.asarray(l, dtype=float)
    if l.ndim != 1 or l.shape[0] != n:
        raise DimensionError(f"direction has shape {l.shape}, expected ({n},)")
    if not np.any(l):
        raise ValueError("zero direction has no supporting halfspace")
    return l


class Zonotope:
    """Zonotope ``{c + G xi : xi in [-1, 1]^g}``.

    Parameters
    ----------
    center : array_like, shape (n,)
    generators : array_like, shape (n, g), optional
        One generator per column. Omitted or ``g = 0`` gives a singleton.
    """

    __slots__ = ("_c", "_G")

    def __init__(self, center, generators=None):
        c = np.asarray(center, dtype=float).reshape(-1)
        if generators is None:
            G = np.zeros((c.shape[0], 0))
        else:
            G = np.asarray(generators, dtype=float)
            if G.ndim == 1:
                G = G.reshape(-1, 1)
        if G.ndim != 2 or G.shape[0] != c.shape[0]:
            raise DimensionError(
                f"generator matrix shape {G.shape} does not match center dimension {c.shape[0]}"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(G))):
            raise ValueError("zonotope entries must be finite")
        self._c = _frozen(c)
        self._G = _frozen(G)

    @property
    def center(self):
        return self._c

    @property
    def generators(self):
        return self._G

    @property
    def dim(self):
        return self._c.shape[0]

    @property
    def n_generators(self):
        return self._G.shape[1]

    def __repr__(self):
        return f"Zonotope(dim={self.dim}, n_generators={self.n_generators})"

    @classmethod
    def singleton(cls, point):
        return cls(point)

    def support(self, l):
        return support(self, l)

    def supports(self, L):
        """Support values for every row of ``L`` (shape (k, n))."""
        return support_many(self, L)

    def vertices_brute_force(self):
        """All ``2^g`` sign-combination points. Only for small ``g``."""
        g = self.n_generators
        if g > 20:
            raise ValueError("too many generators for enumeration")
        signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * g), indexing="ij")).reshape(g, -1)
        if g == 0:
            return self._c.reshape(1, -1)
        return (self._c[:, None] + self._G @ signs).T

    def sample(self, rng, size):
        """Uniform samples in the generator cube mapped into the set."""
        xi = rng.uniform(-1.0, 1.0, size=(size, self.n_generators))
        return self._c + xi @ self._G.T

    def interval_hull(self):
        r = np.abs(self._G).sum(axis=1)
        return Box(self._c - r, self._c + r)


class HPolytope:
    """Polytope ``{x : H x <= f}``."""

    __slots__ = ("_H", "_f")

    def __init__(self, H, f):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        f = np.asarray(f, dtype=float).reshape(-1)
        if H.shape[0] != f.shape[0]:
            raise DimensionError(f"{H.shape[0]} normals but {f.shape[0]} offsets")
        if np.any(~np.any(H, axis=1)):
            raise ValueError("H-rep rows must be nonzero")
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(f))):
            raise ValueError("H-rep entries must be finite")
        self._H = _frozen(H)
        self._f = _frozen(f)

    @property
    def H(self):
        return self._H

    @property
    def f(self):
        return self._f

    @property
    def dim(self):
        return self._H.shape[1]

    @property
    def n_rows(self):
        return self._H.shape[0]

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, rows={self.n_rows})"

    def contains_points(self, X, atol=ATOL):
        """Boolean membership for each row of ``X`` with slack ``atol``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all(X @ self._H.T <= self._f + atol, axis=1)


class Box:
    """Axis-aligned box ``[lower, upper]``."""

    __slots__ = ("_lo", "_hi")

    def __init__(self, lower, upper):
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise DimensionError("box bounds have different lengths")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        self._lo = _frozen(lo)
        self._hi = _frozen(hi)

    @classmethod
    def symmetric(cls, half_widths, center=None):
        r = np.asarray(half_widths, dtype=float)
        c = np.zeros_like(r) if center is None else np.asarray(center, dtype=float)
        return cls(c - r, c + r)

    @property
    def lower(self):
        return self._lo

    @property
    def upper(self):
        return self._hi

    @property
    def dim(self):
        return self._lo.shape[0]

    @property
    def center(self):
        return (self._lo + self._hi) / 2

    @property
    def half_widths(self):
        return (self._hi - self._lo) / 2

    def __repr__(self):
        return f"Box(lower={self._lo.tolist()}, upper={self._hi.tolist()})"

    def to_zonotope(self):
        r = self.half_widths
        keep = r > 0
        return Zonotope(self.center, np.diag(r)[:, keep])

    def to_hpolytope(self):
        n = self.dim
        return HPolytope(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([self._hi, -self._lo]))

    @classmethod
    def from_cardinal_supports(cls, rho):
        """Inverse of sampling a set in the cardinal template."""
        rho = np.asarray(rho, dtype=float)
        n = rho.shape[0] // 2
        return cls(-rho[n:], rho[:n])

    def vertices(self):
        n = self.dim
        signs = np.array(np.meshgrid(*([[0, 1]] * n), indexing="ij")).reshape(n, -1).T
        return np.where(signs == 1, self._hi, self._lo)

    def sample(self, rng, size):
        return rng.uniform(self._lo, self._hi, size=(size, self.dim))


class DirectionSet:
    """Ordered, nonempty collection of template directions (rows)."""

    __slots__ = ("_L",)

    def __init__(self, directions):
        L = np.atleast_2d(np.asarray(directions, dtype=float))
        if L.shape[0] == 0:
            raise ValueError("direction set must be nonempty")
        if np.any(~np.any(L, axis=1)):
            raise ValueError("zero direction has no supporting halfspace")
        self._L = _frozen(L)

    @classmethod
    def cardinal(cls, n):
        """``{e_1, ..., e_n, -e_1, ..., -e_n}``."""
        return cls(np.vstack([np.eye(n), -np.eye(n)]))

    @property
    def matrix(self):
        return self._L

    @property
    def dim(self):
        return self._L.shape[1]

    def __len__(self):
        return self._L.shape[0]

    def __iter__(self):
        return iter(self._L)


def support(Z, l):
    """Exact support value ``l.c + sum_i |l.g_i|`` of a zonotope."""
    l = _check_direction(l, Z.dim)
    return float(l @ Z.center + np.abs(l @ Z.generators).sum())


def support_many(Z, L):
    L = np.atleast_2d(np.asarray(L, dtype=float))
    if L.shape[1] != Z.dim:
        raise DimensionError(f"directions have dimension {L.shape[1]}, set has {Z.dim}")
    if np.any(~np.any(L, axis=1)):
        raise ValueError("zero direction has no supporting halfspace")
    return L @ Z.center + np.abs(L @ Z.generators).sum(axis=1)


def linear_map(M, Z):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != Z.dim:
        raise DimensionError(f"map has {M.shape[1]} columns, set has dimension {Z.dim}")
    return Zonotope(M @ Z.center, M @ Z.generators)


def minkowski_sum(Z, W):
    if Z.dim != W.dim:
        raise DimensionError(f"cannot add sets of dimension {Z.dim} and {W.dim}")
    return Zonotope(Z.center + W.center, np.hstack([Z.generators, W.generators]))


def template_polyhedron(Z, L):
    """Tightest polyhedron with normals ``L`` containing ``Z``."""
    if isinstance(L, DirectionSet):
        L = L.matrix
    L = np.atleast_2d(np.asarray(L, dtype=float))
    return HPolytope(L, support_many(Z, L))


class ContainmentReport:
    """Outcome of a support-function containment test.

    ``margins[i] = f_i - rho_Z(h_i)``; the set is contained iff every margin
    is at least ``-atol``.
    """

    __slots__ = ("margins", "atol")

    def __init__(self, margins, atol):
        self.margins = margins
        self.atol = atol

    @property
    def contained(self):
        return bool(np.all(self.margins >= -self.atol))

    def __bool__(self):
        return self.contained

    def __repr__(self):
        return f"ContainmentReport(contained={self.contained}, min_margin={self.margins.min():.6g})"


def contained_in(Z, X, atol=ATOL):
    if Z.dim != X.dim:
        raise DimensionError(f"set dimension {Z.dim} vs polytope dimension {X.dim}")
    return ContainmentReport(X.f - support_many(Z, X.H), atol)


def _merge_parallel(G, tol=1e-12):
    """Sum generators that are parallel; exact for zonotopes."""
    norms = np.linalg.norm(G, axis=0)
    G = G[:, norms > tol * max(1.0, norms.max(initial=0.0))]
    if G.shape[1] < 2:
        return G
    # canonical orientation: first significant entry positive
    U = G / np.linalg.norm(G, axis=0)
    idx = np.argmax(np.abs(U) > 1e-12, axis=0)
    sgn = np.sign(U[idx, np.arange(U.shape[1])])
    U = U * sgn
    merged = []
    used = np.zeros(G.shape[1], dtype=bool)
    for j in range(G.shape[1]):
        if used[j]:
            continue
        same = (~used) & np.all(np.abs(U - U[:, [j]]) <= 1e-12, axis=0)
        used |= same
        merged.append(U[:, j] * np.sum(np.linalg.norm(G[:, same], axis=0)))
    return np.column_stack(merged)


def reduce_order(Z, max_generators):
    """Outer-approximate ``Z`` with at most ``max_generators`` generators.

    Parallel generators are merged first (exact). If still over budget, the
    generators with the smallest ``||g||_1 - ||g||_inf`` are replaced by their
    interval hull, which takes ``n`` axis-aligned generators.
    """
    n = Z.dim
    if max_generators < n:
        raise ValueError(f"max_generators={max_generators} is below the dimension {n}")
    if Z.n_generators <= max_generators:
        return Z
    G = _merge_parallel(Z.generators)
    if G.shape[1] <= max_generators:
        return Zonotope(Z.center, G)
    score = np.abs(G).sum(axis=0) - np.abs(G).max(axis=0)
    order = np.argsort(score, kind="stable")
    n_keep = max_generators - n
    boxed = order[: G.shape[1] - n_keep]
    kept = np.sort(order[G.shape[1] - n_keep:])
    box = np.diag(np.abs(G[:, boxed]).sum(axis=1))
    return Zonotope(Z.center, np.hstack([G[:, kept], box]))
