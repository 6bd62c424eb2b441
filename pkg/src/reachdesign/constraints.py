"""Support-function containment margins and invariance certificates."""

from dataclasses import dataclass

import numpy as np

from . import io
from .geometry import DimensionError

FEAS_TOL = 1e-6
CERTIFICATE_SCHEMA = "reachdesign.certificate"
CERTIFICATE_VERSION = 1


class CertificateError(RuntimeError):
    """Raised when a certificate cannot be issued."""


def _scale(f):
    a = np.abs(np.asarray(f, dtype=float))
    return np.where(a > 0, a, 1.0)


@dataclass
class ConstraintMargins:
    """Signed margins ``f - rho``; nonnegative means satisfied.

    ``safety`` is (N, n_hx) for ``R(1..N)``, ``input`` is (N, n_hu) for
    ``U(0..N-1)``, ``invariance`` compares ``R(N)`` with the operating
    region, ``realizability`` stacks ``p - lower``, ``upper - p`` and any
    extra ``-g(p)`` terms.
    """

    safety: np.ndarray
    input: np.ndarray
    invariance: np.ndarray
    realizability: np.ndarray
    safety_scale: np.ndarray
    input_scale: np.ndarray
    invariance_scale: np.ndarray
    realizability_scale: np.ndarray
    tol: float = FEAS_TOL

    GROUPS = ("safety", "input", "invariance", "realizability")

    def normalized(self, group):
        return getattr(self, group) / getattr(self, f"{group}_scale")

    def vector(self, normalized=True):
        parts = [(self.normalized(g) if normalized else getattr(self, g)).reshape(-1) for g in self.GROUPS]
        return np.concatenate(parts)

    @property
    def feasible(self):
        return bool(np.all(self.vector(normalized=False) >= -self.tol))

    def group_ok(self, group):
        return bool(np.all(getattr(self, group) >= -self.tol))

    @property
    def min_margin(self):
        return float(self.vector(normalized=False).min())

    def total_violation(self, normalized=True):
        v = self.vector(normalized)
        return float(np.sum(np.maximum(-v, 0.0)))

    def most_violated(self):
        """``(group, index, raw_margin)`` of the smallest normalized margin."""
        best = None
        for g in self.GROUPS:
            a = self.normalized(g)
            if a.size == 0:
                continue
            idx = np.unravel_index(np.argmin(a), a.shape)
            if best is None or a[idx] < best[3]:
                best = (g, tuple(int(i) for i in idx), float(getattr(self, g)[idx]), float(a[idx]))
        return best[:3]

    def to_dict(self):
        return {
            "feasible": self.feasible,
            "tolerance": self.tol,
            "min_margin": self.min_margin,
            "most_violated": list(self.most_violated()),
            "safety": self.safety.tolist(),
            "input": self.input.tolist(),
            "invariance": self.invariance.tolist(),
            "realizability": self.realizability.tolist(),
        }

    @classmethod
    def violated_everywhere(cls, spec, n_params, realizability=None, penalty=1e12, tol=FEAS_TOL):
        """Margins of a candidate whose tube diverged."""
        N = spec.N
        fill = lambda shape: np.full(shape, -penalty)
        real = np.zeros(2 * n_params) if realizability is None else realizability
        return cls(
            fill((N, spec.X_safe.n_rows)),
            fill((N, spec.U_adm.n_rows)),
            fill(spec.R0_poly.n_rows),
            real,
            np.ones(spec.X_safe.n_rows),
            np.ones(spec.U_adm.n_rows),
            np.ones(spec.R0_poly.n_rows),
            np.ones_like(real),
            tol,
        )


def realizability_margins(bounds, p, g=None):
    lower, upper = (bounds.lower, bounds.upper) if hasattr(bounds, "lower") else bounds
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    p = np.asarray(p, dtype=float)
    if p.shape != lower.shape:
        raise DimensionError(f"design vector has length {p.shape}, bounds have {lower.shape}")
    span = np.where(upper > lower, upper - lower, 1.0)
    margins = [p - lower, upper - p]
    scales = [span, span]
    if g is not None:
        gv = np.atleast_1d(np.asarray(g(p), dtype=float))
        margins.append(-gv)
        scales.append(np.ones_like(gv))
    return np.concatenate(margins), np.concatenate(scales)


def evaluate(result, spec, bounds, p, g=None, tol=FEAS_TOL):
    """Margins of the sufficient containment conditions for one tube."""
    if result.rho_x.shape != (spec.N, spec.X_safe.n_rows) or result.rho_u.shape != (spec.N, spec.U_adm.n_rows):
        raise DimensionError("reach result does not match the reach spec")
    real, real_scale = realizability_margins(bounds, p, g)
    return ConstraintMargins(
        safety=spec.X_safe.f - result.rho_x,
        input=spec.U_adm.f - result.rho_u,
        invariance=spec.R0_poly.f - result.rho_r,
        realizability=real,
        safety_scale=_scale(spec.X_safe.f),
        input_scale=_scale(spec.U_adm.f),
        invariance_scale=_scale(spec.R0_poly.f),
        realizability_scale=real_scale,
        tol=tol,
    )


def _payload(result, spec, p, tol):
    return {
        "schema": CERTIFICATE_SCHEMA,
        "version": CERTIFICATE_VERSION,
        "design": np.asarray(p, dtype=float).tolist(),
        "tolerance": tol,
        "spec": io.spec_to_dict(spec),
        "spec_sha256": io.spec_hash(spec),
        "supports": {
            "rho_lx": result.rho_lx.tolist(),
            "rho_x": result.rho_x.tolist(),
            "rho_lu": result.rho_lu.tolist(),
            "rho_u": result.rho_u.tolist(),
            "rho_r": result.rho_r.tolist(),
        },
        "claims": [
            "R(k) inside X_safe for k = 1..N",
            "U(k) inside U_adm for k = 0..N-1",
            "R(N) inside R(0), so the union of R(0..N-1) is robustly positive invariant",
            "closed loop started in R(0) stays in X_safe for all time",
        ],
    }


def certificate(result, spec, p=None, tol=FEAS_TOL, bounds=None):
    """Machine-checkable invariance record; refuses when any margin fails.

    The record carries every support used in the check, the reach spec and its
    hash, and a SHA-256 digest over the whole payload.
    """
    p = np.zeros(0) if p is None else np.asarray(p, dtype=float)
    bounds = bounds or (p, p)
    m = evaluate(result, spec, bounds, p, tol=tol)
    if not m.feasible:
        g, idx, val = m.most_violated()
        raise CertificateError(f"{g} margin {val:.6g} at {idx} is below -{tol}")
    cert = _payload(result, spec, p, tol)
    cert["digest"] = io.digest(cert)
    return cert


@dataclass
class VerificationOutcome:
    ok: bool
    reasons: list

    def __bool__(self):
        return self.ok


def verify_certificate(cert, spec=None, family=None, rtol=1e-9):
    """Re-check a certificate offline.

    Checks the digest, the reach-spec hash (when ``spec`` is given), the stored
    margins, and (when ``family`` is given) recomputes the tube at the
    certified design and compares every support.
    """
    reasons = []
    body = {k: v for k, v in cert.items() if k != "digest"}
    if cert.get("schema") != CERTIFICATE_SCHEMA or cert.get("version") != CERTIFICATE_VERSION:
        reasons.append("unknown certificate schema or version")
    if io.digest(body) != cert.get("digest"):
        reasons.append("digest mismatch")
    try:
        stored_spec = io.spec_from_dict(cert["spec"])
    except (KeyError, ValueError) as exc:
        return VerificationOutcome(False, reasons + [f"unreadable spec: {exc}"])
    if io.spec_hash(stored_spec) != cert.get("spec_sha256"):
        reasons.append("spec hash mismatch")
    if spec is not None and io.spec_hash(spec) != cert.get("spec_sha256"):
        reasons.append("certificate was issued for a different spec")
    tol = float(cert["tolerance"])
    s = {k: np.asarray(v, dtype=float) for k, v in cert["supports"].items()}
    checks = (
        ("safety", stored_spec.X_safe.f - s["rho_x"]),
        ("input", stored_spec.U_adm.f - s["rho_u"]),
        ("invariance", stored_spec.R0_poly.f - s["rho_r"]),
    )
    for name, margin in checks:
        if np.any(margin < -tol):
            reasons.append(f"{name} margin violated")
    if family is not None:
        from .reach import reach

        fresh = reach(stored_spec, family, np.asarray(cert["design"]), store_tubes=False)
        for key in ("rho_lx", "rho_x", "rho_lu", "rho_u", "rho_r"):
            ref = getattr(fresh, key)
            if ref.shape != s[key].shape or not np.allclose(s[key], ref, rtol=rtol, atol=rtol):
                reasons.append(f"{key} does not match recomputation")
    return VerificationOutcome(not reasons, reasons)
