"""JSON/CSV serialization of sets, specs and tubes."""

import hashlib
import json
import os

import numpy as np

from .geometry import Box, HPolytope


def to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def dumps(obj):
    """Canonical JSON text: sorted keys, shortest round-trip floats."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def digest(obj):
    text = json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(text.encode()).hexdigest()


def box_to_dict(b):
    return {"lower": b.lower.tolist(), "upper": b.upper.tolist()}


def box_from_dict(d):
    return Box(d["lower"], d["upper"])


def hpoly_to_dict(P):
    return {"H": P.H.tolist(), "f": P.f.tolist()}


def hpoly_from_dict(d):
    return HPolytope(d["H"], d["f"])


def spec_to_dict(spec):
    return {
        "R0": box_to_dict(spec.R0),
        "V": box_to_dict(spec.V),
        "N": spec.N,
        "X_safe": hpoly_to_dict(spec.X_safe),
        "U_adm": hpoly_to_dict(spec.U_adm),
        "R0_poly": hpoly_to_dict(spec.R0_poly),
    }


def spec_from_dict(d):
    from .reach import ReachSpec

    return ReachSpec(
        R0=box_from_dict(d["R0"]),
        V=box_from_dict(d["V"]),
        N=d["N"],
        X_safe=hpoly_from_dict(d["X_safe"]),
        U_adm=hpoly_from_dict(d["U_adm"]),
        R0_poly=hpoly_from_dict(d["R0_poly"]) if "R0_poly" in d else None,
    )


def spec_hash(spec):
    return digest(spec_to_dict(spec))


def fmt(x):
    """Shortest decimal string that round-trips to the same float."""
    return repr(float(x))


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def read_csv(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    header = lines[0].split(",")
    return header, [ln.split(",") for ln in lines[1:]]


def cardinal_names(labels):
    labels = list(labels)
    return [f"+{s}" for s in labels] + [f"-{s}" for s in labels]


def write_tube_csvs(result, out_dir, state_labels=None, input_labels=None):
    """``tube_states.csv`` (k = 0..N) and ``tube_inputs.csv`` (k = 0..N-1)."""
    n = result.rho_lx.shape[1] // 2
    m = result.rho_lu.shape[1] // 2
    sl = state_labels or [f"x{i + 1}" for i in range(n)]
    ul = input_labels or [f"u{i + 1}" for i in range(m)]
    S = result.state_box_supports()
    write_csv(
        os.path.join(out_dir, "tube_states.csv"),
        ["k"] + [f"rho[{d}]" for d in cardinal_names(sl)],
        [[k] + list(S[k]) for k in range(S.shape[0])],
    )
    write_csv(
        os.path.join(out_dir, "tube_inputs.csv"),
        ["k"] + [f"rho[{d}]" for d in cardinal_names(ul)],
        [[k] + list(result.rho_lu[k]) for k in range(result.rho_lu.shape[0])],
    )
