"""``reachdesign codesign|verify|simulate --config <path> --out <dir>``.

Exit codes: 0 success, 2 config error, 3 no feasible design found,
4 safety violation, 5 safe but not certified.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import io
from .config import ConfigError, RunConfig, build_problem, solver_options
from .constraints import CertificateError, certificate
from .dynamics import UnstableCandidateError, simulate as run_simulation
from .optimizer import evaluate_candidate, solve
from .reach import monte_carlo_falsify, reach, worst_case_trajectory

log = logging.getLogger("reachdesign")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_UNSAFE = 4
EXIT_UNCERTIFIED = 5


def _labels(problem):
    n = problem.spec.n_states
    st = problem.family.state_labels or tuple(f"x{i + 1}" for i in range(n))
    return list(st), [f"u{i + 1}" for i in range(problem.spec.n_inputs)]


def _write_json(path, obj):
    with open(path, "w", newline="\n") as fh:
        fh.write(io.dumps(obj))


def _write_tubes(problem, result, out):
    sl, ul = _labels(problem)
    io.write_tube_csvs(result, out, sl, ul)


def _write_margins(margins, out):
    rows = []
    for g in margins.GROUPS:
        a = np.atleast_2d(getattr(margins, g))
        if g in ("invariance", "realizability"):
            a = a.reshape(1, -1)
        norm = np.atleast_2d(margins.normalized(g)).reshape(a.shape)
        for k in range(a.shape[0]):
            for j in range(a.shape[1]):
                step = k if g == "input" else (k + 1 if g == "safety" else "")
                rows.append([g, step, j, a[k, j], norm[k, j]])
    io.write_csv(os.path.join(out, "margins.csv"), ["group", "k", "row", "margin", "normalized"], rows)


def _certificate(problem, result, p, tol, out):
    try:
        cert = certificate(result, problem.spec, p, tol=tol)
    except CertificateError as exc:
        log.info("no certificate: %s", exc)
        return None
    _write_json(os.path.join(out, "certificate.json"), cert)
    return cert


def cmd_codesign(cfg, out, seed=None, starts=None):
    problem = build_problem(cfg)
    options = solver_options(cfg, seed, starts)
    report = solve(problem, options)
    log.info("codesign finished in %.2f s, %d evaluations", report.wall_time, report.evaluations)
    _write_json(os.path.join(out, "report.json"), report.to_dict())
    io.write_csv(
        os.path.join(out, "trace.csv"),
        ["start", "iteration", "cost", "max_violation"],
        [list(r) for r in report.trace],
    )
    ev = evaluate_candidate(problem, report.p_star, store_tubes=False, tol=options.constraint_tol)
    if ev.result is not None:
        _write_tubes(problem, ev.result, out)
    if not report.feasible:
        g, idx, val = report.margins.most_violated()
        log.warning("no feasible design; least violated margin %s%s = %.6g", g, idx, val)
        return EXIT_INFEASIBLE
    _certificate(problem, ev.result, report.p_star, options.constraint_tol, out)
    return EXIT_OK


def _fixed_design(cfg):
    p = cfg.design_point
    if p is None:
        raise ConfigError("design.p is required for this command")
    return p


def cmd_verify(cfg, out, seed=None):
    problem = build_problem(cfg)
    p = _fixed_design(cfg)
    ev = evaluate_candidate(problem, p)
    if ev.unstable:
        log.warning("candidate diverges; treated as unsafe")
        _write_json(os.path.join(out, "verify.json"), {"status": "unstable", "design": p.tolist()})
        return EXIT_UNSAFE
    result = ev.result
    margins = ev.margins
    vcfg = cfg.verify
    seed = seed if seed is not None else (cfg.seed or 0)
    report = monte_carlo_falsify(
        problem.spec, problem.family, p,
        trials=vcfg.get("trials", 10_000),
        horizon=vcfg.get("horizon"),
        seed=seed,
        adversarial=vcfg.get("adversarial", True),
        result=result,
    )
    _write_margins(margins, out)
    _write_tubes(problem, result, out)
    if not margins.group_ok("safety") or report.safety_violations:
        code = EXIT_UNSAFE
    elif margins.feasible:
        code = EXIT_OK
    else:
        code = EXIT_UNCERTIFIED
    cert = _certificate(problem, result, p, margins.tol, out) if code == EXIT_OK else None
    summary = {
        "status": {EXIT_OK: "certified", EXIT_UNSAFE: "unsafe", EXIT_UNCERTIFIED: "safe_not_certified"}[code],
        "exit_code": code,
        "design": p.tolist(),
        "cost": ev.cost,
        "breakdown": ev.breakdown.to_dict(),
        "margins": margins.to_dict(),
        "max_input_support": result.max_input_support(),
        "falsification": report.to_dict(),
        "certificate_emitted": cert is not None,
    }
    _write_json(os.path.join(out, "verify.json"), summary)
    log.info("verify: %s (min margin %.6g)", summary["status"], margins.min_margin)
    return code


def disturbance_sequence(dspec, problem, model, steps, seed):
    """Disturbance samples (steps, d) and an optional worst-case initial state."""
    V = problem.spec.V
    d = V.dim
    kind = dspec.get("kind", "constant")
    if kind == "constant":
        value = np.asarray(dspec.get("value", np.zeros(d)), dtype=float)
        if value.shape != (d,):
            raise ConfigError(f"disturbance value must have {d} entries")
        return np.tile(value, (steps, 1)), None
    if kind == "schedule":
        segs = sorted(dspec.get("segments", []), key=lambda s: s["start"])
        if not segs:
            raise ConfigError("schedule disturbance needs segments")
        seq = np.zeros((steps, d))
        for i, s in enumerate(segs):
            end = segs[i + 1]["start"] if i + 1 < len(segs) else steps
            value = np.asarray(s["value"], dtype=float)
            if value.shape != (d,):
                raise ConfigError(f"schedule value must have {d} entries")
            seq[s["start"]:end] = value
        return seq, None
    if kind == "uniform":
        rng = np.random.default_rng(dspec.get("seed", seed))
        return rng.uniform(V.lower, V.upper, size=(steps, d)), None
    if "signs" in dspec:
        signs = np.asarray(dspec["signs"], dtype=float)
        if signs.ndim != 2 or signs.shape[1] != d:
            raise ConfigError(f"vertex signs must be rows of {d} entries")
        rows = np.resize(signs, (steps, d))
        return np.where(rows >= 0, V.upper, V.lower), None
    if "direction" not in dspec:
        raise ConfigError("vertex disturbance needs 'signs' or 'direction'")
    direction = np.asarray(dspec["direction"], dtype=float)
    if direction.shape != (problem.spec.n_states,) or not np.any(direction):
        raise ConfigError("vertex direction must be a nonzero state vector")
    step = dspec.get("step", min(steps, problem.spec.N))
    x0, seq = worst_case_trajectory(model, problem.spec.R0, V, direction, min(step, steps), steps)
    return seq, x0


def cmd_simulate(cfg, out, seed=None):
    problem = build_problem(cfg)
    p = _fixed_design(cfg)
    try:
        model = problem.family(p)
    except UnstableCandidateError as exc:
        raise ConfigError(f"design cannot be simulated: {exc}") from None
    scfg = cfg.simulate
    steps = scfg.get("steps", problem.spec.N)
    seed = seed if seed is not None else (cfg.seed or 0)
    seq, worst_x0 = disturbance_sequence(scfg.get("disturbance", {"kind": "constant"}), problem, model, steps, seed)
    x0 = scfg.get("x0", "center")
    if isinstance(x0, str):
        if x0 == "worst":
            if worst_x0 is None:
                raise ConfigError("x0 = 'worst' needs a vertex disturbance with a direction")
            x0 = worst_x0
        else:
            x0 = problem.spec.R0.center
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (problem.spec.n_states,):
        raise ConfigError(f"x0 must have {problem.spec.n_states} entries")
    X, U = run_simulation(model, x0, seq)
    try:
        tube = reach(problem.spec, model, p, output_map=problem.cost_spec(p).Q, store_tubes=False)
    except UnstableCandidateError:
        tube = None
    sl, ul = _labels(problem)
    n = problem.spec.n_states
    Lh = np.vstack([np.eye(n), -np.eye(n)])
    safe = problem.spec.X_safe.contains_points(X)
    header = ["k", "t"] + sl + ul + [f"v{i + 1}" for i in range(seq.shape[1])] + ["in_safe", "in_tube"]
    rows = []
    for k in range(X.shape[0]):
        if tube is not None and k <= problem.spec.N:
            bound = tube.rho_lx0 if k == 0 else tube.rho_lx[k - 1]
            in_tube = bool(np.all(Lh @ X[k] <= bound + 1e-9))
        else:
            in_tube = None
        u = list(U[k]) if k < U.shape[0] else [None] * U.shape[1]
        v = list(seq[k]) if k < seq.shape[0] else [None] * seq.shape[1]
        rows.append([k, k * model.dt] + list(X[k]) + u + v + [bool(safe[k]), in_tube])
    io.write_csv(os.path.join(out, "trajectory.csv"), header, rows)
    log.info("simulate: %d steps, %d unsafe samples", steps, int(np.count_nonzero(~safe)))
    return EXIT_OK


COMMANDS = {"codesign": cmd_codesign, "verify": cmd_verify, "simulate": cmd_simulate}


def make_parser():
    ap = argparse.ArgumentParser(prog="reachdesign", description="Set-based robust control co-design.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run configuration")
    ap.add_argument("--out", help="output directory (defaults to config output_dir or '.')")
    ap.add_argument("--seed", type=int, help="seed for multistarts and sampling")
    ap.add_argument("--starts", type=int, help="number of multistarts (codesign)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.seed is not None and args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        if args.starts is not None and args.starts < 1:
            raise ConfigError("--starts must be positive")
        cfg = RunConfig.load(args.config)
        out = args.out or cfg.output_dir or "."
        os.makedirs(out, exist_ok=True)
        if args.command == "codesign":
            return cmd_codesign(cfg, out, args.seed, args.starts)
        return COMMANDS[args.command](cfg, out, args.seed)
    except ConfigError as exc:
        print(f"reachdesign: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
