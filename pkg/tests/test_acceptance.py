"""Acceptance criteria 1-9, one PASS/FAIL line each (see the terminal summary)."""

import itertools
import json
import time
from dataclasses import replace

import numpy as np
import pytest

from reachdesign import benchmarks as bm
from reachdesign.cli import main
from reachdesign.constraints import verify_certificate
from reachdesign.dynamics import UnstableCandidateError, integrate_rk4, simulate_batch, zoh_discretize
from reachdesign.geometry import Box, DirectionSet, Zonotope, linear_map, minkowski_sum, support, support_many
from reachdesign.objective import CostSpec, error_supports, r2_metric, total_cost
from reachdesign.optimizer import CoDesignProblem, evaluate_candidate
from reachdesign.reach import ReachSpec, monte_carlo_falsify, reach

SET_BASED = bm.REFERENCE_SET_BASED
SIMULTANEOUS = bm.REFERENCE_SIMULTANEOUS


def write_config(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def timed_cli(command, cfg_path, out, *flags):
    t0 = time.perf_counter()
    code = main([command, "--config", cfg_path, "--out", str(out), *flags])
    return code, time.perf_counter() - t0


def verify_config(p, disturbance="hold"):
    model = {"name": "active_suspension"}
    if disturbance != "hold":
        model["params"] = {"disturbance": disturbance}
    return {"version": 1, "model": model, "design": {"p": list(map(float, p))}, "verify": {"trials": 10_000},
            "seed": 0}


def band_check(summary):
    m = summary["margins"]
    safety = np.array(m["safety"]) / 0.5
    f_r = np.array([0.25, 0.75, 0.25, 0.75] * 2)
    inv = np.array(m["invariance"]) / f_r
    umax = summary["max_input_support"]
    ok = safety.min() >= -0.02 and inv.min() >= -0.02 and abs(umax - 4000.0) <= 0.05 * 4000.0
    return ok, safety.min(), inv.min(), umax


@pytest.fixture(scope="module")
def codesign_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("codesign")
    cfg = write_config(out / "config.json", {"version": 1, "model": {"name": "active_suspension"},
                                             "solver": {"starts": 8, "seed": 0}})
    code, wall = timed_cli("codesign", cfg, out / "run")
    return code, wall, out / "run"


def test_criterion_1_set_based_cross_check(tmp_path, criterion):
    details = []
    ok_any = False
    runtime = None
    for conv in ("hold", "scaled"):
        code, wall = timed_cli("verify", write_config(tmp_path / f"{conv}.json", verify_config(SET_BASED, conv)),
                               tmp_path / conv)
        summary = json.loads((tmp_path / conv / "verify.json").read_text())
        ok, s_min, i_min, umax = band_check(summary)
        runtime = wall if runtime is None else runtime
        ok_any |= ok and wall < 5.0
        details.append(f"{conv}: exit {code}, min safety {s_min:+.3%} of |f|, min invariance {i_min:+.3%} of |f_r|, "
                       f"max input support {umax:.1f} N, {wall:.2f} s")
    criterion(1, ok_any, "; ".join(details))


def test_criterion_2_simultaneous_unsafe(tmp_path, criterion):
    code, wall = timed_cli("verify", write_config(tmp_path / "c.json", verify_config(SIMULTANEOUS)), tmp_path / "o")
    summary = json.loads((tmp_path / "o" / "verify.json").read_text())
    safety = np.array(summary["margins"]["safety"])
    ok = code == 4 and safety.min() < 0 and wall < 5.0
    criterion(2, ok, f"exit {code}, min safety margin {safety.min():.4f} m on |x3| <= 0.5, "
                     f"{summary['falsification']['safety_violations']} violating samples, {wall:.2f} s")


def test_criterion_3_codesign(codesign_run, criterion):
    code, wall, out = codesign_run
    report = json.loads((out / "report.json").read_text())
    ref = evaluate_candidate(bm.suspension_problem(), SET_BASED).cost
    ok = code == 0 and report["feasible"] and report["cost"] <= 1.01 * ref and wall < 600
    criterion(3, ok, f"exit {code}, cost {report['cost']:.2f} vs reference {ref:.2f} (limit {1.01 * ref:.2f}), "
                     f"feasible {report['feasible']}, {wall:.1f} s")


def test_criterion_4_support_oracle(criterion):
    rng = np.random.default_rng(4)
    worst_exact = worst_sum = worst_map = 0.0
    for _ in range(500):
        n, g = int(rng.integers(1, 6)), int(rng.integers(0, 13))
        Z = Zonotope(rng.normal(size=n), rng.normal(size=(n, g)))
        W = Zonotope(rng.normal(size=n), rng.normal(size=(n, int(rng.integers(0, 6)))))
        l = rng.normal(size=n)
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=g))) if g else np.zeros((1, 0))
        verts = Z.center + signs @ Z.generators.T
        worst_exact = max(worst_exact, abs(support(Z, l) - (verts @ l).max()))
        worst_sum = max(worst_sum, abs(support(minkowski_sum(Z, W), l) - support(Z, l) - support(W, l)))
        M = rng.normal(size=(int(rng.integers(1, 6)), n))
        lm = rng.normal(size=M.shape[0])
        worst_map = max(worst_map, abs(support(linear_map(M, Z), lm) - support(Z, M.T @ lm)))
    ok = worst_exact <= 1e-9 and worst_sum <= 1e-12 and worst_map <= 1e-12
    criterion(4, ok, f"500 zonotopes: brute-force error {worst_exact:.1e}, Minkowski {worst_sum:.1e}, "
                     f"linear map {worst_map:.1e}")


def _tms_candidate():
    params = bm.TmsParams(C_cp_w=800.0, C_cp_f=1200.0, C_hx_w=1500.0, C_hx_f=2000.0, aA_cp=150.0, aA_hx=300.0,
                          c_p=4180.0, m_dot_p=0.2, m_dot_s=0.3, aA_hx_s=400.0, T_s=290.0,
                          Q_cp_bounds=(0.0, 2000.0), T_tf_bounds=(295.0, 305.0))
    R0 = Box([295.0, 295.0, 292.0, 295.0], [310.0, 310.0, 305.0, 310.0])
    prob = bm.tms_problem(params, R0, Box([280.0] * 4, [330.0] * 4).to_hpolytope(), N=10, dt=5.0,
                          design_lower=[100.0, 0.05], design_upper=[1000.0, 1.0])
    return prob, np.array([400.0, 0.3])


def test_criterion_5_tube_soundness(codesign_run, criterion):
    _, _, out = codesign_run
    p_opt = np.array(json.loads((out / "report.json").read_text())["p_star"])
    susp = bm.suspension_problem()
    tms, p_tms = _tms_candidate()
    cases = [("set-based", susp, SET_BASED), ("simultaneous", susp, SIMULTANEOUS), ("codesign", susp, p_opt),
             ("tms", tms, p_tms)]
    parts, ok = [], True
    for name, prob, p in cases:
        res = reach(prob.spec, prob.family, p, store_tubes=False)
        rep = monte_carlo_falsify(prob.spec, prob.family, p, trials=10_000, seed=5, adversarial=True, result=res)
        certified = evaluate_candidate(prob, p).feasible
        good = rep.tube_violations == 0 and (not certified or rep.safety_violations == 0)
        ok &= good
        parts.append(f"{name}: {rep.tube_violations} tube violations in {rep.trials}+{rep.adversarial_trials}"
                     f"{' (certified)' if certified else ''}")
    criterion(5, ok, "; ".join(parts))


def test_criterion_6_invariance_by_simulation(codesign_run, criterion):
    _, _, out = codesign_run
    cert_path = out / "certificate.json"
    prob = bm.suspension_problem()
    rng = np.random.default_rng(6)
    parts, ok = [], cert_path.exists()
    if ok:
        cert = json.loads(cert_path.read_text())
        check = verify_certificate(cert, spec=prob.spec, family=prob.family)
        ok &= bool(check)
        p = np.array(cert["design"])
        model = prob.family(p)
        N = prob.spec.N
        X0 = prob.spec.R0.sample(rng, 1000)
        V = rng.uniform(prob.spec.V.lower, prob.spec.V.upper, size=(1000, 5 * N, 1))
        X = simulate_batch(model, X0, V)
        bad = int(np.count_nonzero(~prob.spec.X_safe.contains_points(X.reshape(-1, 4), atol=0.0)))
        ok &= bad == 0
        parts.append(f"codesign certificate re-verified {bool(check)}, {bad} X_safe violations in 1000 x {5 * N} steps")
    else:
        parts.append("codesign emitted no certificate")
    criterion(6, ok, "; ".join(parts))


def test_criterion_7_zoh_vs_rk4(criterion):
    # uniform over the full design box, keeping Schur-stable closed loops: divergent ones reach 1e7..1e10
    # after one step (or overflow), where an absolute 1e-6 comparison is below double resolution
    rng = np.random.default_rng(7)
    setup = bm.SuspensionSetup()
    worst, kept, rejected = 0.0, 0, 0
    while kept < 10:
        p = rng.uniform(setup.lower, setup.upper)
        build = bm.build_active_suspension(p)
        try:
            model = zoh_discretize(build.lti, build.gain, setup.dt)
        except UnstableCandidateError:
            rejected += 1
            continue
        if model.spectral_radius() >= 1.0:
            rejected += 1
            continue
        kept += 1
        x0 = rng.uniform(-np.array(setup.r0_half_widths), setup.r0_half_widths)
        v = rng.uniform(-setup.road_speed, setup.road_speed, size=1)
        ref = integrate_rk4(build.lti, build.gain, x0, v, setup.dt, h=1e-5)
        worst = max(worst, float(np.abs(model.A_d @ x0 + model.E_d @ v - ref).max()))
    criterion(7, worst <= 1e-6, f"max per-state error over 10 random stable in-bounds designs {worst:.2e} "
                                f"({rejected} divergent draws skipped)")


def test_criterion_8_cost_identities(criterion):
    rng = np.random.default_rng(8)
    L4 = DirectionSet.cardinal(4).matrix
    single = max(abs(r2_metric(error_supports(support_many(Zonotope.singleton(x), L4))) - np.linalg.norm(x))
                 for x in rng.normal(size=(200, 4)) * 10)

    N = 5
    spec = ReachSpec(Box([-1.0, 0.5], [2.0, 1.5]), Box([-1.0], [1.0]), N, Box.symmetric([3.0, 3.0]).to_hpolytope(),
                     Box.symmetric([1.0]).to_hpolytope())
    family = bm.affine_discrete_family(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)), [0.0, 0.0], [10.0, 10.0])
    cs = CostSpec(gamma1=2.0, gamma2=0.5, gamma3=0.0, mp_weights=[1.0, 4.0])
    p = np.array([1.5, 0.25])
    closed = 1.5 + 1.0 + (2.0 + N * 0.5) * (np.hypot(1.5, 0.5) + np.hypot(0.5, 1.0))
    frozen_err = abs(total_cost(reach(spec, family, p), cs, p).total - closed)

    box = Box.symmetric([1.0])
    toy = CoDesignProblem(
        bm.affine_discrete_family([[0.0]], [[0.0]], [[0.0]], [0.0], [1.0], A_terms=[[[1.0]]]),
        ReachSpec(box, Box([0.0], [0.0]), 2, box.to_hpolytope(), box.to_hpolytope()),
        CostSpec(gamma1=1.0, gamma2=1.0, gamma3=0.0, include_initial=False),
    )
    grid = np.round(np.arange(0.0, 1.0 + 5e-4, 1e-3), 3)
    costs = np.array([evaluate_candidate(toy, [g]).cost for g in grid])
    p_grid = float(grid[np.argmin(costs)])
    ok = single <= 1e-12 and frozen_err <= 1e-12 and abs(p_grid) <= 1e-3
    criterion(8, ok, f"singleton r2 error {single:.1e}, frozen closed-form error {frozen_err:.1e}, "
                     f"contraction toy grid optimum p = {p_grid}")


def test_criterion_9_determinism(tmp_path, criterion):
    runs = {
        "codesign": {"version": 1, "model": {"name": "active_suspension"}, "solver": {"starts": 2, "seed": 3}},
        "verify": verify_config(SIMULTANEOUS),
        "simulate": {**verify_config(SET_BASED), "simulate": {"x0": "center", "steps": 40,
                                                             "disturbance": {"kind": "uniform"}}},
    }
    parts, ok = [], True
    for command, cfg in runs.items():
        path = write_config(tmp_path / f"{command}.json", cfg)
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / f"{command}_{tag}"
            main([command, "--config", path, "--out", str(out), "--seed", "9"])
            outs.append({f.name: f.read_bytes() for f in sorted(out.iterdir())})
        same = outs[0] == outs[1] and bool(outs[0])
        ok &= same
        parts.append(f"{command}: {len(outs[0])} files {'identical' if same else 'DIFFER'}")
    criterion(9, ok, "; ".join(parts))
