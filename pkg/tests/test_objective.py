import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from reachdesign import benchmarks as bm
from reachdesign.dynamics import DiscreteClosedLoop
from reachdesign.geometry import Box, DirectionSet, Zonotope, support_many
from reachdesign.objective import (
    CostSpec,
    SetError,
    center_estimate,
    error_supports,
    half_widths,
    r2_metric,
    total_cost,
)
from reachdesign.reach import ReachSpec, reach

from conftest import extreme_points

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


def cardinal(Z):
    return support_many(Z, DirectionSet.cardinal(Z.dim).matrix)


class TestErrorSupports:
    def test_zero_reference(self):
        e = error_supports([1.0, 2.0, 3.0, 4.0], np.zeros(2))
        np.testing.assert_array_equal(e.rho_plus, [1.0, 2.0])
        np.testing.assert_array_equal(e.rho_minus, [3.0, 4.0])

    def test_singleton_at_reference(self):
        x = np.array([0.3, -1.2, 5.0])
        e = error_supports(cardinal(Zonotope.singleton(x)), x)
        np.testing.assert_allclose(e.rho_plus, 0.0, atol=1e-15)
        np.testing.assert_allclose(e.rho_minus, 0.0, atol=1e-15)

    def test_centering(self):
        e = error_supports(cardinal(Box([0.0], [2.0]).to_zonotope()), [1.0])
        assert e.rho_plus.tolist() == [1.0] and e.rho_minus.tolist() == [1.0]

    def test_callable_reference_matches_point(self):
        ref = np.array([0.5, -0.25])
        rho = np.array([2.0, 1.0, 0.5, 3.0])
        a = error_supports(rho, ref)
        b = error_supports(rho, lambda l: float(l @ ref))
        np.testing.assert_allclose(a.rho_plus, b.rho_plus)
        np.testing.assert_allclose(a.rho_minus, b.rho_minus)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            error_supports([1.0, 1.0, 1.0, 1.0], [0.0, 0.0, 0.0])

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            SetError(np.array([1.0]), np.array([-2.0]))


class TestEstimates:
    def test_symmetric_center_zero(self):
        e = error_supports(cardinal(Box.symmetric([1.0, 3.0]).to_zonotope()))
        np.testing.assert_array_equal(center_estimate(e), [0.0, 0.0])

    def test_singleton_center(self):
        x = np.array([2.0, -7.0])
        np.testing.assert_allclose(center_estimate(error_supports(cardinal(Zonotope.singleton(x)))), x)
        np.testing.assert_allclose(half_widths(error_supports(cardinal(Zonotope.singleton(x)))), 0.0, atol=1e-15)

    def test_interval(self):
        e = error_supports(cardinal(Box([-1.0], [3.0]).to_zonotope()))
        assert center_estimate(e).tolist() == [1.0]
        assert half_widths(e).tolist() == [2.0]

    def test_half_widths_brute_force(self, rng):
        for _ in range(20):
            Z = Zonotope(rng.normal(size=3), rng.normal(size=(3, 5)))
            V = extreme_points(Z.center, Z.generators)
            np.testing.assert_allclose(half_widths(error_supports(cardinal(Z))), (V.max(0) - V.min(0)) / 2, atol=1e-12)


class TestR2:
    def test_singleton_norm(self, rng):
        for _ in range(50):
            x = rng.normal(size=4) * 10
            assert abs(r2_metric(error_supports(cardinal(Zonotope.singleton(x)))) - np.linalg.norm(x)) <= 1e-12

    def test_unit_box(self):
        assert r2_metric(error_supports(cardinal(Box.symmetric([1.0, 1.0]).to_zonotope()))) == pytest.approx(
            np.sqrt(2), abs=1e-15
        )

    @settings(max_examples=200, deadline=None)
    @given(hnp.arrays(float, 3, elements=finite), hnp.arrays(float, 3, elements=finite))
    def test_singleton_minus_reference(self, x, ref):
        e = error_supports(cardinal(Zonotope.singleton(x)), ref)
        assert r2_metric(e) == pytest.approx(np.linalg.norm(x - ref), rel=1e-12, abs=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(
        hnp.arrays(float, 2, elements=finite),
        hnp.arrays(float, (2, 3), elements=finite),
        hnp.arrays(float, 2, elements=finite),
        st.floats(0.01, 50),
    )
    def test_scale_equivariance(self, c, G, ref, alpha):
        Z = Zonotope(c, G)
        Za = Zonotope(ref + alpha * (c - ref), alpha * G)
        base = r2_metric(error_supports(cardinal(Z), ref))
        assert r2_metric(error_supports(cardinal(Za), ref)) == pytest.approx(alpha * base, rel=1e-9, abs=1e-9)

    def test_radius_bound(self, rng):
        for _ in range(100):
            n = rng.integers(1, 5)
            Z = Zonotope(rng.normal(size=n), rng.normal(size=(n, rng.integers(1, 7))))
            e = error_supports(cardinal(Z))
            V = extreme_points(Z.center, Z.generators)
            radius = np.linalg.norm(V - center_estimate(e), axis=1).max()
            assert np.linalg.norm(half_widths(e)) >= radius - 1e-12

    def test_radius_bound_sampled(self, rng):
        Z = Zonotope(rng.normal(size=3), rng.normal(size=(3, 8)))
        e = error_supports(cardinal(Z))
        d = np.linalg.norm(Z.sample(rng, 5000) - center_estimate(e), axis=1)
        assert np.linalg.norm(half_widths(e)) >= d.max()


def frozen_problem(N=4):
    spec = ReachSpec(
        R0=Box([-1.0, 0.0], [3.0, 1.0]),
        V=Box([-1.0], [1.0]),
        N=N,
        X_safe=Box.symmetric([5.0, 5.0]).to_hpolytope(),
        U_adm=Box.symmetric([1.0]).to_hpolytope(),
    )
    model = DiscreteClosedLoop(np.eye(2), np.zeros((2, 1)), np.zeros((1, 2)), 1.0)
    return spec, model


class TestTotalCost:
    def test_zero_gammas(self):
        spec, model = frozen_problem()
        res = reach(spec, model, None)
        cs = CostSpec(gamma1=0, gamma2=0, gamma3=0, mp_weights=[2.0, -1.0])
        assert total_cost(res, cs, [3.0, 4.0]).total == 2.0

    def test_set_based_design_cost(self):
        cs = bm.suspension_problem().cost_spec(bm.REFERENCE_SET_BASED)
        assert cs.design_cost(bm.REFERENCE_SET_BASED) == pytest.approx(1109.44, abs=1e-9)

    def test_frozen_closed_form(self):
        N = 4
        spec, model = frozen_problem(N)
        res = reach(spec, model, None)
        x_ref = np.array([0.5, -0.5])
        cs = CostSpec(x_ref=x_ref, gamma1=1.5, gamma2=0.25, gamma3=0.0, mp_weights=[1.0, 1.0])
        p = np.array([0.1, 0.2])
        # R0 - x_ref = [-1.5, 2.5] x [0.5, 1.5]: center (0.5, 1), half widths (2, 0.5)
        r2 = np.hypot(2.0, 0.5) + np.hypot(0.5, 1.0)
        expected = 0.3 + (1.5 + N * 0.25) * r2
        assert abs(total_cost(res, cs, p).total - expected) <= 1e-12

    def test_breakdown_sums(self, suspension):
        p = bm.REFERENCE_SIMULTANEOUS
        cs = suspension.cost_spec(p)
        res = reach(suspension.spec, suspension.family, p, output_map=cs.Q, store_tubes=False)
        b = total_cost(res, cs, p)
        parts = b.design + b.terminal + b.running_state.sum() + b.running_input.sum()
        assert abs(b.total - parts) <= 1e-12 * b.total

    def test_exclude_initial(self, suspension):
        p = bm.REFERENCE_SIMULTANEOUS
        cs = suspension.cost_spec(p)
        res = reach(suspension.spec, suspension.family, p, output_map=cs.Q, store_tubes=False)
        from dataclasses import replace

        a = total_cost(res, cs, p)
        b = total_cost(res, replace(cs, include_initial=False), p)
        assert b.running_state[0] == 0 and b.running_input[0] == 0
        assert a.total - b.total == pytest.approx(a.running_state[0] + a.running_input[0], rel=1e-12)

    def test_negative_gamma_rejected(self):
        with pytest.raises(ValueError):
            CostSpec(gamma2=-1.0)

    def test_continuity_along_segments(self, suspension, rng):
        from reachdesign.optimizer import evaluate_candidate

        a = bm.REFERENCE_SIMULTANEOUS
        for _ in range(2):
            d = rng.normal(size=6) * np.array([1e3, 1e2, 1e2, 1e1, 1e2, 1e1])
            jumps = []
            for h in (1e-2, 1e-3):
                ts = np.arange(0, 1 + h / 2, h)
                c = np.array([evaluate_candidate(suspension, a + t * d).cost for t in ts])
                jumps.append(np.abs(np.diff(c)).max())
            # Lipschitz: max neighbor difference shrinks with the grid spacing
            assert jumps[1] <= 0.2 * jumps[0]
