import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import central_difference, simulate_update

from zerotemp import cavity_general as cg
from zerotemp import cavity_q2 as q2
from zerotemp.cavity_general import ModelParams


def brute_pbar(q, l2, k, n, j_max=60):
    """Enumerate q-1 independent Poisson counts directly."""
    pmf = np.array([math.exp(-l2) * l2 ** j / math.factorial(j) for j in range(j_max)])
    total = 0.0
    for combo in itertools.product(range(j_max), repeat=q - 1):
        combo = np.array(combo)
        if np.count_nonzero(combo == k) == n and np.all(combo <= k):
            total += float(np.prod(pmf[combo]))
    return total


class TestParams:
    @pytest.mark.parametrize("kw", [dict(q=1, c=5.0), dict(q=3, c=-1.0), dict(q=3, c=5.0, delta=6.0),
                                    dict(q=3, c=5.0, rho=1.5), dict(q=3, c=5.0, beta=0.5),
                                    dict(q=3, c=5.0, beta_mode="other")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ModelParams(**kw)

    def test_mean_degree(self):
        p = ModelParams(q=4, c=12.0, delta=6.0)
        assert p.alpha + (p.q - 1) * p.gamma == pytest.approx(p.c)
        assert p.alpha - p.gamma == pytest.approx(p.delta)

    def test_paramagnetic_lambdas_equal(self):
        p = ModelParams(q=5, c=10.0, delta=4.0)
        l1, l2 = cg.lambdas_general(p, 1 / 5)
        assert l1 == pytest.approx(l2) == pytest.approx(2.0)

    def test_lambdas_sum_to_c(self):
        p = ModelParams(q=5, c=10.0, delta=4.0, rho=0.3)
        for eta in (0.2, 0.5, 1.0):
            l1, l2 = cg.lambdas_general(p, eta)
            assert l1 + (p.q - 1) * l2 == pytest.approx(p.c)


class TestTieWeights:
    def test_unit_beta(self):
        np.testing.assert_allclose(cg.tie_weights(4), [1, 1 / 2, 1 / 3, 1 / 4])
        np.testing.assert_allclose(cg.tie_weights(4, 1.0, "literal"), cg.tie_weights(4))

    def test_modes_differ(self):
        np.testing.assert_allclose(cg.tie_weights(3, 2.0), [1, 2 / 3, 1 / 2])
        np.testing.assert_allclose(cg.tie_weights(3, 2.0, "literal"), [1, 1, 2 / 3])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            cg.tie_weights(3, 1.0, "x")


class TestG:
    def test_paramagnetic_symmetry(self):
        for q in (2, 3, 7, 10):
            for delta in np.linspace(0, 15, 7):
                p = ModelParams(q=q, c=15.0, delta=delta)
                assert abs(cg.g(p, 1 / q) - 1 / q) < 1e-10

    @pytest.mark.parametrize("c,delta,eta", [(10.0, 6.0, 0.9), (3.0, 2.5, 0.6), (50.0, 12.0, 0.75)])
    def test_q2_reduces_to_tiebreak_map(self, c, delta, eta):
        m_new = q2.rhs_tiebreak_m(q2.Q2Params(c, delta), 2 * eta - 1)
        assert cg.g(ModelParams(2, c, delta), eta) == pytest.approx(0.5 * (1 + m_new), abs=1e-12)

    def test_full_signal_q2(self):
        c = 6.0
        assert cg.g(ModelParams(2, c, c), 1.0) == pytest.approx(1 - 0.5 * math.exp(-c), rel=1e-12)

    def test_vectorized_matches_scalar(self):
        p = ModelParams(q=6, c=9.0, delta=5.0, rho=0.1, beta=1.5)
        etas = np.linspace(1 / 6, 1, 11)
        np.testing.assert_allclose(cg.g(p, etas), [cg.g(p, e) for e in etas], rtol=1e-14)

    @pytest.mark.parametrize("args", [
        (10, 10.0, 5.0, 0.5, 0.0, 1.0, "normalized"),
        (4, 5.0, 3.0, 0.7, 0.1, 2.0, "normalized"),
        (3, 8.0, 4.0, 0.6, 0.0, 3.0, "literal"),
    ])
    def test_monte_carlo(self, args):
        q, c, delta, eta, rho, beta, mode = args
        n = 400_000
        est = simulate_update(q, c, delta, eta, rho, beta, mode, samples=n, seed=1)
        exact = cg.g(ModelParams(q, c, delta, rho, beta, mode), eta)
        assert abs(est - exact) < 4 * math.sqrt(exact * (1 - exact) / n)

    def test_range_and_continuity(self):
        p = ModelParams(q=10, c=20.0, delta=6.5)
        etas = np.linspace(0.1, 1, 2001)
        vals = cg.g(p, etas)
        assert np.all((vals >= 0) & (vals <= 1))
        slopes = cg.g_prime(p, etas)
        assert np.max(np.abs(np.diff(vals))) <= 10 * np.max(np.abs(slopes)) * (etas[1] - etas[0])

    def test_large_degree_finite(self):
        p = ModelParams(q=10, c=500.0, delta=60.0)
        assert np.isfinite(cg.g(p, 0.5))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(2, 8), st.floats(1.0, 30.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0),
           st.floats(0.0, 0.5), st.floats(1.0, 3.0))
    def test_derivative_property(self, q, c, frac, eta_frac, rho, beta):
        p = ModelParams(q, c, frac * c, rho, beta)
        eta = 1 / q + eta_frac * (1 - 1 / q) * 0.98 + 1e-3
        fd = central_difference(lambda x: cg.g(p, x), eta)
        assert cg.g_prime(p, eta) == pytest.approx(fd, abs=1e-6)


class TestPbar:
    @pytest.mark.parametrize("k,n", [(0, 2), (1, 0), (2, 1), (3, 2), (4, 0)])
    def test_enumeration(self, k, n):
        p = ModelParams(q=3, c=6.0, delta=3.0)
        _, l2 = cg.lambdas_general(p, 0.6)
        assert cg.pbar(p, 0.6, k, n) == pytest.approx(brute_pbar(3, l2, k, n), rel=1e-10)

    def test_max_distribution_sums_to_one(self):
        # n >= 1 partitions the events by the value and multiplicity of the maximum
        p = ModelParams(q=4, c=8.0, delta=2.0)
        total = sum(cg.pbar(p, 0.5, k, n) for k in range(60) for n in range(1, 4))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_invalid(self):
        with pytest.raises(ValueError):
            cg.pbar(ModelParams(3, 5.0), 0.5, -1, 0)


class TestFixedPoints:
    def test_no_signal(self):
        roots = cg.solve_fixed_points(ModelParams(q=5, c=10.0, delta=0.0))
        assert [r.value for r in roots] == pytest.approx([0.2])
        assert roots[0].stable

    def test_bistable_window(self):
        roots = cg.solve_fixed_points(ModelParams(q=10, c=10.0, delta=4.5))
        assert len(roots) == 3
        assert [r.stable for r in roots] == [True, False, True]
        for r in roots:
            assert r.residual < 1e-10

    def test_rho_moves_paramagnet(self):
        roots = cg.solve_fixed_points(ModelParams(q=10, c=10.0, delta=2.0, rho=0.05))
        assert roots[0].value > 0.1 + 1e-3

    def test_beta_moves_paramagnet(self):
        p = ModelParams(q=10, c=10.0, delta=2.0, beta=2.0)
        assert cg.g(p, 0.1) > 0.1
        assert cg.solve_fixed_points(p)[0].value > 0.1


class TestThresholds:
    @pytest.mark.parametrize("q,c", [(3, 10.0), (10, 10.0), (10, 20.0), (4, 30.0)])
    def test_delta_c2_linear_oracle(self, q, c):
        # lambdas at 1/q do not depend on delta and their slopes are linear in delta
        slope_per_delta = cg.paramagnetic_slope(ModelParams(q, c, 1.0))
        assert cg.delta_c2(ModelParams(q, c)) == pytest.approx(1 / slope_per_delta, rel=1e-9)

    @pytest.mark.parametrize("c", [3.0, 10.0, 40.0])
    def test_delta_c2_q2_closed_form(self, c):
        assert cg.delta_c2(ModelParams(2, c)) == pytest.approx(q2.threshold_tiebreak(c), abs=1e-9)

    def test_delta_c2_needs_unsupervised(self):
        with pytest.raises(ValueError):
            cg.delta_c2(ModelParams(3, 10.0, rho=0.1))

    def test_no_threshold_when_detection_impossible(self):
        with pytest.raises(cg.NoThreshold):
            cg.delta_c2(ModelParams(10, 1.0))

    def test_tangency(self):
        p = ModelParams(10, 10.0)
        t = cg.delta_c1(p)
        at = p.replace(delta=t.delta)
        assert cg.g(at, t.eta2) == pytest.approx(t.eta2, abs=1e-9)
        assert cg.g_prime(at, t.eta2) == pytest.approx(1.0, abs=1e-6)
        assert len(cg.solve_fixed_points(p.replace(delta=t.delta - 1e-3))) == 1
        assert len(cg.solve_fixed_points(p.replace(delta=t.delta + 1e-3))) == 3
        assert not t.continuous

    def test_continuous_at_q2(self):
        t = cg.delta_c1(ModelParams(2, 10.0))
        assert t.continuous
        assert t.delta == pytest.approx(cg.delta_c2(ModelParams(2, 10.0)), abs=1e-5)


class TestFlow:
    def test_constant_at_fixed_point(self):
        traj = cg.flow(ModelParams(10, 10.0, 4.5), 0.1)
        assert traj.converged
        np.testing.assert_allclose(traj.eta, 0.1)

    def test_monotone_past_unstable_root(self):
        p = ModelParams(10, 20.0, 6.5)
        mid = cg.solve_fixed_points(p)[1].value
        up = cg.flow(p, mid + 0.01)
        down = cg.flow(p, mid - 0.01)
        assert np.all(np.diff(up.eta) >= 0)
        assert np.all(np.diff(down.eta) <= 0)

    def test_invalid_step(self):
        with pytest.raises(ValueError):
            cg.flow(ModelParams(3, 5.0), 0.5, dt=0.0)

    def test_semisupervised_monotone_in_rho(self):
        p = ModelParams(10, 20.0, 5.5)
        vals = [cg.selected_accuracy(p.replace(rho=r)) for r in np.linspace(0, 0.06, 13)]
        assert np.all(np.diff(vals) >= -1e-9)

    def test_random_start_decays_above_instability(self):
        p = ModelParams(10, 10.0, 6.0)
        assert cg.selected_accuracy(p) == pytest.approx(cg.solve_fixed_points(p)[-1].value, abs=1e-8)
