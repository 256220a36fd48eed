import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from coopnet import closedform as cf
from coopnet.errors import HypothesisViolated, MaxIterationsExceeded, TargetUnreachable, UnsupportedCorrelation
from coopnet.netmodel import derive_scalars
from conftest import reference_params

NUTTALL_ARGS = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0]


def nuttall_oracle(s):
    """Mean distance to the origin of a unit Gaussian centred at distance s, in mpmath."""
    mpmath.mp.dps = 30
    f = lambda u: u**2 * mpmath.exp(-(u**2 + s**2) / 2) * mpmath.besseli(0, s * u)
    return float(mpmath.quad(f, [0, max(s - 8, 0), s, s + 8, mpmath.inf]))


def cone_distance_oracle(p):
    c = p.lambda_in * p.phi0 / 2.0
    D = p.dest_distance
    dens = lambda r, a: math.hypot(r * math.cos(a) - D, r * math.sin(a)) * 2 * c * r * math.exp(-c * r * r) / p.phi0
    return dblquad(dens, -p.phi0 / 2, p.phi0 / 2, 0, math.sqrt(60 / c), epsabs=1e-10, epsrel=1e-10)[0]


class TestSpecialFunctions:
    def test_nuttall_at_zero(self):
        assert abs(cf.nuttall_q20(0.0) - math.sqrt(math.pi / 2)) < 1e-12

    @pytest.mark.parametrize("s", NUTTALL_ARGS)
    def test_nuttall_matches_integral(self, s):
        assert abs(cf.nuttall_q20(s) - nuttall_oracle(s)) < 1e-8

    def test_nuttall_large_argument_tends_to_distance(self):
        assert cf.nuttall_q20(50.0) / 50.0 == pytest.approx(1.0, rel=1e-3)
        assert math.isfinite(cf.nuttall_q20(1e4))

    def test_nuttall_rejects_negative(self):
        with pytest.raises(ValueError):
            cf.nuttall_q20(-1.0)

    @pytest.mark.parametrize("s, erf_value", [(0.5, math.erf(math.sqrt(2))), (1 / math.sqrt(2), math.erf(1))])
    def test_gamma_factor_values(self, s, erf_value):
        expected = math.sqrt(math.pi / 2) * (1 + (4 / math.pi - 2) * erf_value)
        assert cf.gamma_factor(s, 2 * math.pi) == pytest.approx(expected, rel=1e-14)
        # rounded reference values 0.38391 and 0.48572
        assert cf.gamma_factor(s, 2 * math.pi) == pytest.approx({0.5: 0.38391}.get(s, 0.48572), abs=2e-5)

    @pytest.mark.parametrize("phi0", [0.1, 1.0, 2 * math.pi])
    def test_gamma_factor_large_s(self, phi0):
        assert cf.gamma_factor(1e9, phi0) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-8)


class TestRelayDistance:
    def test_zero_distance(self):
        p = reference_params(dest_distance=0.0, sigma_in=2.0)
        assert cf.expected_relay_dest_distance(p) == pytest.approx(2.0 * math.sqrt(math.pi / 2))

    @pytest.mark.parametrize("sigma", [0.05, 0.5, 1.0, 3.0, 10.0, 40.0])
    def test_branches_agree(self, sigma):
        p = reference_params(sigma_in=sigma)
        closed = cf.expected_relay_dest_distance(p)
        numeric = cf.expected_relay_dest_distance(p, numeric=True)
        assert abs(closed - numeric) < 1e-6 * p.dest_distance

    @pytest.mark.parametrize("phi0", [0.05, 0.7, 2.0, 4.5])
    @pytest.mark.parametrize("sigma", [0.3, 2.0, 8.0])
    def test_cone_matches_dblquad(self, phi0, sigma):
        p = reference_params(phi0=phi0, sigma_in=sigma)
        assert abs(cf.expected_relay_dest_distance(p) - cone_distance_oracle(p)) < 1e-6 * p.dest_distance

    def test_upper_bound_on_grid(self):
        for sigma in np.geomspace(0.05, 50.0, 10):
            for phi0 in np.linspace(0.1, 2 * math.pi, 10):
                p = reference_params(phi0=phi0, sigma_in=sigma)
                assert cf.expected_relay_dest_distance(p) <= cf.relay_dest_distance_bound(p) * (1 + 1e-12)

    @pytest.mark.parametrize("phi0", [0.5, 2 * math.pi])
    def test_monte_carlo_mean(self, phi0, rng):
        from coopnet.geometry import sample_relay_offset

        p = reference_params(phi0=phi0, sigma_in=4.0)
        r = sample_relay_offset(p, 0.0, rng, size=1_000_000)
        dist = np.hypot(r[:, 0] - 10.0, r[:, 1])
        err = dist.std() / math.sqrt(len(dist))
        assert abs(dist.mean() - cf.expected_relay_dest_distance(p)) < 3 * err

    def test_relay_quadrature_weights_sum_to_one(self):
        _, w = cf.relay_quadrature(0.2, 1.3, 10.0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)


class TestOutage:
    def test_dt_reference(self, params):
        assert cf.op_dt(params) == pytest.approx(0.031262, abs=1e-6)

    def test_dt_vanishes_with_density(self, params):
        assert cf.op_dt(params.replace(lambda_s=1e-12)) == pytest.approx(0.0, abs=1e-9)

    @pytest.mark.parametrize("lam", [1e-5, 1e-4, 3e-4])
    def test_first_order_form(self, params, lam):
        p = params.replace(lambda_s=lam)
        nu = derive_scalars(p).nu
        assert nu <= 0.1
        assert abs(nu - cf.op_dt(p)) <= 0.05 * cf.op_dt(p)

    @given(sigma=st.floats(0.05, 30.0), phi0=st.floats(0.05, 2 * math.pi), alpha=st.floats(2.2, 6.0))
    @settings(max_examples=40, deadline=None)
    def test_bound_at_zero_activation_is_dt(self, sigma, phi0, alpha):
        p = reference_params(sigma_in=sigma, phi0=phi0, alpha=alpha)
        assert cf.op_mix_upper_bound(p, 0.0) == cf.op_dt(p)

    def test_bound_needs_zero_rho(self, params):
        with pytest.raises(UnsupportedCorrelation):
            cf.op_mix_upper_bound(params.replace(rho=0.2), 1.0)

    def test_bound_clamping_is_flagged(self, params):
        p = params.replace(lambda_s=0.05, sigma_in=30.0)
        with pytest.warns(cf.RegimeWarning):
            value = cf.op_mix_upper_bound(p, 1.0)
        assert value == 1.0
        b = cf.mix_bound(p, 1.0)
        assert b.clamped and b.raw > 1.0

    @staticmethod
    def _bound_curve(p):
        return np.array([cf.op_mix_upper_bound(p, x) for x in np.linspace(0.0, 1.0, 21)])

    @pytest.mark.parametrize("factor", [0.05, 0.3, 0.6, 0.95])
    def test_concave_below_sigma_c(self, params, factor):
        values = self._bound_curve(params.replace(sigma_in=factor * cf.sigma_c(params).root))
        assert np.all(np.diff(values, 2) <= 1e-12)
        assert values.min() == min(values[0], values[-1])

    def test_concavity_edge_band(self, params):
        # sigma_c solves a first-order equation; the exact bound turns convex
        # slightly before it, with curvature orders of magnitude below the values
        values = self._bound_curve(params.replace(sigma_in=cf.sigma_c(params).root))
        assert np.max(np.diff(values, 2)) < 1e-4 * values.min()
        assert values.min() == min(values[0], values[-1])


class TestThresholds:
    def test_reference_roots(self, params):
        t = cf.sigma_t(params)
        c = cf.sigma_c(params)
        assert t.root == pytest.approx(2.7184, abs=1e-3)
        assert t.closed_bound == pytest.approx(2.446, abs=1e-3)
        assert c.closed_bound == pytest.approx(4.430, abs=1e-3)
        phi_c = 0.125 * cf.gamma_factor(1 / math.sqrt(2), 2 * math.pi)
        assert phi_c == pytest.approx(0.060715, abs=5e-6)
        assert c.closed_bound == pytest.approx(10 * (math.sqrt(0.25 + phi_c**2) - phi_c), rel=1e-14)

    @pytest.mark.parametrize("alpha", [2.5, 3.0, 4.0, 6.0])
    @pytest.mark.parametrize("phi0", [0.3, 2.0, 2 * math.pi])
    def test_closed_bounds_are_conservative(self, alpha, phi0):
        p = reference_params(alpha=alpha, phi0=phi0)
        for fn in (cf.sigma_c, cf.sigma_t):
            r = fn(p)
            assert r.closed_bound <= r.root * (1 + 1e-9)

    @pytest.mark.parametrize("phi0", [1.0, 2 * math.pi])
    def test_root_satisfies_equation(self, phi0):
        p = reference_params(phi0=phi0)
        root = cf.sigma_t(p).root
        assert cf._gain_ratio_formula(p, root) == pytest.approx(1.0, abs=1e-8)

    def test_bound_ordering_flips_at_root(self, params):
        root = cf.sigma_t(params).root
        below = params.replace(sigma_in=0.9 * root)
        above = params.replace(sigma_in=1.1 * root)
        assert cf.op_mix_upper_bound(below, 1.0) < cf.op_mix_upper_bound(below, 0.0)
        assert cf.op_mix_upper_bound(above, 1.0) > cf.op_mix_upper_bound(above, 0.0)

    def test_hypothesis_violated(self, params):
        delta = derive_scalars(params).delta
        p = params.replace(lambda_s=0.39 / (delta * 100.0))
        with pytest.raises(HypothesisViolated):
            cf.sigma_c(p)
        with pytest.raises(HypothesisViolated):
            cf.activation_decision(p)


class TestActivation:
    def test_tiny_sigma_activates(self, params):
        assert cf.activation_decision(params.replace(sigma_in=1e-9)).decided_p_r == 1

    def test_huge_sigma_deactivates(self, params):
        a = cf.activation_decision(params.replace(sigma_in=100.0))
        assert a.decided_p_r == 0 and a.gain_ratio == 1.0

    def test_single_flip(self, params):
        decisions = [cf.activation_decision(params.replace(sigma_in=s)).decided_p_r
                     for s in np.linspace(0.1, 10.0, 100)]
        assert decisions[0] == 1 and decisions[-1] == 0
        assert np.count_nonzero(np.diff(decisions)) == 1

    def test_fields_consistent(self, params):
        a = cf.activation_decision(params)
        assert a.sigma_t_closed <= a.sigma_t
        assert a.phi0_used == params.phi0
        assert a.gain_ratio == pytest.approx(cf.op_gain_ratio(params))

    @pytest.mark.parametrize("alpha", [2.5, 3.0, 4.0, 6.0])
    def test_gain_limit(self, alpha):
        p = reference_params(alpha=alpha)
        limit = 1 - 4 / alpha**2
        errs = [abs(cf.op_gain_ratio(p.replace(sigma_in=f * 10)) - limit) for f in (1e-1, 1e-2, 1e-3)]
        assert errs == sorted(errs, reverse=True)
        assert errs[-1] < 1e-2

    def test_gain_continuous_at_root(self, params):
        root = cf.sigma_t(params).root
        inside = cf.op_gain_ratio(params.replace(sigma_in=root * (1 - 1e-9)))
        outside = cf.op_gain_ratio(params.replace(sigma_in=root * (1 + 1e-6)))
        assert inside <= 1.0 and outside == 1.0
        assert inside == pytest.approx(1.0, abs=1e-6)


class TestOptimizers:
    def test_phi0_local_optimality(self):
        p = reference_params(sigma_in=0.5)
        opt = cf.optimize_phi0(p)
        step = 2 * math.pi / 64
        ratio = lambda phi: cf._ratio_for_phi0(p, phi)
        assert opt.ratio_at_star <= ratio(2 * math.pi)
        for phi in (opt.phi0_star - step, opt.phi0_star + step):
            if 0 < phi <= 2 * math.pi:
                assert opt.ratio_at_star <= ratio(phi) + 1e-12

    def test_phi0_dense_relays_narrow_cone(self):
        assert cf.optimize_phi0(reference_params(sigma_in=0.2)).phi0_star < 2 * math.pi

    def test_phi0_infeasible_falls_back(self):
        opt = cf.optimize_phi0(reference_params(sigma_in=50.0))
        assert opt.phi0_star == 2 * math.pi and opt.ratio_at_star == 1.0

    @pytest.mark.parametrize("target", [0.01, 0.03, 0.1])
    def test_dt_rate_inversion(self, params, target):
        assert cf.max_rate_for_op(params, target, "dt") == pytest.approx(cf.dt_rate_for_op(params, target), abs=1e-4)

    def test_mix_rate_equals_dt_above_threshold(self, params):
        p = params.replace(sigma_in=20.0)
        assert cf.max_rate_for_op(p, 0.03, "mix") == pytest.approx(cf.max_rate_for_op(p, 0.03, "dt"), abs=2e-4)

    def test_mix_rate_gains_below_threshold(self, params):
        assert cf.max_rate_for_op(params, 0.03, "mix") > cf.max_rate_for_op(params, 0.03, "dt")

    def test_rate_cap(self, params):
        with pytest.raises(MaxIterationsExceeded):
            cf.max_rate_for_op(params.replace(lambda_s=1e-12), 0.999999, "dt")

    def test_unreachable_target(self, params):
        with pytest.raises(TargetUnreachable):
            cf.max_rate_for_op(params.replace(lambda_s=1e3, sigma_in=1e-3), 0.03, "dt")

    @pytest.mark.parametrize("target", [0.0, 1.0])
    def test_target_range(self, params, target):
        with pytest.raises(ValueError):
            cf.max_rate_for_op(params, target)
