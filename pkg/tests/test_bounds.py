import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nonconv.bounds import (
    AssumptionParams,
    BoundConstants,
    berry_esseen_bound,
    berry_esseen_constant,
    chernoff_lambda_star,
    chernoff_tail_bound,
    chernoff_tail_log,
    chernoff_threshold,
    concentration_bound,
    concentration_log,
    dominance_window_constant,
    epsilon_rate_constant,
    epsilon_shape_log,
    epsilon_slope_check,
    epsilon_window_start,
    mdp_normalization,
    mdp_rate,
    mdp_speed,
    mdp_validity,
    mgf_exponent_bound,
    moddev_envelope,
    moddev_window_edge,
    momthm_bound,
    momthm_log,
    variance_envelope,
)
from nonconv.errors import ConfigError, OutOfWindowError


class TestAssumptionParams:
    def test_bounded_gamma_is_inverse_decay_exponent(self):
        p = AssumptionParams("bounded", a=1.0, d=2.0, eta=0.5)
        assert p.gamma == pytest.approx(2.0)

    def test_unbounded_gamma_adds_growth_term(self):
        p = AssumptionParams(
            "unbounded", a=1.0, d=2.0, eta=0.5, M=3.0, zeta=0.25, growth_exp=2.0, tau=1.0
        )
        assert p.gamma == pytest.approx(2.0 + 2.0 * 0.25)

    def test_aliases_normalize(self):
        assert AssumptionParams("A1", a=1, d=1, eta=1).regime == "bounded"
        assert (
            AssumptionParams("a2", a=1, d=1, eta=1, M=1, zeta=0, growth_exp=1, tau=0).regime
            == "unbounded"
        )

    def test_sparse_gamma_flattens_with_arity(self):
        p = AssumptionParams("bounded", a=1.0, d=1.0, eta=0.5)
        assert p.sparse_gamma(1) == pytest.approx(2.0)
        assert p.sparse_gamma(3) == pytest.approx(2.0 / 9.0)

    def test_rejections(self):
        with pytest.raises(ConfigError):
            AssumptionParams("weird", a=1, d=1, eta=1)
        with pytest.raises(ConfigError):
            AssumptionParams("bounded", a=0, d=1, eta=1)
        with pytest.raises(ConfigError):
            AssumptionParams("unbounded", a=1, d=1, eta=1)  # missing moment data
        with pytest.raises(ConfigError):
            AssumptionParams("unbounded", a=1, d=1, eta=1, M=1, zeta=0, growth_exp=0.5, tau=0)


class TestBoundConstants:
    def test_defaults_are_configured(self):
        c = BoundConstants()
        assert c.sources["c1"] == "configured"

    def test_calibration_marks_source(self):
        c = BoundConstants().set_calibrated(B=2.5, c1=0.3)
        assert c.B == 2.5
        assert c.sources["B"] == "calibrated"
        assert c.sources["c2"] == "configured"

    def test_positivity_enforced(self):
        with pytest.raises(ConfigError):
            BoundConstants(c4=0.0)
        with pytest.raises(ConfigError):
            BoundConstants().set_calibrated(c1=-1.0)
        with pytest.raises(ConfigError):
            BoundConstants().set_calibrated(nope=1.0)


class TestConcentration:
    def test_literal_form(self):
        # -x^2 / (2 (c1 + c2 x N^(-1/(2+4g)))^((1+2g)/(1+g))) spelled out
        x, n, c1, c2, g = 1.5, 4096.0, 0.8, 1.2, 1.0
        base = c1 + c2 * x * n ** (-1.0 / 6.0)
        expect = -(x * x) / (2.0 * base**1.5)
        assert concentration_log(x, n, c1, c2, g) == pytest.approx(expect, rel=1e-14)
        assert concentration_bound(x, n, c1, c2, g) == pytest.approx(
            math.exp(expect), rel=1e-13
        )

    @given(
        x=st.floats(0.1, 20.0),
        bump=st.floats(0.01, 5.0),
    )
    def test_monotone_decreasing_in_x(self, x, bump):
        lo = concentration_log(x + bump, 1000.0, 1.0, 1.0, 1.0)
        hi = concentration_log(x, 1000.0, 1.0, 1.0, 1.0)
        assert lo <= hi

    def test_larger_constants_weaken_the_bound(self):
        base = concentration_log(2.0, 1e4, 1.0, 1.0, 1.0)
        assert concentration_log(2.0, 1e4, 1.5, 1.0, 1.0) > base
        assert concentration_log(2.0, 1e4, 1.0, 1.5, 1.0) > base

    def test_domain_errors(self):
        with pytest.raises(ConfigError):
            concentration_log(-0.1, 10, 1, 1, 1)
        with pytest.raises(ConfigError):
            concentration_log(1.0, 10, 1, 1, 0.0)


class TestEpsilonScale:
    def test_shape_log_literal(self):
        assert epsilon_shape_log(0.25, 1e4, 2.0, 1.0) == pytest.approx(
            -2.0 * math.sqrt(0.25 * 1e4)
        )

    def test_window_start_literal(self):
        # N >= c6 eps^(-2 - 1/gamma)
        assert epsilon_window_start(0.5, 64.0, 1.0) == pytest.approx(64.0 * 0.5**-3)

    def test_dominance_window_constant_frozen(self):
        assert dominance_window_constant(2.0, 1.0, 1.0, margin=4.0) == pytest.approx(512.0)
        with pytest.raises(ConfigError):
            dominance_window_constant(1.0, 1.0, 1.0, margin=0.5)

    def test_rate_constant_frozen(self):
        assert epsilon_rate_constant(2, 2.0, 2.0) == pytest.approx(1 / 64)

    def test_slope_check_recovers_exponent(self):
        # deep inside the dominance window the negated log-bound behaves like
        # (eps N)^(1/(1+gamma)); the fit should land within tolerance of 1/2
        sc = epsilon_slope_check(0.5, np.geomspace(1e4, 1e8, 9), 1.0, 1.0, 1.0)
        assert sc.passed
        assert sc.target == pytest.approx(0.5)
        assert sc.slope == pytest.approx(0.5127, abs=5e-3)
        assert sc.c7 > 0
        # displayed shape with the reported c7 stays above the bound on the grid
        for n in np.geomspace(1e4, 1e8, 9):
            shape = epsilon_shape_log(0.5, n, sc.c7, 1.0)
            assert shape >= concentration_log(0.5 * math.sqrt(n), n, 1.0, 1.0, 1.0) - 1e-9

    def test_slope_check_fails_off_window(self):
        # tiny N: the constant denominator term dominates and the local slope
        # sits near the quadratic regime instead
        sc = epsilon_slope_check(0.05, np.array([4.0, 8.0, 16.0]), 1.0, 1.0, 1.0)
        assert not sc.passed


class TestChernoff:
    def test_doubling_t_quarters_the_log(self):
        one = chernoff_tail_log(1.0, 256, 2, 3.5, 3.5, 1.8)
        two = chernoff_tail_log(2.0, 256, 2, 3.5, 3.5, 1.8)
        assert two == pytest.approx(4.0 * one, rel=1e-14)

    def test_literal_form(self):
        t, n, l, d1, b = 2.0, 100.0, 2, 3.0, 1.5
        expect = -(t * t) / (4.0 * b * b * n * l * d1 * d1)
        assert chernoff_tail_log(t, n, l, d1, 7.0, b) == pytest.approx(expect, rel=1e-14)
        assert chernoff_tail_bound(t, n, l, d1, 7.0, b) == pytest.approx(math.exp(expect))

    def test_threshold_and_tuning_point(self):
        assert chernoff_threshold(2.0, 3.5, 1.8) == pytest.approx(2.0 + 1.8 * 3.5)
        assert chernoff_lambda_star(2.0, 100, 2, 3.5) == pytest.approx(
            2.0 / (2 * 2 * 100 * 3.5**2)
        )

    def test_mgf_exponent_literal(self):
        lam, n, l, d1, d2, b = 0.03, 256.0, 2, 3.5, 3.6, 1.8
        expect = b * lam * lam * n * l * d1 + b * lam * d2
        assert mgf_exponent_bound(lam, n, l, d1, d2, b) == pytest.approx(expect)
        # even in lambda through the absolute value
        assert mgf_exponent_bound(-lam, n, l, d1, d2, b) == pytest.approx(expect)

    def test_bad_arguments(self):
        with pytest.raises(ConfigError):
            chernoff_tail_log(1.0, 10, 2, 0.0, 1.0, 1.0)
        with pytest.raises(ConfigError):
            chernoff_lambda_star(1.0, 10, 0, 1.0)


class TestModerateDeviationPieces:
    def test_rate_speed_normalization(self):
        assert mdp_rate(3.0) == pytest.approx(4.5)
        assert mdp_speed(7.0) == pytest.approx(49.0)
        assert mdp_normalization(0.5, 10000.0, 2.0) == pytest.approx(
            1.0 / (0.5 * 100.0 * 2.0)
        )

    def test_moddev_window_edge_frozen(self):
        # 4096^(1/6) = 4
        assert moddev_window_edge(4096, 1.0, 1.0) == pytest.approx(4.0)

    def test_envelope_inside_window(self):
        v = moddev_envelope(2.0, 4096, 1.5, 1.0, c4=1.0)
        assert v == pytest.approx(1.5 * 9.0 * 4096 ** (-1 / 6))

    def test_envelope_refuses_outside_window(self):
        with pytest.raises(OutOfWindowError):
            moddev_envelope(4.0, 4096, 1.5, 1.0, c4=1.0)
        # without the edge parameter no window is enforced
        assert moddev_envelope(4.0, 4096, 1.5, 1.0) > 0

    def test_validity_scan_accepts_slow_growth(self):
        v = mdp_validity(lambda n: n**0.1, 1.0, np.geomspace(1e2, 1e12, 11))
        assert v.passed and v.grows and v.damped_vanishes

    def test_validity_scan_rejects_bad_sequences(self):
        grid = np.geomspace(1e2, 1e12, 11)
        flat = mdp_validity(lambda n: np.ones_like(n), 1.0, grid)
        assert not flat.passed and not flat.grows
        fast = mdp_validity(lambda n: n**0.3, 1.0, grid)
        assert not fast.passed and fast.grows and not fast.damped_vanishes

    def test_validity_grid_requirements(self):
        with pytest.raises(ConfigError):
            mdp_validity(lambda n: n, 1.0, np.array([10.0, 5.0, 20.0]))


class TestBerryEsseen:
    def test_constant_frozen_and_limit(self):
        assert berry_esseen_constant(1.0) == pytest.approx(0.10295244508785542, rel=1e-12)
        assert berry_esseen_constant(1e9) == pytest.approx(1 / 6, rel=1e-6)

    def test_scaling_by_eight_halves_at_gamma_one(self):
        b1 = berry_esseen_bound(1.0, 1.0)
        b8 = berry_esseen_bound(8.0, 1.0)
        assert b8 == pytest.approx(0.5 * b1, rel=1e-12)

    def test_decreasing_in_delta(self):
        assert berry_esseen_bound(100.0, 2.0) < berry_esseen_bound(10.0, 2.0)


class TestMomentComparison:
    def test_first_two_orders_match_exactly(self):
        assert momthm_log(1, 100, 2.0, 1.0) == -math.inf
        assert momthm_bound(2, 100, 2.0, 1.0) == 0.0

    def test_frozen_values(self):
        # p = 3: 2^3 (3!)^2 * (N p) = 8 * 36 * 300
        assert momthm_bound(3, 100, 2.0, 1.0) == pytest.approx(86400.0, rel=1e-12)
        # p = 5: 2^5 (5!)^2 (N p + N^2 p^2 / 4)
        assert momthm_bound(5, 100, 2.0, 1.0) == pytest.approx(2.90304e10, rel=1e-12)

    def test_small_c0_clamps_to_one(self):
        assert momthm_bound(3, 100, 0.25, 1.0) == pytest.approx(
            momthm_bound(3, 100, 1.0, 1.0)
        )

    def test_monotone_in_n(self):
        assert momthm_log(5, 1e6, 2.0, 1.0) > momthm_log(5, 1e3, 2.0, 1.0)


def test_variance_envelope_is_sqrt_n():
    assert variance_envelope(400.0, 1.25) == pytest.approx(25.0)
    with pytest.raises(ConfigError):
        variance_envelope(0.5, 1.0)
