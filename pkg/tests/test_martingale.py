import math

import numpy as np
import pytest

from nonconv.errors import ConfigError
from nonconv.indexing import linear_family
from nonconv.martingale import (
    azuma_mgf_check,
    build_decomposition,
    check_martingale,
    evaluate_paths,
    sup_gap,
    telescoping_check,
    varphi_sum,
)
from nonconv.observables import center, product_observable
from nonconv.processes import iid_model, markov_model, mixing_profile, doubling_model

PAIR = markov_model([[0.9, 0.1], [0.2, 0.8]], [[1.0], [-1.0]])
RADEMACHER = iid_model([[1.0], [-1.0]], [0.5, 0.5])


@pytest.fixture(scope="module")
def pair_decomp():
    c = center(product_observable(2), PAIR)
    return build_decomposition(PAIR, c, linear_family(2), 16)


class TestVarphiSum:
    def test_chain_matches_truncated_geometric(self):
        prof = mixing_profile(PAIR)
        value, tail = varphi_sum(prof, cutoff=64)
        # phi(0) = 1 plus the geometric series (7/15) 0.7^(n-1)
        direct = 1.0 + math.fsum((7 / 15) * 0.7 ** (n - 1) for n in range(1, 65))
        assert value == pytest.approx(direct, rel=1e-12)
        assert 0 < tail < 1e-9

    def test_iid_has_zero_tail(self):
        prof = mixing_profile(RADEMACHER)
        value, tail = varphi_sum(prof)
        assert value == 1.0  # only the phi(0) = 1 convention term
        assert tail == 0.0

    def test_tail_shrinks_with_cutoff(self):
        prof = mixing_profile(PAIR)
        _, t32 = varphi_sum(prof, cutoff=32)
        _, t96 = varphi_sum(prof, cutoff=96)
        assert t96 < t32


class TestBuild:
    def test_constants_frozen_for_the_pair_chain(self, pair_decomp):
        d = pair_decomp
        assert d.bound_const == pytest.approx(1.0)
        # delta1 = K (phi sum + r + 1) with r = 0, charging the truncation
        # tail on top of the partial sum
        assert d.delta1_plain == pytest.approx(
            1.0 + d.phi_sum_value + d.phi_sum_tail, rel=1e-12
        )
        assert d.delta2_plain == pytest.approx(d.delta1_plain)  # no approximation term
        assert d.beta_term == 0.0

    def test_b_factor_scales_primed_deltas(self):
        c = center(product_observable(2), PAIR)
        d = build_decomposition(PAIR, c, linear_family(2), 16, b_factor=2.5)
        assert d.delta1_prime == pytest.approx(2.5 * d.delta1_plain)
        assert d.delta2_prime == pytest.approx(2.5 * d.delta2_plain)

    def test_horizon_certificate(self, pair_decomp):
        # doubling the horizon once more would be pointless: the recorded
        # truncation tail is already below the target
        assert pair_decomp.tail_error <= 1e-8

    def test_nonlinear_family_rejected(self):
        from nonconv.indexing import polynomial_family

        c = center(product_observable(2), PAIR)
        with pytest.raises(ConfigError):
            build_decomposition(PAIR, c, polynomial_family([[1, 0], [1, 0, 1]]), 16)

    def test_doubling_needs_smoothing_radius(self):
        table = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0]
        m = doubling_model(table, 3)
        c = center(product_observable(2), m)
        with pytest.raises(ConfigError):
            build_decomposition(m, c, linear_family(2), 8, smoothing_radius=1)
        d = build_decomposition(m, c, linear_family(2), 8, smoothing_radius=3)
        assert d.beta_term == 0.0


class TestPathIdentities:
    def test_telescoping_identity(self, pair_decomp):
        ev = evaluate_paths(pair_decomp, 3, 128)
        rep = telescoping_check(ev)
        assert rep.passed
        assert rep.max_error <= 1e-9

    def test_gap_equals_boundary_difference(self, pair_decomp):
        ev = evaluate_paths(pair_decomp, 3, 64)
        # S - M = sum_i (R_{i,0} - R_{i,iN}) along every replicate
        martingale_sum = ev.increments.sum(axis=1)
        gap_direct = ev.sums - martingale_sum
        np.testing.assert_allclose(gap_direct, ev.gaps, atol=1e-9)

    def test_r_start_is_deterministic_and_known(self, pair_decomp):
        # the time-zero prediction at depth i sums unconditional term means
        # over the moving window (0, horizon], not over the first N terms:
        # level 1 is exactly centered, level 2 collects the gap-n means
        # (8/9) 0.7^n for every n with 2n <= horizon
        assert pair_decomp.horizon == 128
        r0 = [pair_decomp.r_start(i) for i in (1, 2)]
        assert abs(r0[0]) < 1e-12
        half = pair_decomp.horizon // 2
        oracle = math.fsum((8 / 9) * 0.7**n for n in range(1, half + 1))
        assert math.fsum(r0) == pytest.approx(oracle, abs=1e-12)

    def test_batching_invariance(self, pair_decomp):
        full = evaluate_paths(pair_decomp, 3, 8)
        part = evaluate_paths(pair_decomp, 3, 5, first_replicate=3)
        np.testing.assert_allclose(full.sums[3:], part.sums, atol=0)

    def test_sums_match_plain_batch_on_dense_union(self):
        # streams are consumed positionally, so pathwise agreement with the
        # sampling engine holds exactly when the family's index union is the
        # dense range; arity 1 gives that regime
        from nonconv.observables import batch_sums

        c = center(product_observable(1), PAIR)
        d = build_decomposition(PAIR, c, linear_family(1), 16)
        ev = evaluate_paths(d, 3, 16)
        direct = batch_sums(PAIR, c, linear_family(1), 16, 3, 16)
        np.testing.assert_allclose(ev.sums, direct, atol=1e-12)


class TestIncrementLaw:
    def test_exhaustive_conditional_expectations(self, pair_decomp):
        chk = check_martingale(pair_decomp, mode="exhaustive", tol=1e-8)
        assert chk.passed
        assert chk.max_abs <= chk.tol + chk.allowance

    def test_sampled_mode_agrees(self, pair_decomp):
        chk = check_martingale(pair_decomp, mode="sampled", tol=1e-8, n_replicates=64)
        assert chk.passed

    def test_sup_gap_needs_calibrated_b(self, pair_decomp):
        # plain constants undershoot the observed boundary gap for this
        # chain; doubling the slack factor clears it
        rep = sup_gap(pair_decomp, master_seed=3, n_replicates=128)
        assert rep.gap_max == pytest.approx(4.378820984154804, rel=1e-9)
        assert rep.gap_max > rep.delta2_prime
        assert not rep.passed
        c = center(product_observable(2), PAIR)
        wide = build_decomposition(PAIR, c, linear_family(2), 16, b_factor=2.0)
        assert sup_gap(wide, master_seed=3, n_replicates=128).passed

    def test_iid_increments_are_exactly_centered(self):
        c = center(product_observable(2), RADEMACHER)
        d = build_decomposition(RADEMACHER, c, linear_family(2), 8)
        chk = check_martingale(d, mode="exhaustive", tol=1e-10)
        assert chk.passed


class TestAzuma:
    def test_mgf_domination_at_small_lambda(self, pair_decomp):
        rep = azuma_mgf_check(pair_decomp, lambdas=(0.02,), n_replicates_m=1500)
        for row in rep.rows:
            assert row.verdict in ("pass", "inconclusive")

    def test_increment_sups_bound_observed_steps(self, pair_decomp):
        ev = evaluate_paths(pair_decomp, 5, 256)
        observed = float(np.max(ev.step_sups))
        assert observed <= pair_decomp.w_sup_bound(1.0) + 1e-9
        # the configured-constant bound scales linearly in the slack factor
        assert pair_decomp.w_sup_bound(2.0) == pytest.approx(
            2.0 * pair_decomp.w_sup_bound(1.0)
        )
