import numpy as np
import pytest

from nonconv.errors import ConfigError
from nonconv.processes import (
    alpha_coefficient,
    beta_approx,
    beta_exact_doubling,
    conditional_law,
    decoupling_check,
    doubling_model,
    doubling_to_markov,
    iid_model,
    markov_model,
    mixing_profile,
    phi_bruteforce,
    phi_coefficient,
    sample_paths,
    sample_state_paths,
    stationary_distribution,
)

PAIR = [[0.9, 0.1], [0.2, 0.8]]
PAIR_VALUES = [[1.0], [-1.0]]
TRIPLE = [[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6]]
TRIPLE_VALUES = [[-1.0], [0.0], [1.0]]


@pytest.fixture(scope="module")
def pair():
    return markov_model(PAIR, PAIR_VALUES)


@pytest.fixture(scope="module")
def triple():
    return markov_model(TRIPLE, TRIPLE_VALUES)


class TestStationary:
    def test_two_state_closed_form(self):
        # [[1-p, p], [q, 1-q]] has stationary law (q, p)/(p+q)
        pi = stationary_distribution(np.asarray(PAIR))
        np.testing.assert_allclose(pi, [2 / 3, 1 / 3], atol=1e-13)

    def test_invariance(self, triple):
        pi = triple.stationary
        np.testing.assert_allclose(pi @ triple.transition, pi, atol=1e-13)

    def test_reducible_chain_is_rejected(self):
        with pytest.raises(ConfigError):
            markov_model([[1.0, 0.0], [0.0, 1.0]], PAIR_VALUES)


class TestPhi:
    def test_pair_value_frozen(self, pair):
        # TV(P(0,.), pi) = 7/30, TV(P(1,.), pi) = 7/15; the max is 7/15
        assert phi_coefficient(pair, 1) == pytest.approx(7 / 15, abs=1e-14)

    def test_geometric_decay_of_two_state_chain(self, pair):
        # second eigenvalue 0.7 drives the rate exactly
        for n in range(1, 7):
            assert phi_coefficient(pair, n) == pytest.approx(
                (7 / 15) * 0.7 ** (n - 1), abs=1e-12
            )

    def test_bruteforce_equals_closed_form_across_windows(self, pair, triple):
        for model in (pair, triple):
            for n in (1, 2, 4):
                phi = phi_coefficient(model, n)
                for pw in (1, 2, 3):
                    for fw in (1, 2, 3):
                        assert phi_bruteforce(model, n, pw, fw) == pytest.approx(
                            phi, abs=1e-12
                        )

    def test_monotone_in_gap(self, triple):
        vals = [phi_coefficient(triple, n) for n in range(1, 8)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))


class TestAlpha:
    def test_dominated_by_half_phi(self, pair, triple):
        for model in (pair, triple):
            for n in (1, 2, 3):
                phi = phi_coefficient(model, n)
                for pw, fw in [(1, 1), (2, 1), (1, 2), (2, 2)]:
                    assert alpha_coefficient(model, n, pw, fw) <= phi / 2 + 1e-12

    def test_union_events_only_increase_the_supremum(self, pair):
        plain = alpha_coefficient(pair, 1, 2, 2, unions=False)
        rich = alpha_coefficient(pair, 1, 2, 2, unions=True)
        assert rich >= plain - 1e-15
        assert rich <= phi_coefficient(pair, 1) / 2 + 1e-12


class TestBetaApprox:
    def test_chain_and_iid_need_no_smoothing(self, pair):
        assert beta_approx(pair, 2.0, 0) == 0.0
        m = iid_model([[0.0], [1.0]], [0.5, 0.5])
        assert beta_approx(m, 2.0, 3) == 0.0

    def test_doubling_rate_and_exactness(self):
        m = doubling_model([1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0], 3)
        assert beta_approx(m, 2.0, 3) == 0.0  # radius reaches the table level
        assert beta_exact_doubling(m, 3) == 0.0
        b1 = beta_approx(m, 2.0, 1)
        assert 0 < b1 <= m.holder_const * 2.0 ** (-1)


class TestDoublingEmbedding:
    def test_chain_reproduces_table_and_uniform_law(self):
        table = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0]
        chain = doubling_to_markov(doubling_model(table, 3))
        assert chain.n_states == 8
        np.testing.assert_allclose(chain.stationary, np.full(8, 1 / 8), atol=1e-12)
        np.testing.assert_array_equal(chain.values[:, 0], table)
        # the shift map: each state passes to exactly two successors, 1/2 each
        np.testing.assert_allclose(np.sort(chain.transition, axis=1)[:, -2:], 0.5)


class TestSampling:
    def test_batching_invariance(self, pair):
        idx = [1, 2, 5, 9]
        full = sample_paths(pair, idx, 7, 6)
        head = sample_paths(pair, idx, 7, 4)
        tail = sample_paths(pair, idx, 7, 2, first_replicate=4)
        np.testing.assert_array_equal(full, np.concatenate([head, tail]))

    def test_states_agree_with_values(self, pair):
        idx = [2, 3, 8]
        states = sample_state_paths(pair, idx, 3, 5)
        vals = sample_paths(pair, idx, 3, 5)
        np.testing.assert_array_equal(pair.values[states], vals)

    def test_gap_jumps_match_dense_sampling(self, pair):
        # sampling {1, 4} must give the same joint law as marginalizing {1,..,4};
        # compare exceedance frequencies of the same event under both stencils
        dense = sample_state_paths(pair, [1, 2, 3, 4], 11, 4000)[:, [0, 3]]
        sparse = sample_state_paths(pair, [1, 4], 13, 4000)
        f_dense = np.mean((dense[:, 0] == 0) & (dense[:, 1] == 0))
        f_sparse = np.mean((sparse[:, 0] == 0) & (sparse[:, 1] == 0))
        # P(both in state 0) = pi_0 * P^3[0, 0]
        p = (2 / 3) * np.linalg.matrix_power(np.asarray(PAIR), 3)[0, 0]
        assert abs(f_dense - p) < 0.025
        assert abs(f_sparse - p) < 0.025

    def test_marginal_frequencies(self, pair):
        states = sample_state_paths(pair, [40], 5, 8000)[:, 0]
        assert abs(np.mean(states == 0) - 2 / 3) < 0.02

    def test_iid_moments(self):
        m = iid_model([[0.0], [1.0]], [0.75, 0.25])
        x = sample_paths(m, [1, 2, 3], 2, 8000)
        assert abs(float(np.mean(x)) - 0.25) < 0.02

    def test_doubling_paths_live_on_the_table(self):
        table = [1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0]
        m = doubling_model(table, 3)
        x = sample_paths(m, [1, 2, 7], 2, 200)
        assert set(np.unique(x)) <= {-1.0, 1.0}


class TestMixingProfile:
    def test_chain_profile_is_exact_at_small_gaps(self, pair):
        prof = mixing_profile(pair)
        for n in (1, 2, 5):
            assert prof.phi(n) >= phi_coefficient(pair, n) - 1e-12

    def test_iid_profile_vanishes(self):
        prof = mixing_profile(iid_model([[0.0], [1.0]], [0.5, 0.5]))
        assert prof.phi(1) == 0.0

    def test_phi_at_zero_is_one(self, pair):
        assert mixing_profile(pair).phi(0) == 1.0


class TestConditionalLaw:
    def test_reduces_to_stationary_without_conditioning(self, pair):
        law = conditional_law(pair, [], [3])
        np.testing.assert_allclose(law, pair.stationary, atol=1e-13)

    def test_one_step_conditioning(self, pair):
        law = conditional_law(pair, [(2, 0)], [3])
        np.testing.assert_allclose(law, PAIR[0], atol=1e-13)

    def test_backward_conditioning_uses_bayes(self, pair):
        # P(X_1 = a | X_2 = b) proportional to pi_a P(a, b)
        law = conditional_law(pair, [(2, 1)], [1])
        joint = pair.stationary * np.asarray(PAIR)[:, 1]
        np.testing.assert_allclose(law, joint / joint.sum(), atol=1e-13)

    def test_zero_probability_conditioning_is_an_error(self):
        chain = markov_model([[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]],
                             TRIPLE_VALUES)
        with pytest.raises(ConfigError):
            conditional_law(chain, [(1, 0), (2, 2)], [4])


class TestDecoupling:
    def test_iid_blocks_decouple_exactly(self):
        # an independent-increments chain: both rows equal -> blocks independent
        chain = markov_model([[0.3, 0.7], [0.3, 0.7]], PAIR_VALUES)
        rep = decoupling_check(
            chain,
            blocks=[(1, 2), (5, 6)],
            grouping=[0, 1],
            h=lambda v: np.prod(v[:, :, 0], axis=1),
        )
        assert rep.discrepancy <= 1e-13
        assert rep.passed

    def test_dependent_blocks_stay_below_phi_bound(self, pair):
        rep = decoupling_check(
            pair,
            blocks=[(1, 2), (4, 5)],
            grouping=[0, 1],
            h=lambda v: np.prod(np.tanh(v[:, :, 0]), axis=1),
        )
        assert rep.discrepancy <= rep.phi_bound + 1e-12
        assert rep.passed
