import math

import numpy as np
import pytest
from scipy.stats import binom

from nonconv.errors import ConfigError
from nonconv.indexing import linear_family
from nonconv.montecarlo import (
    CumulantRow,
    CumulantScanReport,
    ExperimentConfig,
    SumSample,
    VarianceFit,
    bootstrap_se,
    calibrate_constants,
    cumulant_scan,
    kolmogorov_distance,
    mdp_diagnostic,
    replicate_sums,
    sums_over_grid,
    tail_estimate,
    variance_scan,
)
from nonconv.observables import center, product_observable
from nonconv.processes import doubling_model, iid_model, markov_model

RADEMACHER = iid_model([[1.0], [-1.0]], [0.5, 0.5])
PAIR = markov_model([[0.9, 0.1], [0.2, 0.8]], [[1.0], [-1.0]])


def _config(model, arity, n_grid, n_replicates, seed=0, workers=1):
    return ExperimentConfig(
        model=model,
        centered=center(product_observable(arity), model),
        family=linear_family(arity),
        n_grid=tuple(n_grid),
        n_replicates=n_replicates,
        master_seed=seed,
        workers=workers,
    )


def _standardized(rng_seed, size):
    z = np.random.default_rng(rng_seed).normal(size=size)
    z = z - z.mean()
    return z / z.std(ddof=1)


def _synthetic_sample(n, sums):
    return SumSample(
        n_terms=n,
        n_replicates=sums.size,
        master_seed=0,
        sums=sums,
        mean_correction=0.0,
        centering="exact",
        method="path-evaluation",
    )


class TestConfig:
    def test_grid_must_ascend(self):
        with pytest.raises(ConfigError):
            _config(RADEMACHER, 1, (64, 16), 200)

    def test_replicate_floor(self):
        with pytest.raises(ConfigError):
            _config(RADEMACHER, 1, (16,), 50)

    def test_workers_positive(self):
        with pytest.raises(ConfigError):
            _config(RADEMACHER, 1, (16,), 200, workers=0)


class TestReplicateSums:
    def test_two_atom_single_argument_takes_count_path(self):
        s = replicate_sums(_config(RADEMACHER, 1, (100,), 2048), 100)
        assert s.method == "binomial-count"
        assert s.centering == "exact"
        assert s.mean_correction == 0.0
        # every sum lives on the lattice N - 2k with k in 0..N
        assert np.all((s.sums + 100) % 2 == 0)
        assert np.all(np.abs(s.sums) <= 100)

    def test_worker_count_cannot_change_draws(self):
        # fixed 512-replicate blocks make the stream assignment identical
        a = replicate_sums(_config(RADEMACHER, 1, (100,), 2048, workers=1), 100)
        b = replicate_sums(_config(RADEMACHER, 1, (100,), 2048, workers=4), 100)
        assert np.array_equal(a.sums, b.sums)
        c = replicate_sums(_config(PAIR, 2, (32,), 1100, workers=1), 32)
        d = replicate_sums(_config(PAIR, 2, (32,), 1100, workers=3), 32)
        assert d.method == "path-evaluation"
        assert np.array_equal(c.sums, d.sums)

    def test_count_path_agrees_with_path_evaluation_in_law(self):
        # a three-atom law collapsing to two values forces the generic path
        # while leaving the distribution of the sums unchanged
        mimic = iid_model([[1.0], [-1.0], [-1.0]], [0.5, 0.25, 0.25])
        fast = replicate_sums(_config(RADEMACHER, 1, (100,), 20_000, seed=5), 100)
        slow = replicate_sums(_config(mimic, 1, (100,), 20_000, seed=5), 100)
        assert slow.method == "path-evaluation"
        se = math.sqrt(100.0 / 20_000)
        assert abs(fast.sums.mean() - slow.sums.mean()) < 5 * se * math.sqrt(2)
        assert fast.sums.std() == pytest.approx(slow.sums.std(), rel=0.05)

    def test_doubling_model_still_enumerates_exactly(self):
        m = doubling_model([1.0, -1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0], 3)
        s = replicate_sums(_config(m, 2, (32,), 256), 32)
        assert s.centering == "exact"

    def test_grand_mean_fallback_when_enumeration_fails(self, monkeypatch):
        import nonconv.montecarlo as mc

        def refuse(*a, **k):
            raise ConfigError("enumeration budget")

        monkeypatch.setattr(mc, "exact_mean_SN", refuse)
        s = replicate_sums(_config(PAIR, 2, (32,), 256), 32)
        assert s.centering == "grand-mean"
        assert s.mean_correction == pytest.approx(float(np.mean(s.sums)), abs=1e-12)
        assert abs(float(np.mean(s.centered))) < 1e-10

    def test_grid_helper_covers_all_n(self):
        cfg = _config(RADEMACHER, 1, (16, 64), 256)
        by_n = sums_over_grid(cfg)
        assert sorted(by_n) == [16, 64]
        assert by_n[64].n_terms == 64


class TestTailEstimate:
    def test_exact_count_and_interval(self):
        samples = np.concatenate([np.zeros(95), np.ones(5)])
        te = tail_estimate(samples, 0.5)
        assert te.count == 5 and te.p_hat == 0.05
        assert te.lower == pytest.approx(0.016431879182052155, rel=1e-10)
        assert te.upper == pytest.approx(0.11283491110546275, rel=1e-10)

    def test_threshold_is_inclusive(self):
        samples = np.concatenate([np.zeros(99), np.ones(1)])
        assert tail_estimate(samples, 1.0).count == 1

    def test_zero_count_rule_of_three(self):
        te = tail_estimate(np.zeros(1000), 1.0)
        assert te.lower == 0.0
        assert te.upper == pytest.approx(0.00368208389686564, rel=1e-12)
        assert te.upper == pytest.approx(3.69 / 1000, rel=0.01)

    def test_full_count_upper_is_one(self):
        te = tail_estimate(np.ones(200), 0.5)
        assert te.p_hat == 1.0 and te.upper == 1.0

    def test_needs_replicates(self):
        with pytest.raises(ConfigError):
            tail_estimate(np.ones(50), 0.5)


class TestKolmogorovDistance:
    def test_three_point_oracle(self):
        # sup gap of the empirical CDF of {-1, 0, 1} against ndtr sits at the
        # outer points: 1/3 - ndtr(-1) on both sides by symmetry
        d = kolmogorov_distance(np.array([-1.0, 0.0, 1.0]), 0.0, 1.0)
        assert d == pytest.approx(0.1746780794018763, rel=1e-12)

    def test_affine_invariance(self):
        s = np.array([-2.0, -0.5, 0.1, 1.7, 2.2])
        assert kolmogorov_distance(2.0 * s + 3.0, 3.0, 2.0) == pytest.approx(
            kolmogorov_distance(s, 0.0, 1.0), rel=1e-14
        )

    def test_small_for_actual_normals(self):
        z = np.random.default_rng(42).normal(size=4000)
        assert kolmogorov_distance(z, 0.0, 1.0) < 0.04

    def test_scale_must_be_positive(self):
        with pytest.raises(ConfigError):
            kolmogorov_distance(np.ones(10), 0.0, 0.0)


class TestBootstrap:
    def test_deterministic_and_point_exact(self):
        v = np.random.default_rng(1).normal(size=500)
        stat = lambda x: float(np.mean(x))
        p1, se1 = bootstrap_se(v, stat, master_seed=9, n_boot=199)
        p2, se2 = bootstrap_se(v, stat, master_seed=9, n_boot=199)
        assert p1 == stat(v)
        assert (p1, se1) == (p2, se2)

    def test_se_tracks_the_analytic_rate(self):
        v = np.random.default_rng(2).normal(size=2000)
        _, se = bootstrap_se(v, lambda x: float(np.mean(x)), master_seed=9)
        analytic = v.std(ddof=1) / math.sqrt(v.size)
        assert se == pytest.approx(analytic, rel=0.15)

    def test_needs_two_values(self):
        with pytest.raises(ConfigError):
            bootstrap_se(np.ones(1), lambda x: 0.0, master_seed=0)


class TestVarianceScan:
    def test_recovers_planted_coefficient(self):
        # sample variance of sqrt(2n + sqrt(n)) z is exactly that factor when
        # z is standardized, so the fit sees a clean linear-plus-root law
        z = _standardized(3, 400)
        grid = (16, 64, 256)
        by_n = {n: _synthetic_sample(n, math.sqrt(2 * n + math.sqrt(n)) * z) for n in grid}
        fit = variance_scan(_config(RADEMACHER, 1, grid, 400), by_n)
        assert fit.d_squared == pytest.approx(2.0, abs=0.15)
        assert fit.c1_hat > 0
        assert fit.c1_conservative > fit.c1_hat
        assert fit.residuals.shape == (3,)

    def test_rejects_narrow_grid(self):
        with pytest.raises(ConfigError):
            variance_scan(_config(RADEMACHER, 1, (100, 800), 400), {})


class TestCumulantScan:
    def test_normalized_slope_on_planted_power_law(self):
        # sums scaled as n^(3/4) z give second cumulant n^(3/2) exactly, so
        # the normalized cumulant is n^(1/2) and the log-log slope is 1/2
        z = _standardized(4, 2000)
        grid = (16, 64, 256)
        by_n = {n: _synthetic_sample(n, n**0.75 * z) for n in grid}
        rep = cumulant_scan(_config(RADEMACHER, 1, grid, 2000), k_max=2, sums_by_n=by_n)
        assert rep.row(16, 2).estimate == pytest.approx(16.0**1.5, rel=1e-10)
        assert rep.normalized_slope(2) == pytest.approx(0.5, abs=1e-9)
        with pytest.raises(KeyError):
            rep.row(16, 3)

    def test_replicate_gate_for_high_orders(self):
        with pytest.raises(ConfigError):
            cumulant_scan(_config(RADEMACHER, 1, (16, 256), 2000), k_max=3, sums_by_n={})
        with pytest.raises(ConfigError):
            cumulant_scan(_config(RADEMACHER, 1, (16, 256), 20_000), k_max=5, sums_by_n={})


class TestMdpDiagnostic:
    def test_matches_exact_binomial_tail(self):
        # the count path makes the exceedance law a pure binomial tail, so
        # the reported interval must cover the exactly computed value
        cfg = _config(RADEMACHER, 1, (2500,), 100_000, seed=7)
        tab = mdp_diagnostic(cfg, lambda n: n**0.1, [1.0, 3.0], 1.0)
        a = 2500**0.1
        kmin = math.ceil((2500 + math.sqrt(2500) * a) / 2)
        exact = -math.log(float(binom.sf(kmin - 1, 2500, 0.5))) / a**2
        cell = tab.cell(2500, 1.0)
        assert cell.status == "ok"
        assert cell.value_lo <= exact <= cell.value_hi
        assert cell.rate == pytest.approx(0.5)

    def test_unreachable_tail_marked_inconclusive(self):
        cfg = _config(RADEMACHER, 1, (2500,), 100_000, seed=7)
        tab = mdp_diagnostic(cfg, lambda n: n**0.1, [3.0], 1.0)
        cell = tab.cell(2500, 3.0)
        assert cell.status == "inconclusive"
        assert cell.count < 20
        with pytest.raises(KeyError):
            tab.cell(2500, 2.0)

    def test_rejects_bad_normalization(self):
        cfg = _config(RADEMACHER, 1, (400,), 200)
        with pytest.raises(ConfigError):
            mdp_diagnostic(cfg, lambda n: n**0.1, [1.0], 0.0)
        with pytest.raises(ConfigError):
            mdp_diagnostic(cfg, lambda n: -1.0, [1.0], 1.0)


class TestCalibration:
    def test_cumulant_envelope_constant(self):
        rows = (
            CumulantRow(10, 2, 1.0, 0.1, 1.2, 0.1, 0.01),
            CumulantRow(10, 3, 3000.0, 300.0, 3600.0, 0.0, 0.0),
        )
        scan = CumulantScanReport(n_grid=(10,), k_max=3, rows=rows)
        out = calibrate_constants("c0_cumulant", scan=scan, gamma=1.0)
        # envelope unit at k = 3 is 10 * 36; 3600 over that is 10, times safety
        assert out["c0"] == pytest.approx(15.0, rel=1e-12)

    def test_cumulant_constant_floors(self):
        rows = (CumulantRow(10, 3, 0.0, 0.0, 1e-12, 0.0, 0.0),)
        scan = CumulantScanReport(n_grid=(10,), k_max=3, rows=rows)
        out = calibrate_constants("c0_cumulant", scan=scan, gamma=1.0)
        assert out["c0"] == pytest.approx(1.5e-3, rel=1e-12)

    def test_concentration_constants_tied_inversion(self):
        # p = exp(-2) at x = 2, N = 64 inverts to base 1 split over 1 + x/2
        out = calibrate_constants(
            "c12_concentration", tails=[(2.0, 64.0, math.exp(-2.0))], gamma=1.0
        )
        assert out["c1"] == pytest.approx(0.75, rel=1e-12)
        assert out["c2"] == out["c1"]

    def test_variance_constant_from_fit(self):
        fit = VarianceFit(
            n_grid=(16, 256),
            variances=np.array([16.0, 256.0]),
            std_errors=np.array([1.0, 1.0]),
            d_squared=1.0,
            d_squared_se=0.1,
            c1_hat=0.3,
            c1_conservative=0.4,
            residuals=np.zeros(2),
        )
        assert calibrate_constants("C1_variance", fit=fit)["C1"] == pytest.approx(0.6)

    def test_martingale_constant_covers_observed_gap(self):
        from nonconv.martingale import build_decomposition, evaluate_paths

        c = center(product_observable(2), PAIR)
        decomp = build_decomposition(PAIR, c, linear_family(2), 16)
        sample = replicate_sums(_config(PAIR, 2, (16,), 256, seed=3), 16)
        out = calibrate_constants(
            "B_martingale",
            decomp=decomp,
            sample=sample,
            lambdas=(0.02,),
            t_grid=(1.0, 2.0),
        )
        ev = evaluate_paths(decomp, 3, 256)
        assert out["B"] > float(np.max(ev.gaps)) / decomp.delta2_plain

    def test_unknown_target(self):
        with pytest.raises(ConfigError):
            calibrate_constants("c9_nope")
