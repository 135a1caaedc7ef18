import math
from fractions import Fraction

import numpy as np
import pytest

from cumtomo._special import (
    binomial_cdf,
    regularized_incomplete_beta,
    student_t_two_sided_p,
)
from cumtomo.cumulants import (
    DelaySample,
    EstimateWithSpread,
    LinkDistribution,
    NonzeroTestConfig,
    ResampleEstimator,
    analytic_cumulant,
    common_cumulant_estimate,
    k_statistic,
    mixture_cumulant,
    nonzero_test,
    replicate_indices,
    resample_estimates,
)
from cumtomo.lattice import MultiIndex, PathSet, representative_multi_indices

DEMO_R = np.array([[1, 1, 0], [1, 0, 1], [0, 0, 1]])
DEMO_LINKS = [
    LinkDistribution.exponential(Fraction(1)),
    LinkDistribution.exponential(Fraction(3, 2)),
    LinkDistribution.exponential(Fraction(2)),
]


class TestAnalyticCumulants:
    def test_exponential_third_cumulant_rational(self):
        assert analytic_cumulant(LinkDistribution.exponential(Fraction(3, 2)), 3) == Fraction(16, 27)

    def test_normal_higher_cumulants_vanish(self):
        d = LinkDistribution.normal(3.0, 4.0)
        assert analytic_cumulant(d, 1) == 3.0
        assert analytic_cumulant(d, 2) == 4.0
        assert analytic_cumulant(d, 4) == 0

    def test_gamma_mean(self):
        assert analytic_cumulant(LinkDistribution.gamma(2.5, 0.25), 1) == pytest.approx(10.0)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            LinkDistribution.exponential(-1.0)
        with pytest.raises(ValueError):
            LinkDistribution.normal(0.0, 0.0)
        with pytest.raises(ValueError):
            LinkDistribution.gamma(1.0, -2.0)


class TestMixtureCumulant:
    def test_demo_third_order_singleton(self):
        a = MultiIndex((3, 0, 0))
        assert mixture_cumulant(DEMO_R, DEMO_LINKS, a) == Fraction(70, 27)

    def test_paths_sharing_no_link_give_zero(self):
        assert mixture_cumulant(DEMO_R, DEMO_LINKS, MultiIndex((1, 0, 2))) == 0

    def test_zero_row_support_gives_zero(self):
        R = np.array([[1, 0], [0, 0]])
        links = [LinkDistribution.exponential(1.0), LinkDistribution.exponential(2.0)]
        assert mixture_cumulant(R, links, MultiIndex((0, 2))) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mixture_cumulant(DEMO_R, DEMO_LINKS[:2], MultiIndex((1, 1, 0)))

    def test_full_demo_vector(self):
        order = [(3, 0, 0), (0, 3, 0), (0, 0, 3), (1, 2, 0), (1, 0, 2), (0, 1, 2), (1, 1, 1)]
        expect = [Fraction(70, 27), Fraction(9, 4), Fraction(1, 4), 2, 0, Fraction(1, 4), 0]
        got = [mixture_cumulant(DEMO_R, DEMO_LINKS, MultiIndex(a)) for a in order]
        assert got == expect


class TestKStatistic:
    def test_order_two_equals_sample_covariance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            data = rng.normal(size=(rng.integers(5, 40), 3))
            sample = DelaySample(data, ["a", "b", "c"])
            ref = np.cov(data, rowvar=False)
            for j in range(3):
                for k in range(3):
                    mult = [0, 0, 0]
                    mult[j] += 1
                    mult[k] += 1
                    got = k_statistic(sample, MultiIndex(tuple(mult)))
                    assert got == pytest.approx(ref[j, k], rel=1e-12, abs=1e-12)

    def test_constant_sample_gives_zero(self):
        data = np.tile([1.5, -2.0], (30, 1))
        sample = DelaySample(data, ["a", "b"])
        for mult in [(2, 0), (1, 1), (3, 0), (2, 2)]:
            assert k_statistic(sample, MultiIndex(mult)) == pytest.approx(0.0, abs=1e-12)

    def test_order_one_is_mean(self):
        data = np.arange(12.0).reshape(6, 2)
        sample = DelaySample(data, ["a", "b"])
        assert k_statistic(sample, MultiIndex((1, 0))) == pytest.approx(data[:, 0].mean())

    def test_order_above_four_rejected(self):
        sample = DelaySample(np.random.default_rng(0).normal(size=(20, 2)), ["a", "b"])
        with pytest.raises(ValueError, match="order not supported"):
            k_statistic(sample, MultiIndex((3, 2)))

    def test_small_sample_rejected(self):
        sample = DelaySample(np.ones((3, 2)) + np.eye(3, 2), ["a", "b"])
        with pytest.raises(ValueError, match="sample too small"):
            k_statistic(sample, MultiIndex((2, 1)))

    def test_unbiased_for_gamma_mixture_small_mc(self):
        # desk-scale version of the unbiasedness gate (full one in acceptance)
        rng = np.random.default_rng(11)
        links = [LinkDistribution.gamma(2.0, 0.5), LinkDistribution.gamma(1.5, 1.0), LinkDistribution.gamma(3.0, 0.25)]
        R = DEMO_R
        M, N = 4000, 50
        U = np.empty((M, N, 3))
        for ell, d in enumerate(links):
            U[:, :, ell] = d.sample(rng, M * N).reshape(M, N)
        V = U @ R.T.astype(float)
        for mult in [(1, 1, 0), (2, 1, 0), (1, 1, 1), (2, 2, 0)]:
            alpha = MultiIndex(mult)
            vals = np.array(
                [k_statistic(DelaySample(V[m], ["p1", "p2", "p3"]), alpha) for m in range(M)]
            )
            truth = float(mixture_cumulant(R, links, alpha))
            z = (vals.mean() - truth) / (vals.std(ddof=1) / math.sqrt(M))
            assert abs(z) < 4.5, (mult, z)


class TestCommonCumulantEstimate:
    def sample(self, seed=0, N=200):
        rng = np.random.default_rng(seed)
        return DelaySample(rng.gamma(2.0, 1.0, size=(N, 3)), ["p1", "p2", "p3"])

    def test_pair_average_matches_manual(self):
        s = self.sample()
        P = PathSet.from_members([0, 1], 3)
        manual = 0.5 * (
            k_statistic(s, MultiIndex((2, 1, 0))) + k_statistic(s, MultiIndex((1, 2, 0)))
        )
        assert common_cumulant_estimate(s, P, 3) == pytest.approx(manual, rel=1e-12)

    def test_full_set_single_index(self):
        s = self.sample(1)
        P = PathSet.from_members([0, 1, 2], 3)
        assert common_cumulant_estimate(s, P, 3) == pytest.approx(
            k_statistic(s, MultiIndex((1, 1, 1))), rel=1e-12
        )

    def test_size_equals_order_single_representative(self):
        s = self.sample(2)
        P = PathSet.from_members([0, 1], 3)
        assert len(representative_multi_indices(P, 2)) == 1
        assert common_cumulant_estimate(s, P, 2) == pytest.approx(
            k_statistic(s, MultiIndex((1, 1, 0))), rel=1e-12
        )

    def test_invariant_under_enumeration_order(self):
        s = self.sample(3)
        P = PathSet.from_members([0, 2], 3)
        alphas = representative_multi_indices(P, 4)
        rng = np.random.default_rng(0)
        base = common_cumulant_estimate(s, P, 4)
        for _ in range(5):
            perm = list(alphas)
            rng.shuffle(perm)
            shuffled = sum(k_statistic(s, a) for a in perm) / len(perm)
            assert shuffled == pytest.approx(base, rel=1e-12)


class TestResampling:
    def test_split_is_partition_in_order(self):
        cfg = NonzeroTestConfig(method="split", M=30, rng_seed=0)
        idx = replicate_indices(900, cfg)
        assert len(idx) == 30
        assert all(len(block) == 30 for block in idx)
        flat = np.concatenate(idx)
        assert (flat == np.arange(900)).all()

    def test_bootstrap_shape_and_reproducibility(self):
        cfg = NonzeroTestConfig(method="bootstrap", M=50, rng_seed=7)
        a = replicate_indices(10_000, cfg)
        b = replicate_indices(10_000, cfg)
        assert len(a) == 50 and all(len(r) == 10_000 for r in a)
        assert all((x == y).all() for x, y in zip(a, b))

    def test_split_too_small_errors(self):
        data = DelaySample(np.random.default_rng(0).normal(size=(2, 2)) + 5, ["a", "b"])
        cfg = NonzeroTestConfig(method="split", M=2, rng_seed=0)
        with pytest.raises(ValueError, match="too small"):
            resample_estimates(data, PathSet.from_members([0, 1], 2), 2, cfg)

    def test_resample_estimates_mean_matches_replicates(self):
        rng = np.random.default_rng(5)
        data = DelaySample(rng.gamma(2.0, 1.0, size=(300, 2)), ["a", "b"])
        cfg = NonzeroTestConfig(method="split", M=10, rng_seed=1)
        est = resample_estimates(data, PathSet.from_members([0, 1], 2), 2, cfg)
        assert est.M == 10
        assert est.mean == pytest.approx(np.mean(est.replicates))
        assert est.stderr == pytest.approx(np.std(est.replicates, ddof=1) / math.sqrt(10))


class TestEstimatorCache:
    def test_prefetch_matches_per_set_estimates(self):
        rng = np.random.default_rng(9)
        data = DelaySample(rng.gamma(2.0, 1.0, size=(400, 3)), ["a", "b", "c"])
        cfg = NonzeroTestConfig(method="bootstrap", M=8, rng_seed=4)
        one = ResampleEstimator(data, cfg)
        P = PathSet.from_members([0, 1], 3)
        direct = one.estimate(P, 3)
        batch = ResampleEstimator(data, cfg)
        batch.prefetch([(P, 3), (PathSet.from_members([2], 3), 3)])
        assert batch.estimate(P, 3).replicates == direct.replicates

    def test_sigma_method_dependence(self):
        rng = np.random.default_rng(10)
        data = DelaySample(rng.gamma(2.0, 1.0, size=(400, 2)), ["a", "b"])
        P = PathSet.from_members([0], 2)
        boot = ResampleEstimator(data, NonzeroTestConfig(method="bootstrap", M=16, rng_seed=0))
        split = ResampleEstimator(data, NonzeroTestConfig(method="split", M=16, rng_seed=0))
        b_est = boot.estimate(P, 2)
        s_est = split.estimate(P, 2)
        assert boot.sigma(P, 2) == pytest.approx(b_est.spread())
        assert split.sigma(P, 2) == pytest.approx(s_est.stderr)


class TestNonzeroTest:
    CFG = NonzeroTestConfig(method="split", M=30, p_threshold=0.01, rng_seed=0)

    def test_strong_signal_accepts(self):
        est = EstimateWithSpread.from_replicates(2.0 + 1e-4 * np.arange(30))
        decision, p = nonzero_test(est, self.CFG)
        assert decision and p < 1e-10

    def test_alternating_sign_rejects(self):
        est = EstimateWithSpread.from_replicates([(-1.0) ** k for k in range(30)])
        decision, p = nonzero_test(est, self.CFG)
        assert not decision and p > 0.5

    def test_degenerate_zero_spread_zero_mean(self):
        est = EstimateWithSpread.from_replicates([0.0] * 10)
        decision, p = nonzero_test(est, self.CFG)
        assert (decision, p) == (False, 1.0)

    def test_degenerate_zero_spread_nonzero_mean(self):
        est = EstimateWithSpread.from_replicates([3.0] * 10)
        decision, p = nonzero_test(est, self.CFG)
        assert (decision, p) == (True, 0.0)

    def test_p_value_monotone_in_t_ratio(self):
        ps = []
        for mean in (0.1, 0.5, 1.0, 2.0, 5.0):
            reps = mean + np.array([-1, 1] * 15) * 0.5
            _, p = nonzero_test(EstimateWithSpread.from_replicates(reps), self.CFG)
            ps.append(p)
        assert ps == sorted(ps, reverse=True)
        assert all(0.0 <= p <= 1.0 for p in ps)

    def test_too_few_replicates(self):
        with pytest.raises(ValueError):
            nonzero_test(EstimateWithSpread.from_replicates([1.0]), self.CFG)


class TestSpecialFunctions:
    # two-sided 5% critical values
    TABULATED = {1: 12.7062047364, 5: 2.5705818356, 29: 2.0452296421, 49: 2.0095752371}

    def test_t_cdf_against_tabulated_quantiles(self):
        for dof, q in self.TABULATED.items():
            assert student_t_two_sided_p(q, dof) == pytest.approx(0.05, abs=1e-10)
            assert student_t_two_sided_p(-q, dof) == pytest.approx(0.05, abs=1e-10)

    def test_incomplete_beta_against_scipy(self):
        scipy_special = pytest.importorskip("scipy.special")
        rng = np.random.default_rng(1)
        for _ in range(300):
            a = float(rng.uniform(0.05, 80))
            b = float(rng.uniform(0.05, 80))
            x = float(rng.random())
            assert regularized_incomplete_beta(a, b, x) == pytest.approx(
                float(scipy_special.betainc(a, b, x)), abs=1e-10
            )

    def test_binomial_cdf_against_scipy(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(2)
        for _ in range(150):
            n = int(rng.integers(0, 3000))
            p = float(rng.random())
            t = int(rng.integers(-1, n + 2))
            assert binomial_cdf(t, n, p) == pytest.approx(
                float(scipy_stats.binom.cdf(t, n, p)), abs=1e-9
            )


class TestDelaySampleIO:
    def test_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        sample = DelaySample(rng.gamma(2.0, 3.0, size=(25, 4)), ["w", "x", "y", "z"])
        path = tmp_path / "sample.csv"
        sample.to_csv(path)
        back = DelaySample.from_csv(path)
        assert back.path_ids == sample.path_ids
        assert (back.data == sample.data).all()

    def test_missing_entries_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n3.0,\n")
        with pytest.raises(ValueError):
            DelaySample.from_csv(path)

    def test_nan_rejected(self):
        data = np.ones((5, 2))
        data[2, 1] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            DelaySample(data, ["a", "b"])

    def test_header_required(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="header"):
            DelaySample.from_csv(path)
