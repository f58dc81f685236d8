import itertools
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from selclust.errors import FactorizationFailure, InvalidInput
from selclust.simstats import (EcdfTable, ExperimentConfig, calibrate_lambda,
                               column_covariance, ks_critical, ks_uniformity, lambda_max_rows,
                               null_lambda_max, replicate_rng, run_experiment_1d,
                               run_experiment_multidim, sample_matrix_normal, signal_histogram,
                               wilcoxon_rank_sum)
from selclust.path import lambda_max


def enumerated_rank_sum_pvalue(m, N, W):
    """Two-sided exact p-value by listing every m-subset of ranks 1..N."""
    sums = [sum(c) for c in itertools.combinations(range(1, N + 1), m)]
    total = len(sums)
    le = Fraction(sum(s <= W for s in sums), total)
    ge = Fraction(sum(s >= W for s in sums), total)
    return min(Fraction(1), 2 * min(le, ge))


class TestWilcoxon:
    def test_examples(self):
        assert wilcoxon_rank_sum([1, 2], [3, 4]) == pytest.approx(1 / 3, abs=1e-15)
        assert wilcoxon_rank_sum([1], [2]) == 1.0

    @pytest.mark.parametrize("m, k", [(2, 2), (2, 3), (3, 2), (3, 3)])
    def test_exact_matches_enumeration(self, m, k):
        N = m + k
        for ranks in itertools.combinations(range(1, N + 1), m):
            a = list(ranks)
            b = [r for r in range(1, N + 1) if r not in ranks]
            ref = enumerated_rank_sum_pvalue(m, N, sum(a))
            assert wilcoxon_rank_sum(a, b) == pytest.approx(float(ref), abs=1e-15)

    def test_symmetry(self, rng):
        for _ in range(50):
            a, b = rng.normal(size=int(rng.integers(1, 30))), rng.normal(size=int(rng.integers(1, 30)))
            assert wilcoxon_rank_sum(a, b) == pytest.approx(wilcoxon_rank_sum(b, a), abs=1e-15)

    def test_against_scipy(self, rng):
        for _ in range(30):
            a, b = rng.normal(size=8), rng.normal(0.5, size=9)
            ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="exact").pvalue
            assert wilcoxon_rank_sum(a, b) == pytest.approx(ref, rel=1e-10)
            a, b = rng.normal(size=40), rng.normal(0.3, size=35)
            ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic",
                                     use_continuity=True).pvalue
            assert wilcoxon_rank_sum(a, b) == pytest.approx(ref, rel=1e-10)

    def test_ties_use_corrected_normal(self):
        a, b = [1, 2, 2, 3, 3, 3], [2, 3, 4, 4, 5, 5]
        ref = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic").pvalue
        assert wilcoxon_rank_sum(a, b) == pytest.approx(ref, rel=1e-10)

    def test_empty(self):
        with pytest.raises(InvalidInput):
            wilcoxon_rank_sum([], [1.0])


class TestKS:
    def test_grid(self):
        for m in (1, 10, 137):
            grid = (np.arange(1, m + 1) - 0.5) / m
            assert ks_uniformity(grid) == pytest.approx(0.5 / m, abs=1e-15)

    def test_zeros(self):
        assert ks_uniformity(np.zeros(20)) == 1.0

    def test_against_scipy(self, rng):
        u = rng.random(300)
        assert ks_uniformity(u) == pytest.approx(stats.kstest(u, "uniform").statistic, abs=1e-15)

    def test_uniform_draws_pass(self):
        passed = sum(ks_uniformity(np.random.default_rng(s).random(1000)) < ks_critical(1000)
                     for s in range(300))
        assert passed >= 297


class TestSampling:
    def test_covariance(self):
        Sigma = np.array([[1.0, 0.4], [0.4, 2.0]])
        Delta = np.array([[1.5, -0.6], [-0.6, 1.0]])
        rng = np.random.default_rng(3)
        draws = np.array([sample_matrix_normal(np.zeros((2, 2)), Sigma, Delta, rng)
                          .reshape(-1, order="F") for _ in range(20_000)])
        emp = np.cov(draws, rowvar=False)
        target = np.kron(Delta, Sigma)
        # standard error of a sample covariance of Gaussians
        se = np.sqrt((np.outer(np.diag(target), np.diag(target)) + target ** 2) / len(draws))
        assert np.all(np.abs(emp - target) <= 5 * se)

    def test_iid_entries(self):
        Y = sample_matrix_normal(np.zeros((200, 5)), np.eye(200), np.eye(5), 1)
        assert stats.kstest(Y.ravel(), "norm").pvalue > 0.01

    def test_reproducible(self):
        u = np.ones((4, 2))
        a = sample_matrix_normal(u, np.eye(4), np.eye(2), replicate_rng(7, 3))
        b = sample_matrix_normal(u, np.eye(4), np.eye(2), replicate_rng(7, 3))
        assert np.array_equal(a, b)

    def test_not_spd(self):
        with pytest.raises(FactorizationFailure):
            sample_matrix_normal(np.zeros((2, 1)), -np.eye(2), np.eye(1), 0)

    def test_column_covariance(self):
        assert column_covariance(3, 0.5).tolist() == [[1, 0, 0.5], [0, 1, 0], [0.5, 0, 1]]
        assert column_covariance(1, 0.5).tolist() == [[1.0]]


class TestCalibration:
    def test_rows_match_scalar(self, rng):
        X = rng.normal(size=(50, 17))
        X[0] = 1.0
        np.testing.assert_allclose(lambda_max_rows(X), [lambda_max(x) for x in X], rtol=1e-12)

    def test_formula(self):
        lam = null_lambda_max(30, None, 400, 5)
        assert calibrate_lambda(30, None, 400, 5) == pytest.approx(
            np.quantile(lam, 0.01) - np.std(lam, ddof=1))

    def test_decreasing_in_n(self):
        for seed in range(3):
            vals = [calibrate_lambda(n, None, 2000, seed) for n in (100, 500, 1000)]
            assert vals[0] > vals[1] > vals[2]

    def test_covariance_argument(self):
        # a scaled identity scales every threshold by the same factor
        a = calibrate_lambda(40, None, 500, 2)
        b = calibrate_lambda(40, 4 * np.eye(40), 500, 2)
        assert b == pytest.approx(2 * a, rel=1e-12)


class TestExperiments:
    def test_reproducible(self):
        cfg = ExperimentConfig(n=20, lam=0.05, replicates=15, seed=4, nu=1.0)
        a, b = run_experiment_1d(cfg), run_experiment_1d(cfg)
        assert a.records == b.records
        assert (a.accepted, a.rejected) == (b.accepted, b.rejected)

    def test_parallel_matches_serial(self):
        cfg = ExperimentConfig(n=20, lam=0.05, replicates=12, seed=9)
        par = ExperimentConfig(**{**cfg.__dict__, "threads": 2})
        assert run_experiment_1d(cfg).records == run_experiment_1d(par).records

    def test_counts_and_tables(self):
        cfg = ExperimentConfig(n=10, lam=0.3, replicates=20, seed=1)
        res = run_experiment_1d(cfg)
        assert res.accepted == 20
        assert res.attempts == res.accepted + res.rejected + res.degenerate
        t = res.table()
        assert t.accepted == 20 and t.rejected == res.rejected
        assert np.all(np.diff(t.fractions) > 0) and t.fractions[-1] == 1.0

    def test_all_pairs(self):
        cfg = ExperimentConfig(n=20, lam=0.01, replicates=5, contrast="all_pairs", K0=3)
        res = run_experiment_1d(cfg)
        assert sorted({r["pair"] for r in res.records}) == ["0-1", "0-2", "1-2"]
        assert len(res.records) == 15

    def test_multidim_records(self):
        cfg = ExperimentConfig(n=20, p=3, lam=0.05, replicates=5, nu=2.0, rho=0.5)
        res = run_experiment_multidim(cfg)
        methods = {(r["method"], r["j"]) for r in res.records}
        assert methods == {(m, j) for m in ("selective", "wilcoxon") for j in range(3)}

    def test_odd_n_rejected(self):
        with pytest.raises(InvalidInput):
            run_experiment_1d(ExperimentConfig(n=11, lam=0.1, replicates=1))

    def test_config_from_mapping(self):
        cfg = ExperimentConfig.from_mapping({"n": "40", "lambda": "0.02", "wilcoxon": "false",
                                             "j0": "none"})
        assert (cfg.n, cfg.lam, cfg.wilcoxon, cfg.j0) == (40, 0.02, False, None)
        with pytest.raises(InvalidInput):
            ExperimentConfig.from_mapping({"bogus": 1})
        with pytest.raises(InvalidInput):
            ExperimentConfig(lam=-1.0)


def test_signal_histogram():
    rows = signal_histogram([0.0, 0.01, 0.12, 0.5], 2.0)
    assert all(abs((r - l) - 0.1) < 1e-12 for l, r, _, _ in rows)
    assert sum(c for _, _, c, _ in rows) == 4
    width = rows[0][1] - rows[0][0]
    assert sum(d * width for _, _, _, d in rows) == pytest.approx(1.0)


def test_ecdf_table():
    t = EcdfTable.from_values([0.5, 0.01, 0.2], rejected=2)
    assert t.values.tolist() == [0.01, 0.2, 0.5]
    assert t.rejection_rate(0.05) == pytest.approx(1 / 3)
    assert t.rows()[-1] == (0.5, 1.0)
