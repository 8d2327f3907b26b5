import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gpttomo.errors import AmbiguousSelectionError
from gpttomo.synthdata import ChannelParams, fibonacci_directions, sample_frequency_table
from gpttomo.tables import FrequencyTable, binomial_variance
from gpttomo.tomofit import (
    FitOptions,
    RankScan,
    chi_squared,
    fit_rank_k,
    rank_scan,
    select_rank,
    stack_tables,
    variance_table,
)

FAST = FitOptions(restarts=2, seed=0)


def _planted_table(rng, m, n, k):
    """Exact rank-k table with entries strictly inside [0, 1]."""
    S = rng.uniform(0.1, 0.6, (m, k))
    E = rng.uniform(0.1, 1.0 / k, (k, n))
    return np.clip(S @ E, 0.0, 1.0)


class TestVarianceTable:
    def test_paper_value(self):
        t = FrequencyTable(np.full((1, 1), 0.5), shots=2000, tau=0.0, seed=0)
        assert variance_table(t)[0, 0] == pytest.approx(0.000125, abs=1e-18)

    def test_degenerate_frequencies_floored(self):
        t = FrequencyTable(np.array([[0.0, 1.0]]), shots=50, tau=0.0, seed=0)
        assert np.all(variance_table(t) == 1.0 / (4 * 50 * 50))

    @given(st.floats(0.01, 0.99), st.integers(1, 10**6))
    @settings(max_examples=50, deadline=None)
    def test_matches_independent_recomputation(self, f, n):
        got = binomial_variance(np.array([[f]]), n)[0, 0]
        expected = f * (1 - f) / n
        if expected > 1.0 / (4 * n * n):
            assert abs(got - expected) < 1e-15


class TestChiSquared:
    def test_perfect_fit(self):
        F = np.random.default_rng(0).uniform(0.2, 0.8, (5, 4))
        assert chi_squared(F, F, np.full_like(F, 1e-4)) == 0.0

    def test_hand_value(self):
        assert chi_squared(
            np.array([[0.6]]), np.array([[0.5]]), np.array([[0.01]])
        ) == pytest.approx(1.0, abs=1e-15)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        F = rng.uniform(0.2, 0.8, (6, 5))
        D = rng.uniform(0.2, 0.8, (6, 5))
        V = rng.uniform(1e-4, 1e-3, (6, 5))
        pr = rng.permutation(6)
        pc = rng.permutation(5)
        a = chi_squared(F, D, V)
        b = chi_squared(F[pr][:, pc], D[pr][:, pc], V[pr][:, pc])
        assert a == pytest.approx(b, rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            chi_squared(np.zeros((2, 2)), np.zeros((2, 3)), np.zeros((2, 2)))


class TestFitRankK:
    def test_exact_rank_k_recovered(self):
        rng = np.random.default_rng(1)
        D = _planted_table(rng, 10, 8, 3)
        fit = fit_rank_k(D, binomial_variance(D, 2000), 3, FAST)
        assert fit.chi2 < 1e-6

    def test_noiseless_qubit_is_rank_4(self):
        dirs = fibonacci_directions(100)
        F = 0.5 * (1.0 + dirs @ dirs.T)
        sv = np.linalg.svd(F, compute_uv=False)
        assert sv[4] < 1e-10 * sv[0]
        fit = fit_rank_k(F, binomial_variance(F, 2000), 4, FAST)
        assert fit.chi2 < 1e-6

    def test_small_tables_match_restart_champion(self):
        # 6x6 random tables at k=2 against a 1000-restart champion.
        wins = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            F = rng.uniform(0.0, 1.0, (6, 6))
            var = binomial_variance(F, 500)
            ours = fit_rank_k(F, var, 2, FitOptions(restarts=5, seed=seed))
            champion = fit_rank_k(F, var, 2, FitOptions(restarts=1000, seed=10_000 + seed))
            if ours.chi2 <= champion.chi2 * 1.01 + 1e-9:
                wins += 1
        assert wins >= 19

    def test_chi2_history_monotone(self):
        rng = np.random.default_rng(5)
        F = rng.uniform(0.0, 1.0, (15, 12))
        fit = fit_rank_k(F, binomial_variance(F, 300), 3, FAST)
        h = fit.chi2_history
        assert np.all(np.diff(h) <= 1e-10 * np.maximum(h[:-1], 1.0))

    def test_scale_equivariance(self):
        rng = np.random.default_rng(6)
        F = rng.uniform(0.1, 0.9, (8, 7))
        var = binomial_variance(F, 400)
        a = fit_rank_k(F, var, 3, FAST)
        b = fit_rank_k(F, 10.0 * var, 3, FAST)
        assert b.chi2 == pytest.approx(a.chi2 / 10.0, rel=1e-6)
        assert np.allclose(a.d_matrix, b.d_matrix, atol=1e-7)

    def test_rank_certificate_and_feasibility(self):
        rng = np.random.default_rng(7)
        F = rng.uniform(0.0, 1.0, (12, 9))
        fit = fit_rank_k(F, binomial_variance(F, 100), 4, FAST)
        sv = np.linalg.svd(fit.d_matrix, compute_uv=False)
        assert sv[4] < 1e-8 * sv[0]
        assert fit.d_matrix.min() >= 0.0 and fit.d_matrix.max() <= 1.0

    def test_rank_bounds_rejected(self):
        F = np.full((4, 4), 0.5)
        var = np.full((4, 4), 1e-4)
        with pytest.raises(ValueError):
            fit_rank_k(F, var, 1, FAST)
        with pytest.raises(ValueError):
            fit_rank_k(F, var, 5, FAST)


def _tables_from_sim(n_tables, m=30, seed=0):
    dirs = fibonacci_directions(m)
    params = ChannelParams()
    return [
        sample_frequency_table(dirs, dirs, 0.0, 2000, params, seed=seed + q)
        for q in range(n_tables)
    ]


class TestRankScan:
    def test_pair_count(self):
        tables = _tables_from_sim(10, m=12)
        scan = rank_scan(tables, (2, 3), FitOptions(restarts=1, seed=0))
        pairs = np.sum(~np.isnan(scan.test_errors[0]))
        assert pairs == 90

    def test_identical_tables_give_equal_train_test(self):
        dirs = fibonacci_directions(10)
        F = 0.5 * (1.0 + dirs @ dirs.T) * 0.7 + 0.15
        t = FrequencyTable(F, shots=2000, tau=0.0, seed=0)
        scan = rank_scan([t, t, t], (3, 4), FitOptions(restarts=1, seed=0))
        for ri in range(2):
            for a in range(3):
                for b in range(3):
                    if a != b:
                        assert scan.test_errors[ri, a, b] == pytest.approx(
                            scan.train_errors[ri, a], rel=1e-12
                        )

    def test_sign_pattern_on_simulated_qubit(self):
        tables = _tables_from_sim(6, m=30, seed=11)
        scan = rank_scan(tables, (2, 3, 4, 5, 6), FitOptions(restarts=2, seed=11))
        for k in (3, 4):
            assert scan.diff_stats(k)[0] < 0
        for k in (5, 6):
            assert scan.diff_stats(k)[0] > 0
        assert select_rank(scan) == 4

    def test_needs_two_tables(self):
        with pytest.raises(ValueError):
            rank_scan(_tables_from_sim(1, m=8), (2, 3))


def _scan_with_mean_test_errors(levels: dict[int, float], noise=1.0, n_tables=4) -> RankScan:
    """Synthetic scan whose per-rank mean test errors follow `levels`."""
    rng = np.random.default_rng(0)
    ranks = tuple(sorted(levels))
    test = np.full((len(ranks), n_tables, n_tables), np.nan)
    for ri, k in enumerate(ranks):
        block = levels[k] + rng.normal(0.0, noise, (n_tables, n_tables))
        np.fill_diagonal(block, np.nan)
        test[ri] = block
    train = np.zeros((len(ranks), n_tables))
    return RankScan(ranks=ranks, train_errors=train, test_errors=test)


class TestSelectRank:
    def test_constructed_sign_change(self):
        scan = _scan_with_mean_test_errors({2: 1000.0, 3: 900.0, 4: 890.0, 5: 895.0, 6: 902.0})
        assert select_rank(scan) == 4

    def test_all_negative_diffs_ambiguous(self):
        scan = _scan_with_mean_test_errors({2: 1000.0, 3: 800.0, 4: 600.0, 5: 400.0})
        with pytest.raises(AmbiguousSelectionError) as err:
            select_rank(scan)
        assert err.value.scan is scan

    def test_interior_minimum_fallback(self):
        # No clean sign change (one diff within its standard error) but an
        # interior arg-min: returns the arg-min rank.
        scan = _scan_with_mean_test_errors(
            {2: 1000.0, 3: 500.0, 4: 499.9, 5: 500.05, 6: 520.0}, noise=2.0
        )
        assert select_rank(scan) in (4, 5)

    def test_noncontiguous_ranks_rejected(self):
        scan = _scan_with_mean_test_errors({2: 10.0, 4: 5.0})
        with pytest.raises(ValueError):
            select_rank(scan)


class TestStackTables:
    def test_paper_shape(self):
        rng = np.random.default_rng(0)
        tables = [
            FrequencyTable(rng.uniform(0.2, 0.8, (100, 100)), 2000, tau, seed=ti)
            for ti, tau in enumerate((0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0))
        ]
        stacked = stack_tables(tables)
        assert stacked.entries.shape == (800, 100)
        assert stacked.taus == (0.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0)

    def test_single_table_identity(self):
        t = FrequencyTable(np.full((3, 4), 0.4), 100, 7.0, seed=5)
        stacked = stack_tables([t])
        assert np.array_equal(stacked.entries, t.entries)
        assert stacked.taus == (7.0,)

    def test_block_round_trip_bitwise(self):
        rng = np.random.default_rng(2)
        tables = [
            FrequencyTable(rng.uniform(0, 1, (4, 5)), 60, float(i), seed=i)
            for i in range(3)
        ]
        stacked = stack_tables(tables)
        for i, t in enumerate(tables):
            block = stacked.block(i)
            assert np.array_equal(block.entries, t.entries)
            assert np.array_equal(block.variance, t.variance)
            assert block.tau == t.tau and block.seed == t.seed

    def test_mismatched_columns_rejected(self):
        a = FrequencyTable(np.full((2, 3), 0.5), 10, 0.0, 0)
        b = FrequencyTable(np.full((2, 4), 0.5), 10, 1.0, 0)
        with pytest.raises(ValueError):
            stack_tables([a, b])
