import itertools
import math

import numpy as np
import pytest

from vstbench.stats import (
    StatsError,
    chi2_sf,
    f_sf,
    friedman_test,
    holm_bonferroni,
    normal_sf_two_sided,
    paired_t_test,
    rank_with_ties,
    regularized_beta,
    regularized_gamma_q,
    rm_anova,
    t_sf_two_sided,
    wilcoxon_signed_rank,
)

# High-precision reference values (mpmath, 40 digits), frozen.
GAMMA_Q_REFERENCE = [
    (0.5, 0.1, 0.65472084601857702),
    (0.5, 3.0, 0.01430587843542964),
    (1.0, 1.0, 0.36787944117144232),
    (1.5, 10.0, 0.00016974243555282643),
    (2.5, 0.5, 0.96256577324729637),
    (7.0, 6.5, 0.52652362251799986),
    (12.0, 30.0, 6.3877025399273365e-5),
    (23.0, 18.0, 0.85509006908941101),
]

BETA_REFERENCE = [
    (0.5, 0.5, 0.3, 0.36901011956554538),
    (1.0, 3.0, 0.2, 0.48800000000000002),
    (2.5, 1.5, 0.7, 0.58431214770197458),
    (11.5, 0.5, 0.9, 0.12355574276988121),
    (23.0, 1.0, 0.98, 0.62834728215212063),
    (5.0, 12.0, 0.35, 0.71079300143610674),
    (0.5, 23.0, 0.01, 0.50112183670038685),
]

CHI2_SF_REFERENCE = [
    (20.0, 2, 4.5399929762484852e-5),
    (31.89, 2, 1.1889798267050014e-7),
    (3.84, 1, 0.050043521248705103),
    (7.81, 3, 0.050106056350005941),
    (0.5, 4, 0.97350097883925609),
]

T_SF_REFERENCE = [
    (2.0686, 23, 0.050005867750775026),
    (1.0, 10, 0.34089313230205979),
    (3.5, 5, 0.017284431785293356),
    (0.0, 7, 1.0),
]

F_SF_REFERENCE = [
    (27.373, 2, 46, 1.4763538211506174e-8),
    (1.0, 2, 46, 0.37573501490663231),
    (8.88, 2, 46, 0.00054804855340565957),
    (4.0, 3, 21, 0.02124931125376391),
]


class TestSpecialFunctions:
    @pytest.mark.parametrize("a,x,expected", GAMMA_Q_REFERENCE)
    def test_gamma_q(self, a, x, expected):
        assert regularized_gamma_q(a, x) == pytest.approx(expected, abs=1e-10, rel=1e-10)

    @pytest.mark.parametrize("a,b,x,expected", BETA_REFERENCE)
    def test_beta(self, a, b, x, expected):
        assert regularized_beta(a, b, x) == pytest.approx(expected, abs=1e-10, rel=1e-10)

    @pytest.mark.parametrize("x,k,expected", CHI2_SF_REFERENCE)
    def test_chi2_sf(self, x, k, expected):
        assert chi2_sf(x, k) == pytest.approx(expected, abs=1e-10, rel=1e-10)

    @pytest.mark.parametrize("t,nu,expected", T_SF_REFERENCE)
    def test_t_sf(self, t, nu, expected):
        assert t_sf_two_sided(t, nu) == pytest.approx(expected, abs=1e-10, rel=1e-10)

    @pytest.mark.parametrize("f,d1,d2,expected", F_SF_REFERENCE)
    def test_f_sf(self, f, d1, d2, expected):
        assert f_sf(f, d1, d2) == pytest.approx(expected, abs=1e-10, rel=1e-10)

    def test_bounds(self):
        assert regularized_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_beta(2.0, 3.0, 1.0) == 1.0
        assert regularized_gamma_q(1.0, 0.0) == 1.0
        assert normal_sf_two_sided(0.0) == 1.0


class TestRanks:
    def test_simple(self):
        assert list(rank_with_ties(np.array([3.0, 1.0, 2.0]))) == [3.0, 1.0, 2.0]

    def test_ties_share_mean_rank(self):
        assert list(rank_with_ties(np.array([1.0, 2.0, 2.0, 5.0]))) == [1.0, 2.5, 2.5, 4.0]

    def test_all_tied(self):
        assert list(rank_with_ties(np.array([7.0, 7.0, 7.0]))) == [2.0, 2.0, 2.0]


class TestFriedman:
    def test_identical_permutation_rows(self):
        # ranks are (1,2,3) in every one of 10 rows: chi2 = 20 by hand
        data = np.tile([1.0, 2.0, 3.0], (10, 1))
        res = friedman_test(data)
        assert res.statistic == pytest.approx(20.0, abs=1e-12)
        # chi-square survival oracle: df=2 survival at 20 is exp(-10)
        assert res.p == pytest.approx(math.exp(-10.0), rel=1e-9)

    def test_constant_rows_fully_tied(self):
        data = np.tile([4.0, 4.0, 4.0], (8, 1))
        res = friedman_test(data)
        assert res.statistic == 0.0
        assert res.p == 1.0

    def test_exact_permutation_enumeration_n5(self):
        # exact null by enumerating all (3!)^5 within-row permutations
        data = np.array(
            [[1.2, 2.5, 2.1],
             [0.8, 1.9, 2.2],
             [1.1, 2.4, 1.7],
             [0.9, 2.8, 2.0],
             [1.4, 2.2, 2.6]]
        )
        observed = friedman_test(data).statistic
        perms = list(itertools.permutations(range(3)))
        count = 0
        total = 0
        for assignment in itertools.product(perms, repeat=5):
            permuted = np.stack([data[i, list(assignment[i])] for i in range(5)])
            total += 1
            if friedman_test(permuted).statistic >= observed - 1e-12:
                count += 1
        p_exact = count / total
        # the asymptotic chi-square p must track the exact permutation p
        assert friedman_test(data).p == pytest.approx(p_exact, abs=0.02)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(0)
        data = rng.uniform(0, 5, (12, 3))
        base = friedman_test(data)
        exp_t = friedman_test(np.exp(data))
        aff_t = friedman_test(3.0 * data + 10.0)
        assert base.statistic == pytest.approx(exp_t.statistic, abs=1e-12)
        assert base.statistic == pytest.approx(aff_t.statistic, abs=1e-12)

    def test_input_validation(self):
        with pytest.raises(StatsError):
            friedman_test(np.ones((1, 3)))
        with pytest.raises(StatsError):
            friedman_test(np.ones((5, 1)))


def enumeration_wilcoxon_p(d):
    """Independent oracle: exact two-sided p over all 2^n sign assignments."""
    d = np.asarray(d, dtype=float)
    d = d[d != 0]
    ranks = rank_with_ties(np.abs(d))
    w_plus_obs = ranks[d > 0].sum()
    n = len(d)
    le = 0
    ge = 0
    for signs in itertools.product([0, 1], repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w <= w_plus_obs + 1e-12:
            le += 1
        if w >= w_plus_obs - 1e-12:
            ge += 1
    total = 2**n
    return min(1.0, 2.0 * min(le / total, ge / total))


class TestWilcoxon:
    def test_constant_shift_n6(self):
        b = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        a = b + 0.5
        res = wilcoxon_signed_rank(a, b)
        assert res.statistic == 0.0
        assert res.p == pytest.approx(2.0 / 2**6, abs=1e-12)

    def test_antisymmetric_differences(self):
        b = np.zeros(8)
        a = np.array([1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0])
        res = wilcoxon_signed_rank(a, b)
        assert res.p == 1.0

    def test_zero_differences_dropped(self):
        a = np.array([1.0, 2.0, 3.0, 4.0, 4.0])
        b = np.array([0.5, 2.0, 2.5, 3.0, 4.0])
        res = wilcoxon_signed_rank(a, b)
        assert res.n == 3

    def test_all_zero_raises(self):
        with pytest.raises(StatsError, match="degenerate"):
            wilcoxon_signed_rank(np.ones(5), np.ones(5))

    @pytest.mark.parametrize("n", [4, 6, 8, 10, 12])
    def test_exact_matches_enumeration(self, n):
        rng = np.random.default_rng(n)
        for trial in range(3):
            a = rng.normal(0.3, 1.0, n)
            b = rng.normal(0.0, 1.0, n)
            if np.all(a == b):
                continue
            res = wilcoxon_signed_rank(a, b, method="exact")
            assert res.p == pytest.approx(enumeration_wilcoxon_p(a - b), abs=1e-12)

    def test_exact_with_ties_matches_enumeration(self):
        a = np.array([1.0, 2.0, 2.0, 5.0, 5.0, 7.0, 1.5, 2.5])
        b = np.zeros(8)
        res = wilcoxon_signed_rank(a - 3.0, b, method="exact")
        assert res.p == pytest.approx(enumeration_wilcoxon_p(a - 3.0), abs=1e-12)

    def test_monte_carlo_sign_flip_n24(self):
        rng = np.random.default_rng(99)
        a = rng.normal(0.4, 1.0, 24)
        b = rng.normal(0.0, 1.0, 24)
        res = wilcoxon_signed_rank(a, b, method="exact")

        d = a - b
        ranks = rank_with_ties(np.abs(d))
        w_obs = ranks[d > 0].sum()
        m = 10**6
        signs = rng.random((m, 24)) < 0.5
        w_sim = (ranks[None, :] * signs).sum(axis=1)
        p_le = np.mean(w_sim <= w_obs + 1e-12)
        p_ge = np.mean(w_sim >= w_obs - 1e-12)
        p_mc = min(1.0, 2.0 * min(p_le, p_ge))
        se = math.sqrt(p_mc * (1 - p_mc) / m)
        assert abs(res.p - p_mc) <= 3 * se + 2.0 / m

    def test_approx_close_to_exact_at_n24(self):
        rng = np.random.default_rng(7)
        a = rng.normal(0.5, 1.0, 24)
        b = rng.normal(0.0, 1.0, 24)
        pe = wilcoxon_signed_rank(a, b, method="exact").p
        pa = wilcoxon_signed_rank(a, b, method="approx").p
        assert pa == pytest.approx(pe, abs=0.01)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(1, 4, 15)
        b = rng.uniform(1, 4, 15)
        r1 = wilcoxon_signed_rank(a, b)
        # any strictly increasing transform of the differences preserves ranks
        d = a - b
        scaled = wilcoxon_signed_rank(np.sign(d) * np.expm1(np.abs(d)), np.zeros(15))
        assert r1.statistic == pytest.approx(scaled.statistic)
        assert r1.p == pytest.approx(scaled.p, abs=1e-12)


class TestHolm:
    def test_single_p_unchanged(self):
        assert holm_bonferroni([0.2]) == [0.2]

    def test_definition_example(self):
        assert holm_bonferroni([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.06, 0.06])

    def test_against_definition_arithmetic_random(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            m = int(rng.integers(1, 9))
            p = rng.uniform(0, 1, m)
            adj = holm_bonferroni(list(p))
            order = np.argsort(p, kind="stable")
            for pos, idx in enumerate(order):
                expected = max(
                    min(1.0, (m - j) * p[order[j]]) for j in range(pos + 1)
                )
                assert adj[idx] == pytest.approx(expected, abs=1e-15)

    def test_adjusted_at_least_raw(self):
        rng = np.random.default_rng(4)
        p = rng.uniform(0, 1, 10)
        adj = holm_bonferroni(list(p))
        assert np.all(np.asarray(adj) >= p - 1e-15)

    def test_permutation_equivariance(self):
        p = [0.01, 0.2, 0.003, 0.6]
        adj = holm_bonferroni(p)
        perm = [2, 0, 3, 1]
        adj_perm = holm_bonferroni([p[i] for i in perm])
        assert adj_perm == pytest.approx([adj[i] for i in perm])

    def test_readjustment_never_decreases(self):
        p = [0.01, 0.02, 0.5]
        once = holm_bonferroni(p)
        twice = holm_bonferroni(once)
        assert np.all(np.asarray(twice) >= np.asarray(once) - 1e-15)

    def test_rejects_invalid(self):
        with pytest.raises(StatsError):
            holm_bonferroni([0.5, 1.2])


class TestAnova:
    def test_identical_conditions(self):
        rng = np.random.default_rng(1)
        col = rng.uniform(0, 5, 10)
        data = np.tile(col[:, None], (1, 3))
        res = rm_anova(data)
        assert res.statistic == 0.0
        assert res.p == 1.0

    def test_two_condition_equals_paired_t_squared(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            a = rng.normal(0, 1, 12)
            b = rng.normal(0.4, 1, 12)
            f = rm_anova(np.stack([a, b], axis=1))
            t = paired_t_test(a, b)
            assert f.statistic == pytest.approx(t.statistic**2, abs=1e-9)
            assert f.p == pytest.approx(t.p, abs=1e-9)

    def test_dof_shape_for_study_sizes(self):
        data = np.random.default_rng(5).normal(size=(24, 3))
        res = rm_anova(data)
        assert res.dof == (2.0, 46.0)

    def test_partial_eta_squared_matches_f_identity(self):
        data = np.random.default_rng(8).normal(size=(24, 3))
        res = rm_anova(data)
        f, (df1, df2) = res.statistic, res.dof
        assert res.effect_size == pytest.approx(f * df1 / (f * df1 + df2), abs=1e-12)

    def test_missing_cells_rejected(self):
        data = np.ones((5, 3))
        data[2, 1] = np.nan
        with pytest.raises(StatsError, match="missing"):
            rm_anova(data)


class TestPairedT:
    def test_hand_computed(self):
        a = np.array([2.0, 4.0, 6.0, 9.0])
        b = np.array([1.0, 2.0, 5.0, 7.0])
        d = a - b
        t_hand = d.mean() / (d.std(ddof=1) / 2.0)
        res = paired_t_test(a, b)
        assert res.statistic == pytest.approx(t_hand, abs=1e-12)
        assert res.dof == 3.0

    def test_zero_variance_nonzero_mean(self):
        res = paired_t_test(np.array([2.0, 2.0, 2.0]), np.array([1.0, 1.0, 1.0]))
        assert math.isinf(res.statistic)
        assert res.p == 0.0
