import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gsa.data import resolved_from_indices
from gsa.gene_scores import gene_scores
from gsa.inference import (
    DegenerateStatisticError,
    PermutationPlan,
    bh_fdr,
    gene_set_analysis,
    permutation_scores,
    pvalues,
    restandardized_value,
    row_randomization_scores,
    standardize_score,
)
from gsa.numerics import RandomStream
from gsa.statistics import ScoreFunction, set_ks_signed


def brute_bh(p):
    """q_i = min over k with p_(k) >= p_i of K p_(k) / k, capped at 1."""
    p = np.asarray(p, dtype=float)
    K = p.size
    srt = np.sort(p)
    q = np.empty(K)
    for i, pi in enumerate(p):
        q[i] = min(min(K * srt[k] / (k + 1) for k in range(K) if srt[k] >= pi), 1.0)
    return q


def test_restandardized_arithmetic_example():
    assert restandardized_value(1.0, 1.17, 0.82, 0.82, 0.60) == pytest.approx(1.416, abs=5e-4)


def test_standardize_identity_case():
    z = np.array([2.0, 1.0, -1.0])
    s, side = standardize_score("mean", z, [0], weights=np.array([0, 1, 1]))
    # basis (1, -1) has mean 0 and sd 1
    assert (s, side) == (2.0, "positive")


def test_standardize_maxmean_side():
    z = np.array([-3.0, -2.0, 0.5, 0.1, 0.2, -0.1])
    s, side = standardize_score("maxmean", z, [0, 1])
    assert side == "negative" and s > 0


def test_standardize_degenerate():
    with pytest.raises(DegenerateStatisticError):
        standardize_score("mean", np.zeros(10), [0, 1])
    with pytest.raises(DegenerateStatisticError):
        standardize_score("maxmean", np.zeros(10), [0, 1])


def test_standardize_ks_uses_random_sets():
    rng = np.random.default_rng(2)
    z = rng.normal(size=300)
    z[:15] += 2
    s, side = standardize_score("ks_signed", z, np.arange(15), ks_draws=400, seed=1)
    assert side == "positive" and s > 3


def test_pvalue_examples():
    p, lo, hi = pvalues([2.5], [[1, 2, 3, 4]])
    assert p[0] == 0.5 and lo is None and hi is None
    assert pvalues([9.0], [[1, 2, 3, 4]])[0][0] == 0.0
    assert pvalues([9.0], [[1, 2, 3, 4]], add_one=True)[0][0] == 0.2
    assert pvalues([2.0], [[1, 2, 3, 4]])[0][0] == 0.75


def test_pvalues_signed_tails_and_nan():
    p, lo, hi = pvalues([2.0], [[1.0, np.nan, 3.0, 0.5]], [-2.0], [[-1.0, np.nan, 3.0, 0.5]])
    assert p[0] == pytest.approx(1 / 3)
    assert lo[0] == 0.0 and hi[0] == 1.0
    with pytest.raises(ValueError):
        pvalues([1.0], [[np.nan, np.nan]])


@given(
    st.lists(st.floats(-5, 5), min_size=1, max_size=30),
    st.floats(-5, 5),
    st.floats(0, 3),
)
def test_pvalue_monotone_in_observed(perm, obs, delta):
    a = pvalues([obs], [perm])[0][0]
    b = pvalues([obs + delta], [perm])[0][0]
    assert b <= a


def test_null_calibration_discrete_uniform():
    rng = np.random.default_rng(12)
    B, reps = 19, 2000
    draws = rng.normal(size=(reps, B + 1))
    p = pvalues(draws[:, 0], draws[:, 1:])[0]
    support = np.arange(B + 1) / B
    counts = np.array([(np.isclose(p, s)).sum() for s in support])
    assert counts.sum() == reps
    assert stats.chisquare(counts).pvalue > 0.01
    ecdf = np.cumsum(counts) / reps
    cdf = np.arange(1, B + 2) / (B + 1)
    assert np.max(np.abs(ecdf - cdf)) < 1.63 / np.sqrt(reps)


def test_bh_examples():
    q, sig = bh_fdr([0.01, 0.02, 0.5])
    assert np.allclose(q, [0.03, 0.03, 0.5])
    assert list(sig) == [0, 1]
    q, sig = bh_fdr([1.0, 1.0, 1.0])
    assert np.all(q == 1.0) and sig.size == 0
    assert bh_fdr([0.3])[0][0] == 0.3
    with pytest.raises(ValueError):
        bh_fdr([0.2, 1.5])


def test_bh_matches_definition_on_grid():
    grid = np.round(np.arange(0, 1.0001, 0.05), 2)
    rng = np.random.default_rng(0)
    for K in range(1, 4):
        for p in itertools.product(grid, repeat=K):
            assert np.allclose(bh_fdr(p)[0], brute_bh(p), rtol=0, atol=1e-12)
    for K in range(4, 7):
        for _ in range(3000):
            p = rng.choice(grid, K)
            assert np.allclose(bh_fdr(p)[0], brute_bh(p), rtol=0, atol=1e-12)


def test_row_randomization_full_set_and_size_one():
    rng = np.random.default_rng(1)
    z = rng.normal(size=40)
    full = row_randomization_scores(z, 40, "mean", 5, RandomStream(1))
    assert np.all(full == z.mean())
    with pytest.raises(ValueError):
        row_randomization_scores(z, 41, "mean", 5, RandomStream(1))

    zi = np.repeat([-1.0, 0.0, 2.0, 5.0], [10, 20, 30, 40])
    draws = row_randomization_scores(zi, 1, "mean", 20000, RandomStream(2))
    observed = np.array([(draws == v).sum() for v in (-1.0, 0.0, 2.0, 5.0)])
    assert observed.sum() == 20000
    assert stats.chisquare(observed, 20000 * np.array([0.1, 0.2, 0.3, 0.4])).pvalue > 0.01


def test_row_randomization_ks_matches_direct():
    rng = np.random.default_rng(8)
    z = rng.normal(size=60)
    stream = RandomStream(4)
    got = row_randomization_scores(z, 7, "ks_signed", 30, stream)
    from gsa.inference import random_subsets

    subsets = random_subsets(stream.generator(), 60, 7, 30)
    for r, g in zip(subsets, got):
        mask = np.zeros(60, bool)
        mask[r] = True
        assert g == set_ks_signed(z[mask], z[~mask])


def _small_dataset(seed, N=200, n=10, K=5):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(N, n))
    values[:8, n // 2 :] += 1.0
    from gsa.data import ExpressionMatrix

    m = ExpressionMatrix(
        values,
        tuple(f"g{i}" for i in range(N)),
        tuple(f"s{j}" for j in range(n)),
        np.repeat([1, 2], n // 2),
    )
    blocks = [np.sort(rng.choice(N, rng.integers(3, 20), replace=False)) for _ in range(K)]
    blocks[0] = np.arange(8)
    return m, resolved_from_indices(blocks)


@pytest.mark.parametrize("stat", ["mean", "mean_abs", "maxmean", "ks_signed"])
def test_identity_permutation_reproduces_observed(stat):
    m, res = _small_dataset(3)
    perms = np.vstack([np.arange(m.n_samples), PermutationPlan.generate(m.n_samples, 5, 1).permutations])
    plan = PermutationPlan(perms, 1)
    out = gene_set_analysis(m, res, [stat], plan=plan, threads=1)
    ps = permutation_scores(m, res, stat, plan)
    assert np.allclose(ps.s_prime[:, 0], out[stat].s_prime, rtol=0, atol=1e-12)


def test_zero_permutations_rejected():
    m, res = _small_dataset(3)
    plan = PermutationPlan.generate(m.n_samples, 0, 1)
    assert permutation_scores(m, res, "mean", plan).s_prime.shape == (5, 0)
    with pytest.raises(ValueError):
        gene_set_analysis(m, res, ["mean"], plan=plan)


def test_threads_do_not_change_results():
    m, res = _small_dataset(5)
    stats_ = ["mean", "mean_abs", "maxmean", "ks_signed"]
    a = gene_set_analysis(m, res, stats_, B=40, seed=3, threads=1)
    b = gene_set_analysis(m, res, stats_, B=40, seed=3, threads=4)
    for s in stats_:
        assert a[s].rows() == b[s].rows()


def test_signed_statistics_report_direction():
    m, res = _small_dataset(6)
    out = gene_set_analysis(m, res, ["mean", "maxmean", "ks"], B=100, seed=2, threads=1)
    for s in ("mean", "maxmean", "ks_signed"):
        t = out[s]
        assert t.side[0] == "positive"
        assert t.p[0] <= 0.05
        assert t.p_hi[0] <= 0.05 and t.p_lo[0] >= 0.9


def test_pooled_moments_option_runs_and_agrees_roughly():
    m, res = _small_dataset(7)
    a = gene_set_analysis(m, res, ["maxmean"], B=100, seed=2, threads=1)
    b = gene_set_analysis(m, res, ["maxmean"], B=100, seed=2, threads=1, perm_moments="pooled")
    assert np.array_equal(a["maxmean"].s_prime, b["maxmean"].s_prime)
    assert np.max(np.abs(a["maxmean"].p - b["maxmean"].p)) < 0.2


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_restandardized_p_equals_plain_p_of_standardized_statistic(seed):
    m, res = _small_dataset(seed, N=120, n=8, K=4)
    plan = PermutationPlan.generate(m.n_samples, 30, seed)
    out = gene_set_analysis(m, res, ["mean_abs"], plan=plan, moments_mode="all_genes", threads=1)
    p_plain = _plain_standardized_p(m, res, plan, ScoreFunction.ABSOLUTE)
    assert np.array_equal(out["mean_abs"].p, p_plain)


def _plain_standardized_p(m, res, plan, f):
    """Permutation p of T = (S - mean_s) / stdev_s, computed from scratch."""

    def T(z):
        s = f(z)
        return np.array([(s[r].mean() - s.mean()) / s.std() for r in (x.row_indices for x in res.sets)])

    obs = T(gene_scores(m).z)
    perm = np.column_stack(
        [T(gene_scores(m.with_labels(plan.labels(m.labels, b))).z) for b in range(plan.B)]
    )
    return (perm >= obs[:, None]).mean(axis=1)
