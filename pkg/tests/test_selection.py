import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gsa.numerics import RandomStream
from gsa.selection import (
    MLENotFoundError,
    TiltedModel,
    TiltOverflowError,
    mle_beta,
    sample_subset,
    sample_subsets,
    subset_log_prob,
    tilted_mean,
)


def enumerate_probs(s, beta, m):
    """Exhaustive subset probabilities from the unnormalised tilt."""
    subsets = list(itertools.combinations(range(len(s)), m))
    w = np.array([math.exp(beta * sum(s[i] for i in c)) for c in subsets])
    return subsets, w / w.sum()


def frequency_chisquare(model, stream, draws):
    subsets, probs = enumerate_probs(list(model.s), model.beta, model.m)
    idx = {c: k for k, c in enumerate(subsets)}
    got = sample_subsets(model, stream, draws)
    counts = np.zeros(len(subsets))
    for row in got:
        counts[idx[tuple(row)]] += 1
    if len(subsets) == 1:
        return 1.0
    return stats.chisquare(counts, draws * probs).pvalue


def test_uniform_log_prob():
    model = TiltedModel(np.arange(6.0), 0.0, 3)
    for c in itertools.combinations(range(6), 3):
        assert subset_log_prob(model, c) == pytest.approx(-math.log(math.comb(6, 3)))


def test_two_gene_example():
    model = TiltedModel(np.array([0.0, math.log(2)]), 1.0, 1)
    assert math.exp(subset_log_prob(model, [0])) == pytest.approx(1 / 3)
    assert math.exp(subset_log_prob(model, [1])) == pytest.approx(2 / 3)
    draws = sample_subsets(model, RandomStream(3), 20000)
    assert abs((draws[:, 0] == 1).mean() - 2 / 3) < 0.02


def test_probabilities_sum_to_one_and_match_enumeration():
    rng = np.random.default_rng(0)
    s = rng.normal(size=6)
    model = TiltedModel(s, 0.7, 3)
    subsets, probs = enumerate_probs(list(s), 0.7, 3)
    lp = np.array([subset_log_prob(model, c) for c in subsets])
    assert np.exp(lp).sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(np.exp(lp), probs, rtol=1e-12)


def test_subset_validation():
    model = TiltedModel(np.arange(5.0), 0.3, 2)
    with pytest.raises(ValueError):
        subset_log_prob(model, [1, 1])
    with pytest.raises(ValueError):
        subset_log_prob(model, [1, 2, 3])
    with pytest.raises(ValueError):
        subset_log_prob(model, [1, 7])


def test_uniform_sampler_chi_square():
    model = TiltedModel(np.arange(5.0), 0.0, 2)
    assert frequency_chisquare(model, RandomStream(1), 20000) > 0.01


def test_full_set_forced():
    model = TiltedModel(np.arange(4.0), 2.0, 4)
    assert np.all(sample_subsets(model, RandomStream(0), 10) == np.arange(4))
    assert list(sample_subset(model, RandomStream(0))) == [0, 1, 2, 3]


def test_overflow_is_reported():
    with pytest.raises(TiltOverflowError, match="rescale"):
        TiltedModel(np.array([1e308, 0.0]), 10.0, 1)


def test_samples_are_sorted_distinct():
    model = TiltedModel(np.random.default_rng(1).normal(size=30), 1.2, 7)
    draws = sample_subsets(model, RandomStream(2), 500)
    assert np.all(np.diff(draws, axis=1) > 0)


def test_tilt_direction():
    s = np.random.default_rng(2).normal(size=40)
    means = []
    for beta in (-1.0, 0.0, 0.5, 1.0, 2.0):
        draws = sample_subsets(TiltedModel(s, beta, 5), RandomStream(5), 4000)
        means.append(s[draws].mean())
    assert np.all(np.diff(means) > 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-5, 5))
def test_shift_invariance(seed, beta, c):
    s = np.random.default_rng(seed).normal(size=6)
    a, b = TiltedModel(s, beta, 3), TiltedModel(s + c, beta, 3)
    for sub in itertools.combinations(range(6), 3):
        assert subset_log_prob(a, sub) == pytest.approx(subset_log_prob(b, sub), abs=1e-9)
    subset = [0, 2, 4]
    srt = np.sort(s)
    if srt[:3].mean() < s[subset].mean() < srt[3:].mean():
        assert mle_beta(s + c, subset) == pytest.approx(mle_beta(s, subset), abs=1e-8)
        assert mle_beta(s + c, subset, method="tilted_mean") == pytest.approx(
            mle_beta(s, subset, method="tilted_mean"), abs=1e-8
        )


def test_mle_zero_when_subset_mean_is_global_mean():
    s = np.array([-1.0, 1.0, -2.0, 2.0, 0.5, -0.5])
    for method in ("conditional", "tilted_mean"):
        assert mle_beta(s, [0, 1], method=method) == 0.0
        assert mle_beta(s, [2, 3, 4, 5], method=method) == 0.0


def test_mle_boundary_and_constant():
    for method in ("conditional", "tilted_mean"):
        with pytest.raises(MLENotFoundError):
            mle_beta([0.0, 1.0], [1], method=method)
        with pytest.raises(MLENotFoundError):
            mle_beta([2.0, 2.0, 2.0], [0], method=method)
    # the top two genes are the most extreme 2-subset possible
    with pytest.raises(MLENotFoundError):
        mle_beta([0.0, 1.0, 2.0, 3.0], [2, 3])


def test_mle_solves_its_estimating_equations():
    rng = np.random.default_rng(4)
    s = rng.normal(size=200)
    sub = np.argsort(s)[-30:-10]
    beta = mle_beta(s, sub, method="tilted_mean")
    assert abs(tilted_mean(s, beta)[0] - s[sub].mean()) <= 1e-10
    beta = mle_beta(s, sub)
    assert abs(TiltedModel(s, beta, sub.size).expected_mean() - s[sub].mean()) <= 1e-10
    assert beta > 0


def test_inclusion_probabilities_match_enumeration():
    s = np.random.default_rng(5).normal(size=7)
    model = TiltedModel(s, 0.8, 3)
    subsets, probs = enumerate_probs(list(s), 0.8, 3)
    want = np.zeros(7)
    for c, p in zip(subsets, probs):
        want[list(c)] += p
    assert np.allclose(model.inclusion_probabilities(), want, rtol=1e-12)


def test_methods_agree_for_small_sets():
    s = np.random.default_rng(6).normal(size=3000)
    sub = sample_subset(TiltedModel(s, 0.5, 10), RandomStream(2))
    a = mle_beta(s, sub)
    b = mle_beta(s, sub, method="tilted_mean")
    assert a == pytest.approx(b, abs=0.01)


@pytest.mark.slow
def test_mle_recovers_true_beta():
    s = np.random.default_rng(7).normal(size=5000)
    model = TiltedModel(s, 1.0, 500)
    sub = sample_subset(model, RandomStream(11))
    assert abs(mle_beta(s, sub) - 1.0) < 0.1


def test_sampler_matches_enumeration_small_grid():
    rng = np.random.default_rng(8)
    for N, m in [(3, 1), (4, 2), (6, 3), (8, 4)]:
        model = TiltedModel(rng.normal(size=N), 0.9, m)
        assert frequency_chisquare(model, RandomStream(N, m), 20000) > 0.01
