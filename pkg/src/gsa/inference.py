"""Permutation engine, row randomization, restandardization and FDR.

The observed data and every permuted dataset go through the same path:
t-statistics, z-values, catalog moments of the gene scores, then one
standardized score per gene-set. A gene-set's p-value compares its observed
standardized score with its own permutation values only.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .data import ExpressionMatrix, ResolvedCatalog, resolved_from_indices
from .gene_scores import (
    GeneScores,
    MomentsMode,
    gene_scores,
    moment_weights,
    pooled_t,
    t_to_z,
    weighted_moments,
)
from .numerics import RandomStream
from .statistics import ScoreFunction, SetStatistic, ks_signed_batch

log = logging.getLogger(__name__)

PermMoments = Literal["per_permutation", "pooled"]

# stream path reserved for the random gene-sets behind KS moments
_KS_STREAM = 1


class DegenerateStatisticError(ValueError):
    """A randomization standard deviation is zero, so S' is undefined."""


@dataclass(frozen=True)
class PermutationPlan:
    """B column permutations; permutation b is drawn from stream ``(seed, b)``.

    ``permutations[b]`` is an index array: permuted labels are
    ``labels[permutations[b]]``, so class sizes are preserved.
    """

    permutations: np.ndarray
    seed: int = 0

    @classmethod
    def generate(cls, n_samples: int, B: int = 1000, seed: int = 0) -> "PermutationPlan":
        if B < 0:
            raise ValueError("number of permutations must be nonnegative")
        perms = np.empty((B, n_samples), dtype=np.int64)
        for b in range(B):
            perms[b] = RandomStream(seed, b).generator().permutation(n_samples)
        return cls(perms, seed)

    @classmethod
    def for_matrix(cls, matrix: ExpressionMatrix, B: int = 1000, seed: int = 0) -> "PermutationPlan":
        return cls.generate(matrix.n_samples, B, seed)

    @property
    def B(self) -> int:
        return int(self.permutations.shape[0])

    def labels(self, labels: np.ndarray, b: int) -> np.ndarray:
        return np.asarray(labels)[self.permutations[b]]


def restandardized_value(s_star, mean_s, stdev_s, mean_star, stdev_star):
    """Permutation value S* rescaled to the observed score moments (S**)."""
    return mean_s + (stdev_s / stdev_star) * (np.asarray(s_star, dtype=float) - mean_star)


def random_subsets(gen: np.random.Generator, N: int, m: int, R: int) -> np.ndarray:
    """R independent uniform m-subsets of range(N), as an R x m index array."""
    if m > N:
        raise ValueError(f"cannot draw {m} genes from {N}")
    if m == N:
        return np.tile(np.arange(N), (R, 1))
    keys = gen.random((R, N))
    return np.sort(np.argpartition(keys, m - 1, axis=1)[:, :m], axis=1)


def row_randomization_scores(
    z, m: int, stat: SetStatistic | ScoreFunction | str, R: int, stream: RandomStream
) -> np.ndarray:
    """Statistic values for R random m-subsets of the genes (S-dagger draws).

    ``stat`` may be a set statistic or a score function (set average of it).
    For maxmean the raw maxmean value is returned.
    """
    z = np.asarray(z, dtype=float)
    if R < 1:
        raise ValueError("need at least one draw")
    subsets = random_subsets(stream.generator(), z.size, m, R)
    if isinstance(stat, ScoreFunction) or str(stat) in {f.value for f in ScoreFunction}:
        return ScoreFunction(stat)(z)[subsets].mean(axis=1)
    stat = SetStatistic.parse(stat)
    if stat is SetStatistic.KS_SIGNED:
        if m == z.size:
            raise ValueError("signed KS needs a nonempty complement")
        return ks_signed_batch(z, subsets)
    if stat is SetStatistic.MAXMEAN:
        zs = z[subsets]
        return np.maximum(np.maximum(zs, 0).sum(axis=1), np.maximum(-zs, 0).sum(axis=1)) / m
    return stat.score_functions[0](z)[subsets].mean(axis=1)


@dataclass
class _Components:
    """Raw per-set statistics and moment inputs for one dataset."""

    raw: dict = field(default_factory=dict)       # stat -> (K,) or (K, 2) array
    moments: dict = field(default_factory=dict)   # ScoreFunction -> (count, mean, sd)
    ks_draws: dict = field(default_factory=dict)  # set size -> (R,) array


class _Engine:
    """Evaluates all requested statistics for any z vector over one catalog."""

    def __init__(
        self,
        resolved: ResolvedCatalog,
        n_genes: int,
        statistics: Sequence[SetStatistic],
        moments_mode: MomentsMode,
        ks_draws: int,
        seed: int,
        weights: np.ndarray | None = None,
    ):
        self.stats = list(statistics)
        self.K = len(resolved)
        self.sizes = resolved.sizes.astype(float)
        self.N = n_genes
        if weights is None:
            weights = moment_weights(resolved, n_genes, moments_mode)
        self.weights = np.asarray(weights, dtype=np.int64)
        if self.weights.sum() < 2:
            raise ValueError("moment basis has fewer than 2 elements")
        self.funcs = sorted({f for s in self.stats for f in s.score_functions}, key=str)
        self.member_rows = [s.row_indices for s in resolved.sets]
        self._flat = np.concatenate(self.member_rows)
        self._offsets = np.concatenate([[0], np.cumsum(resolved.sizes)[:-1]]).astype(np.int64)
        self.subsets = {}
        self.by_size: dict[int, list[int]] = {}
        if SetStatistic.KS_SIGNED in self.stats:
            if ks_draws < 2:
                raise ValueError("ks_signed needs at least 2 row-randomization draws")
            for k, idx in enumerate(self.member_rows):
                self.by_size.setdefault(int(idx.size), []).append(k)
            for m in sorted(self.by_size):
                if m >= n_genes:
                    raise ValueError("ks_signed needs every set to leave a nonempty complement")
                gen = RandomStream(seed, m, (_KS_STREAM,)).generator()
                self.subsets[m] = random_subsets(gen, n_genes, m, ks_draws)

    def _set_means(self, s: np.ndarray) -> np.ndarray:
        return np.add.reduceat(s[self._flat], self._offsets) / self.sizes

    def _ks_sets(self, z, zs) -> np.ndarray:
        out = np.empty(self.K)
        for ks in self.by_size.values():
            rows = np.stack([self.member_rows[k] for k in ks])
            out[ks] = ks_signed_batch(z, rows, zs)
        return out

    def evaluate(self, z: np.ndarray) -> _Components:
        c = _Components()
        scores = {f: f(z) for f in self.funcs}
        w = self.weights
        for f in self.funcs:
            mean, sd = weighted_moments(scores[f], w)
            c.moments[f] = (float(w.sum()), mean, sd)
        for stat in self.stats:
            if stat is SetStatistic.MAXMEAN:
                c.raw[stat] = np.column_stack(
                    [
                        self._set_means(scores[ScoreFunction.POSITIVE_PART]),
                        self._set_means(scores[ScoreFunction.NEGATIVE_PART]),
                    ]
                )
            elif stat is SetStatistic.KS_SIGNED:
                zs = np.sort(z)
                c.raw[stat] = self._ks_sets(z, zs)
                c.ks_draws = {m: ks_signed_batch(z, sub, zs) for m, sub in self.subsets.items()}
            else:
                c.raw[stat] = self._set_means(scores[stat.score_functions[0]])
        return c


def _own_moments(c: _Components) -> dict:
    return {f: (mean, sd) for f, (_, mean, sd) in c.moments.items()}


@dataclass(frozen=True)
class Standardized:
    """Standardized scores for one statistic over K sets.

    ``s_prime`` is S' (signed for mean and ks_signed), ``side`` is +1/-1, and
    ``test`` is the upper-tail test quantity (|S'| for signed statistics).
    """

    raw: np.ndarray
    s_prime: np.ndarray
    side: np.ndarray
    signed_score: np.ndarray
    test: np.ndarray


def _standardize(
    stat: SetStatistic,
    c: _Components,
    sizes: np.ndarray,
    moments: dict | None,
    ks_moments: dict | None,
    member_sizes: Sequence[int],
    restandardize: bool,
    strict: bool,
) -> Standardized:
    """Apply the standardization recipe for ``stat`` to one dataset's components.

    ``moments`` maps score functions to (mean, sd); ``ks_moments`` maps set
    size to (mu, sigma). When ``strict`` a zero scale raises, otherwise the
    affected cells become NaN.
    """
    raw_parts = c.raw[stat]
    root_m = np.sqrt(sizes)

    def scale(values, mean, sd, what):
        if not sd > 0:
            if strict:
                raise DegenerateStatisticError(
                    f"{stat.value}: zero randomization standard deviation for {what}"
                )
            return np.full_like(values, np.nan)
        return (values - mean) / (sd / root_m)

    if stat is SetStatistic.MAXMEAN:
        plus, minus = raw_parts[:, 0], raw_parts[:, 1]
        raw = np.maximum(plus, minus)
        if restandardize:
            a = scale(plus, *moments[ScoreFunction.POSITIVE_PART], "positive parts")
            b = scale(minus, *moments[ScoreFunction.NEGATIVE_PART], "negative parts")
        else:
            a, b = plus, minus
        side = np.where(b > a, -1, 1)
        s_prime = np.where(b > a, b, a)
        s_prime = np.where(np.isnan(a) | np.isnan(b), np.nan, s_prime)
        return Standardized(raw, s_prime, side, side * s_prime, s_prime)

    if stat is SetStatistic.KS_SIGNED:
        raw = raw_parts
        if restandardize:
            mu = np.array([ks_moments[m][0] for m in member_sizes])
            sigma = np.array([ks_moments[m][1] for m in member_sizes])
            bad = ~(sigma > 0)
            if bad.any() and strict:
                raise DegenerateStatisticError(
                    "ks_signed: zero row-randomization standard deviation"
                )
            with np.errstate(divide="ignore", invalid="ignore"):
                s_prime = np.where(bad, np.nan, (raw - mu) / sigma)
        else:
            s_prime = raw.astype(float)
    else:
        raw = raw_parts
        f = stat.score_functions[0]
        s_prime = scale(raw, *moments[f], f.value) if restandardize else raw.astype(float)

    if stat.signed:
        side = np.where(s_prime < 0, -1, 1)
        return Standardized(raw, s_prime, side, s_prime, np.abs(s_prime))
    side = np.ones(raw.shape, dtype=int)
    return Standardized(raw, s_prime, side, s_prime, s_prime)


def _ks_moments_single(c: _Components) -> dict:
    return {m: (float(d.mean()), float(d.std())) for m, d in c.ks_draws.items()}


def standardize_score(
    stat: SetStatistic | str,
    z,
    row_indices,
    weights=None,
    ks_draws: int = 200,
    seed: int = 0,
) -> tuple[float, str]:
    """Standardized score S' and side for a single gene-set.

    ``weights`` gives the moment basis (gene multiplicities, default all ones).
    For ks_signed the randomization moments come from ``ks_draws`` random sets.
    """
    stat = SetStatistic.parse(stat)
    z = np.asarray(z, dtype=float)
    idx = np.asarray(row_indices, dtype=np.int64)
    resolved = resolved_from_indices([idx])
    engine = _Engine(resolved, z.size, [stat], "all_genes", ks_draws, seed, weights)
    c = engine.evaluate(z)
    moments = _own_moments(c)
    res = _standardize(
        stat, c, engine.sizes, moments, _ks_moments_single(c), [idx.size], True, True
    )
    return float(res.s_prime[0]), "positive" if res.side[0] > 0 else "negative"


@dataclass(frozen=True)
class PermutationScores:
    """Standardized permutation values, K sets x B permutations."""

    s_prime: np.ndarray
    signed_score: np.ndarray
    test: np.ndarray
    n_degenerate: int


def _pvalue_counts(obs, perm, valid):
    return ((perm >= obs[:, None]) & valid).sum(axis=1)


def pvalues(
    observed,
    permuted,
    observed_signed=None,
    permuted_signed=None,
    add_one: bool = False,
):
    """Permutation p-values per set.

    ``p`` counts permutation values at or above the observed one. When signed
    scores are given, ``p_hi`` and ``p_lo`` are the upper and lower tail
    fractions of the signed score. NaN permutation values are excluded from
    both numerator and denominator.

    Returns ``(p, p_lo, p_hi)``; the tail arrays are None without signed input.
    """
    obs = np.atleast_1d(np.asarray(observed, dtype=float))
    perm = np.asarray(permuted, dtype=float)
    if perm.ndim == 1:
        perm = perm[None, :]
    valid = ~np.isnan(perm)
    n = valid.sum(axis=1)
    if (n == 0).any():
        raise ValueError("p-value needs at least one valid permutation value")
    extra = 1 if add_one else 0

    def frac(counts):
        return (counts + extra) / (n + extra)

    p = frac(_pvalue_counts(obs, perm, valid))
    if observed_signed is None:
        return p, None, None
    sig = np.atleast_1d(np.asarray(observed_signed, dtype=float))
    sperm = np.asarray(permuted_signed, dtype=float)
    if sperm.ndim == 1:
        sperm = sperm[None, :]
    p_hi = frac(((sperm >= sig[:, None]) & valid).sum(axis=1))
    p_lo = frac(((sperm <= sig[:, None]) & valid).sum(axis=1))
    return p, p_lo, p_hi


def bh_fdr(p, q_cut: float = 0.10):
    """Benjamini-Hochberg step-up q-values and the indices with q <= q_cut."""
    p = np.asarray(p, dtype=float)
    K = p.size
    if K == 0:
        return p.copy(), np.array([], dtype=np.int64)
    if ((p < 0) | (p > 1) | np.isnan(p)).any():
        raise ValueError("p-values must lie in [0, 1]")
    order = np.argsort(p, kind="stable")
    ranked = p[order] * K / np.arange(1, K + 1)
    q_sorted = np.minimum.accumulate(ranked[::-1])[::-1]
    q = np.empty(K)
    q[order] = q_sorted
    return q, np.flatnonzero(q <= q_cut)


@dataclass
class SetScoreTable:
    """Per-set results for one statistic, in catalog order."""

    statistic: str
    names: list[str]
    m: np.ndarray
    raw: np.ndarray
    s_prime: np.ndarray
    side: list[str]
    p: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    q: np.ndarray
    n_valid: np.ndarray
    perm_scores: PermutationScores | None = None

    def __len__(self):
        return len(self.names)

    def order(self) -> list[int]:
        """Row order by p-value, then name."""
        return sorted(range(len(self.names)), key=lambda k: (self.p[k], self.names[k]))

    def significant(self, q_cut: float = 0.10) -> list[str]:
        return [self.names[k] for k in self.order() if self.q[k] <= q_cut]

    def tail_qvalues(self) -> tuple[np.ndarray, np.ndarray]:
        """BH q-values computed separately on p_lo and p_hi."""
        return bh_fdr(self.p_lo)[0], bh_fdr(self.p_hi)[0]

    def rows(self) -> list[dict]:
        return [
            {
                "name": self.names[k],
                "m": int(self.m[k]),
                "raw": float(self.raw[k]),
                "s_prime": float(self.s_prime[k]),
                "side": self.side[k],
                "p": float(self.p[k]),
                "p_lo": float(self.p_lo[k]),
                "p_hi": float(self.p_hi[k]),
                "q": float(self.q[k]),
            }
            for k in self.order()
        ]


@dataclass
class AnalysisResult:
    gene_scores: GeneScores
    tables: dict[str, SetScoreTable]
    plan: PermutationPlan
    resolved: ResolvedCatalog

    def __getitem__(self, stat) -> SetScoreTable:
        return self.tables[SetStatistic.parse(stat).value]


def _default_threads() -> int:
    env = os.environ.get("GSA_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _permuted_components(engine, matrix, plan, variance_floor, threads) -> list[_Components]:
    values, labels = matrix.values, matrix.labels
    df = matrix.n_samples - 2

    def work(b):
        t = pooled_t(values, plan.labels(labels, b), variance_floor)
        # zero pooled variance under a permutation gives +-inf, clamped by t_to_z
        t = np.where(np.isnan(t), 0.0, t)
        return engine.evaluate(t_to_z(t, df))

    if threads <= 1 or plan.B < 2:
        return [work(b) for b in range(plan.B)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, range(plan.B)))


def _pooled_moments(comps: list[_Components], funcs) -> dict:
    out = {}
    for f in funcs:
        n = np.array([c.moments[f][0] for c in comps])
        mu = np.array([c.moments[f][1] for c in comps])
        sd = np.array([c.moments[f][2] for c in comps])
        grand = float(np.dot(n, mu) / n.sum())
        var = float(np.dot(n, sd**2 + (mu - grand) ** 2) / n.sum())
        out[f] = (grand, math.sqrt(var))
    return out


def _pooled_ks(comps: list[_Components]) -> dict:
    if not comps or not comps[0].ks_draws:
        return {}
    return {
        m: (float(d.mean()), float(d.std()))
        for m in comps[0].ks_draws
        for d in [np.concatenate([c.ks_draws[m] for c in comps])]
    }


def _score_permutations(
    engine, stat, comps, perm_moments, restandardize
) -> PermutationScores:
    K, B = engine.K, len(comps)
    sp = np.full((K, B), np.nan)
    sg = np.full((K, B), np.nan)
    ts = np.full((K, B), np.nan)
    sizes = [int(m) for m in engine.sizes]
    pooled = pooled_ks = None
    if perm_moments == "pooled":
        pooled = _pooled_moments(comps, engine.funcs)
        pooled_ks = _pooled_ks(comps)
    elif perm_moments != "per_permutation":
        raise ValueError(f"unknown permutation-moments mode {perm_moments!r}")
    for b, c in enumerate(comps):
        if pooled is None:
            moments = _own_moments(c)
            ks_m = _ks_moments_single(c)
        else:
            moments, ks_m = pooled, pooled_ks
        res = _standardize(stat, c, engine.sizes, moments, ks_m, sizes, restandardize, False)
        sp[:, b], sg[:, b], ts[:, b] = res.s_prime, res.signed_score, res.test
    n_bad = int(np.isnan(ts).sum())
    if n_bad:
        log.warning("%s: %d degenerate permutation cells excluded", stat.value, n_bad)
    return PermutationScores(sp, sg, ts, n_bad)


def permutation_scores(
    matrix: ExpressionMatrix,
    resolved: ResolvedCatalog,
    stat: SetStatistic | str,
    plan: PermutationPlan,
    moments_mode: MomentsMode = "multiplicity",
    perm_moments: PermMoments = "per_permutation",
    restandardize: bool = True,
    ks_draws: int = 200,
    variance_floor: bool = False,
    threads: int = 1,
) -> PermutationScores:
    """Standardized statistic for every set on every permuted dataset (K x B).

    Each permuted dataset is standardized by its own catalog moments unless
    ``perm_moments='pooled'``. Column b depends only on permutation b.
    """
    stat = SetStatistic.parse(stat)
    engine = _Engine(resolved, matrix.n_genes, [stat], moments_mode, ks_draws, plan.seed)
    comps = _permuted_components(engine, matrix, plan, variance_floor, threads)
    return _score_permutations(engine, stat, comps, perm_moments, restandardize)


def gene_set_analysis(
    matrix: ExpressionMatrix,
    resolved: ResolvedCatalog,
    statistics: Iterable[SetStatistic | str] = ("maxmean",),
    B: int = 1000,
    seed: int = 0,
    plan: PermutationPlan | None = None,
    moments_mode: MomentsMode = "multiplicity",
    perm_moments: PermMoments = "per_permutation",
    restandardize: bool = True,
    add_one: bool = False,
    ks_draws: int = 200,
    variance_floor: bool = False,
    threads: int | None = None,
    keep_permutations: bool = False,
) -> AnalysisResult:
    """Run the full gene-set analysis for one catalog.

    Gene z-values are computed once per dataset (observed and each permutation)
    and shared by all requested statistics. Returns one SetScoreTable per
    statistic with p-values and BH q-values.
    """
    stats = [SetStatistic.parse(s) for s in statistics]
    if not stats:
        raise ValueError("no statistics requested")
    if plan is None:
        plan = PermutationPlan.for_matrix(matrix, B, seed)
    if plan.permutations.shape[1] != matrix.n_samples:
        raise ValueError("permutation plan does not match the number of samples")
    threads = _default_threads() if threads is None else max(1, int(threads))

    scores = gene_scores(matrix, variance_floor)
    engine = _Engine(resolved, matrix.n_genes, stats, moments_mode, ks_draws, plan.seed)
    obs = engine.evaluate(scores.z)
    obs_moments = _own_moments(obs)
    obs_ks = _ks_moments_single(obs)
    comps = _permuted_components(engine, matrix, plan, variance_floor, threads)
    sizes = [s.m for s in resolved.sets]

    tables = {}
    for stat in stats:
        o = _standardize(stat, obs, engine.sizes, obs_moments, obs_ks, sizes, restandardize, True)
        ps = _score_permutations(engine, stat, comps, perm_moments, restandardize)
        if plan.B == 0:
            raise ValueError("p-values are undefined with zero permutations")
        p, p_lo, p_hi = pvalues(o.test, ps.test, o.signed_score, ps.signed_score, add_one)
        q, _ = bh_fdr(p)
        tables[stat.value] = SetScoreTable(
            statistic=stat.value,
            names=resolved.names,
            m=resolved.sizes,
            raw=np.asarray(o.raw, dtype=float),
            s_prime=o.s_prime,
            side=["positive" if s > 0 else "negative" for s in o.side],
            p=p,
            p_lo=p_lo,
            p_hi=p_hi,
            q=q,
            n_valid=(~np.isnan(ps.test)).sum(axis=1),
            perm_scores=ps if keep_permutations else None,
        )
    return AnalysisResult(scores, tables, plan, resolved)
