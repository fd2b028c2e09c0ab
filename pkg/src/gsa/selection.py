"""Exponentially tilted gene-set selection (scalar scores).

Gene i enters a selected set with weight ``exp(beta * s_i)``. Conditioning on
the set size m, the probability of a particular m-subset S is
``exp(beta * sum_S s_i) / e_m(w)`` where ``e_m`` is the elementary symmetric
polynomial of the weights. ``beta = 0`` makes every m-subset equally likely.

The normaliser is computed by a log-space dynamic programme over genes; the
same table drives exact sequential sampling.

Only scalar scores are supported. The alternative view in which selected
z-values come from a tilted density is not implemented separately; the
sampler's tilt direction (larger beta gives larger expected set means) is its
operational check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .numerics import RandomStream


class TiltOverflowError(OverflowError):
    pass


class MLENotFoundError(ValueError):
    """The tilted-mean equation has no finite solution."""


@dataclass(frozen=True)
class TiltedModel:
    s: np.ndarray
    beta: float
    m: int

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        object.__setattr__(self, "s", s)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("scores must be a nonempty vector")
        if not 0 <= self.m <= s.size:
            raise ValueError(f"set size {self.m} outside [0, {s.size}]")
        with np.errstate(over="ignore", invalid="ignore"):
            lw = self.beta * s
        if not np.isfinite(lw).all():
            raise TiltOverflowError(
                "beta * s is not finite; rescale the scores or reduce beta"
            )

    @property
    def N(self) -> int:
        return self.s.size

    @property
    def log_weights(self) -> np.ndarray:
        return self.beta * self.s

    @property
    def log_total(self) -> float:
        """log T = log sum_i exp(beta s_i)."""
        val = float(logsumexp(self.log_weights))
        if not np.isfinite(val):
            raise TiltOverflowError("log T is not finite; rescale the scores")
        return val

    def suffix_table(self) -> np.ndarray:
        """E[i, r] = log e_r(w_i, ..., w_{N-1}) for i = 0..N, r = 0..m."""
        N, m = self.N, self.m
        lw = self.log_weights
        E = np.full((N + 1, m + 1), -np.inf)
        E[N, 0] = 0.0
        for i in range(N - 1, -1, -1):
            E[i, 0] = 0.0
            if m:
                E[i, 1:] = np.logaddexp(E[i + 1, 1:], lw[i] + E[i + 1, :-1])
        return E

    def log_normalizer(self) -> float:
        """log of the sum over all m-subsets of exp(beta * sum_S s_i)."""
        return float(self.suffix_table()[0, self.m])

    def prefix_table(self) -> np.ndarray:
        """P[i, r] = log e_r(w_0, ..., w_{i-1}) for i = 0..N, r = 0..m."""
        N, m = self.N, self.m
        lw = self.log_weights
        P = np.full((N + 1, m + 1), -np.inf)
        P[:, 0] = 0.0
        for i in range(N):
            if m:
                P[i + 1, 1:] = np.logaddexp(P[i, 1:], lw[i] + P[i, :-1])
        return P

    def inclusion_probabilities(self) -> np.ndarray:
        """P(i in S) for every gene under the size-conditioned law; sums to m."""
        N, m = self.N, self.m
        if m == 0:
            return np.zeros(N)
        if m == N:
            return np.ones(N)
        E = self.suffix_table()
        P = self.prefix_table()
        # log e_{m-1} of the weights without gene i, split at i
        rest = logsumexp(P[:N, :m] + E[1:, :m][:, ::-1], axis=1)
        return np.exp(self.log_weights + rest - E[0, m])

    def expected_mean(self) -> float:
        """E[mean_S(s)] under the size-conditioned law."""
        return float(np.dot(self.inclusion_probabilities(), self.s) / self.m)


def log_tilt_weight(model: TiltedModel, subset) -> float:
    """The unnormalised tilt ``m * (beta * mean_S(s) - log T)``."""
    idx = np.asarray(subset, dtype=np.int64)
    return float(idx.size * (model.beta * model.s[idx].mean() - model.log_total))


def subset_log_prob(model: TiltedModel, subset) -> float:
    """Log-probability of an m-subset under the size-conditioned tilted law."""
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size != model.m:
        raise ValueError(f"subset has {idx.size} members, model expects {model.m}")
    if np.unique(idx).size != idx.size:
        raise ValueError("subset contains duplicate indices")
    if idx.size and (idx.min() < 0 or idx.max() >= model.N):
        raise ValueError("subset index out of range")
    if model.m == 0:
        return 0.0
    # log e_m(w / T) absorbs the m * log T term of the tilt
    log_norm = model.log_normalizer() - model.m * model.log_total
    return log_tilt_weight(model, idx) - log_norm


def sample_subsets(model: TiltedModel, stream: RandomStream, size: int) -> np.ndarray:
    """``size`` independent exact draws, each an ascending array of m indices.

    Gene i is included with probability ``w_i e_{r-1}(rest) / e_r(i..)`` given
    r slots still open, which reproduces the conditional law exactly.
    """
    N, m = model.N, model.m
    out = np.empty((size, m), dtype=np.int64)
    if m == 0 or size == 0:
        return out
    if m == N:
        out[:] = np.arange(N)
        return out
    E = model.suffix_table()
    lw = model.log_weights
    u = stream.generator().random((size, N))
    left = np.full(size, m)
    filled = np.zeros(size, dtype=np.int64)
    rows = np.arange(size)
    for i in range(N):
        open_ = left > 0
        if not open_.any():
            break
        r = np.maximum(left, 1)
        with np.errstate(invalid="ignore"):
            p = np.exp(lw[i] + E[i + 1, r - 1] - E[i, r])
        take = open_ & (u[:, i] < p)
        out[rows[take], filled[take]] = i
        filled += take
        left -= take
    return out


def sample_subset(model: TiltedModel, stream: RandomStream) -> np.ndarray:
    return sample_subsets(model, stream, 1)[0]


def tilted_mean(s: np.ndarray, beta: float) -> tuple[float, float]:
    """Mean and variance of s under weights exp(beta s)."""
    a = beta * s
    w = np.exp(a - a.max())
    w /= w.sum()
    mu = float(np.dot(w, s))
    var = float(np.dot(w, (s - mu) ** 2))
    return mu, var


def _grow_bracket(resid, step: float) -> tuple[float, float]:
    """Bracket the root of an increasing function, starting from beta = 0."""
    f0 = resid(0.0)
    lo, hi = (0.0, step) if f0 < 0 else (-step, 0.0)
    while resid(hi) < 0:
        lo, hi = hi, 2 * hi
    while resid(lo) > 0:
        lo, hi = 2 * lo, lo
    return lo, hi


def mle_beta(
    s,
    observed_subset,
    method: Literal["conditional", "tilted_mean"] = "conditional",
    tol: float = 1e-12,
    max_iter: int = 200,
) -> float:
    """Maximum-likelihood tilt for an observed gene-set.

    ``method="conditional"`` (default) maximises the likelihood of the
    size-conditioned law that :func:`sample_subsets` draws from, by solving
    ``E_beta[mean_S(s) | m] = mean(s[subset])``. ``method="tilted_mean"``
    solves ``sum s_i e^{beta s_i} / sum e^{beta s_i} = mean(s[subset])``, the
    estimate for independent Poisson selection with replacement. The two agree
    when every inclusion probability is small (m much smaller than N); for
    larger sets the tilted-mean root is biased toward zero.

    Both left-hand sides increase strictly with beta, so a bracket is grown
    from 0 and refined.
    """
    s = np.asarray(s, dtype=float)
    idx = np.asarray(observed_subset, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("observed subset is empty")
    if np.unique(idx).size != idx.size:
        raise ValueError("observed subset contains duplicate indices")
    if np.ptp(s) == 0:
        raise MLENotFoundError("scores are constant; beta is not identifiable")
    target = float(s[idx].mean())
    step = 1.0 / np.std(s)

    if method == "conditional":
        m = idx.size
        srt = np.sort(s)
        lo_mean, hi_mean = srt[:m].mean(), srt[-m:].mean()
        if not lo_mean < target < hi_mean:
            raise MLENotFoundError(
                f"subset mean {target} is not strictly between the smallest and largest "
                f"possible means of {m} genes [{lo_mean}, {hi_mean}]; no finite "
                "maximum-likelihood tilt"
            )
        if target == s.mean():
            return 0.0

        def resid(beta):
            return TiltedModel(s, beta, m).expected_mean() - target

        lo, hi = _grow_bracket(resid, step)
        return float(brentq(resid, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=max_iter))

    if method != "tilted_mean":
        raise ValueError(f"unknown method {method!r}")
    if not s.min() < target < s.max():
        raise MLENotFoundError(
            f"subset mean {target} is not strictly inside the score range "
            f"[{s.min()}, {s.max()}]; no finite maximum-likelihood tilt"
        )

    def resid_var(beta):
        mu, var = tilted_mean(s, beta)
        return mu - target, var

    if resid_var(0.0)[0] == 0.0:
        return 0.0
    lo, hi = _grow_bracket(lambda b: resid_var(b)[0], step)
    beta = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f, var = resid_var(beta)
        if abs(f) <= tol:
            break
        if f < 0:
            lo = beta
        else:
            hi = beta
        nxt = beta - f / var if var > 0 else np.nan
        beta = nxt if lo < nxt < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, abs(beta)):
            break
    return float(beta)
