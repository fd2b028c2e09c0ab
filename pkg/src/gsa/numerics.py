"""Special functions and reproducible random streams.

The distribution functions are thin, vectorised wrappers over
``scipy.special`` with the domain checks and clamping the rest of the
package relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

# Quantile inputs are clamped to this band so z-values stay finite.
P_CLAMP = 1e-15


class DomainError(ValueError):
    """Raised when a numeric routine is called outside its domain."""


def _as_float(x):
    arr = np.asarray(x, dtype=float)
    return arr


def _scalar_or_array(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def normal_cdf(z):
    """Standard normal c.d.f., scalar or elementwise."""
    arr = _as_float(z)
    if not np.all(np.isfinite(arr)):
        raise DomainError("normal_cdf requires finite input")
    return _scalar_or_array(special.ndtr(arr), z)


def normal_quantile(p):
    """Inverse of :func:`normal_cdf` on the open interval (0, 1).

    Probabilities closer than ``P_CLAMP`` to 0 or 1 are clamped first.
    """
    arr = _as_float(p)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError("normal_quantile requires 0 < p < 1")
    arr = np.clip(arr, P_CLAMP, 1.0 - P_CLAMP)
    return _scalar_or_array(special.ndtri(arr), p)


def _check_df(df):
    if isinstance(df, (bool, np.bool_)) or int(df) != df or df < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {df!r}")
    return int(df)


def t_tail(t, df):
    """Upper tail ``P(T > |t|)`` of Student's t on ``df`` degrees of freedom.

    Evaluated as ``I_x(df/2, 1/2) / 2`` with ``x = df / (df + t**2)``, which
    keeps full relative precision far into the tail.
    """
    df = _check_df(df)
    arr = _as_float(t)
    if np.any(np.isnan(arr)):
        raise DomainError("t_tail requires non-NaN input")
    with np.errstate(divide="ignore", invalid="ignore"):
        x = df / (df + arr * arr)
    x = np.where(np.isinf(arr), 0.0, x)
    return 0.5 * special.betainc(0.5 * df, 0.5, x)


def t_cdf(t, df):
    """Student t c.d.f. via the regularised incomplete beta function."""
    tail = t_tail(t, df)
    arr = _as_float(t)
    out = np.where(arr > 0, 1.0 - tail, tail)
    return _scalar_or_array(out, t)


def t_to_z_values(t, df):
    """Map t-statistics to normal scores, ``z = Phi^-1(F_df(t))``.

    The map is computed from the far tail on both sides, so it is exactly
    odd in ``t`` and never produces infinities (tail clamped at P_CLAMP).
    """
    arr = _as_float(t)
    tail = np.maximum(t_tail(arr, df), P_CLAMP)
    mag = -special.ndtri(tail)
    out = np.where(arr == 0, 0.0, np.sign(arr) * mag)
    return _scalar_or_array(out, t)


def percentile(values, q):
    """Order statistic at index ``ceil(q * len) - 1`` (clamped) of the sorted values."""
    arr = np.sort(np.asarray(values, dtype=float).ravel())
    if arr.size == 0:
        raise DomainError("percentile of an empty sequence")
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"quantile level must lie in [0, 1], got {q}")
    idx = math.ceil(q * arr.size) - 1
    idx = min(max(idx, 0), arr.size - 1)
    return float(arr[idx])


@dataclass(frozen=True)
class RandomStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Streams are built on :class:`numpy.random.SeedSequence` spawn keys, so
    distinct ids give independent generators and work item ``b`` can use
    ``stream_id=b`` regardless of scheduling. ``path`` holds any further
    nesting levels created by :meth:`substream`.
    """

    seed: int
    stream_id: int = 0
    path: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for value in (self.seed, self.stream_id, *self.path):
            if not 0 <= int(value) < 2**64:
                raise DomainError("stream keys must be unsigned 64-bit integers")

    def substream(self, key: int) -> "RandomStream":
        return RandomStream(self.seed, self.stream_id, self.path + (int(key),))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            entropy=int(self.seed), spawn_key=(int(self.stream_id), *self.path)
        )
        return np.random.Generator(np.random.PCG64(ss))
