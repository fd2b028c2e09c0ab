"""Per-gene two-sample statistics and their transform to z-values."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .data import ExpressionMatrix, ResolvedCatalog
from .numerics import t_to_z_values

MomentsMode = Literal["multiplicity", "all_genes"]


class ZeroVarianceError(ValueError):
    def __init__(self, gene_ids):
        self.gene_ids = list(gene_ids)
        shown = ", ".join(self.gene_ids[:10])
        more = f" and {len(self.gene_ids) - 10} more" if len(self.gene_ids) > 10 else ""
        super().__init__(
            f"pooled variance is zero for {len(self.gene_ids)} gene(s): {shown}{more}"
        )


@dataclass(frozen=True)
class GeneScores:
    t: np.ndarray
    z: np.ndarray
    df: int


def pooled_t(values: np.ndarray, labels: np.ndarray, variance_floor: bool = False) -> np.ndarray:
    """Pooled-variance two-sample t, class 2 minus class 1, for every row.

    Rows with zero pooled variance give +-inf (or nan for a zero difference);
    callers decide whether that is an error.
    """
    in2 = labels == 2
    x1 = values[:, ~in2]
    x2 = values[:, in2]
    n1, n2 = x1.shape[1], x2.shape[1]
    m1 = x1.mean(axis=1)
    m2 = x2.mean(axis=1)
    ss = ((x1 - m1[:, None]) ** 2).sum(axis=1) + ((x2 - m2[:, None]) ** 2).sum(axis=1)
    sp = np.sqrt(ss / (n1 + n2 - 2))
    if variance_floor:
        nz = sp[sp > 0]
        if nz.size:
            sp = np.maximum(sp, 1e-8 * np.median(nz))
    with np.errstate(divide="ignore", invalid="ignore"):
        return (m2 - m1) / (sp * np.sqrt(1.0 / n1 + 1.0 / n2))


def two_sample_t(matrix: ExpressionMatrix, variance_floor: bool = False) -> np.ndarray:
    """Per-gene pooled two-sample t-statistics; positive means higher in class 2."""
    n1, n2 = matrix.class_sizes
    if n1 < 2 or n2 < 2:
        raise ValueError("each class needs at least 2 samples")
    t = pooled_t(matrix.values, matrix.labels, variance_floor)
    bad = ~np.isfinite(t)
    if bad.any():
        raise ZeroVarianceError(np.asarray(matrix.gene_ids)[bad])
    return t


def t_to_z(t, df: int) -> np.ndarray:
    """Elementwise ``Phi^-1(F_df(t))``."""
    return np.asarray(t_to_z_values(np.asarray(t, dtype=float), df))


def gene_scores(matrix: ExpressionMatrix, variance_floor: bool = False) -> GeneScores:
    t = two_sample_t(matrix, variance_floor)
    df = matrix.n_samples - 2
    return GeneScores(t, t_to_z(t, df), df)


def moment_weights(resolved: ResolvedCatalog, n_genes: int, mode: MomentsMode) -> np.ndarray:
    """How many times each gene enters the moment basis under ``mode``."""
    if mode == "all_genes":
        return np.ones(n_genes, dtype=np.int64)
    if mode != "multiplicity":
        raise ValueError(f"unknown moments mode {mode!r}")
    w = np.zeros(n_genes, dtype=np.int64)
    for s in resolved.sets:
        np.add.at(w, s.row_indices, 1)
    return w


def weighted_moments(s: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Population mean and standard deviation of ``s`` with integer multiplicities."""
    total = weights.sum()
    if total < 2:
        raise ValueError(f"moment basis has {total} element(s); need at least 2")
    mean = float(np.dot(weights, s) / total)
    var = float(np.dot(weights, (s - mean) ** 2) / total)
    return mean, float(np.sqrt(var))


def catalog_score_moments(
    s, resolved: ResolvedCatalog, mode: MomentsMode = "multiplicity"
) -> tuple[float, float]:
    """(mean_s, stdev_s) of gene scores ``s`` over the catalog basis.

    ``multiplicity`` counts a gene once per set it belongs to; ``all_genes``
    counts every gene once. The standard deviation uses divisor = count.
    """
    s = np.asarray(s, dtype=float)
    return weighted_moments(s, moment_weights(resolved, s.size, mode))
