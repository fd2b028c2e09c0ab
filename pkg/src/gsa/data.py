"""Expression matrices, gene-set catalogs and their resolution."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class LoadError(ValueError):
    """Malformed input file; the message carries the offending location."""


class ResolutionError(ValueError):
    """No gene-set survived resolution against the expression matrix."""


@dataclass(frozen=True)
class ExpressionMatrix:
    """An N x n matrix of expression values with two-class sample labels.

    ``labels`` holds 1 or 2 per sample column.
    """

    values: np.ndarray
    gene_ids: tuple[str, ...]
    sample_ids: tuple[str, ...]
    labels: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)
        if values.ndim != 2:
            raise ValueError("expression values must be a 2-d array")
        N, n = values.shape
        if N < 1:
            raise ValueError("expression matrix has no genes")
        if n < 4:
            raise ValueError(f"need at least 4 samples, got {n}")
        if len(self.gene_ids) != N:
            raise ValueError(f"{len(self.gene_ids)} gene ids for {N} rows")
        if len(self.sample_ids) != n:
            raise ValueError(f"{len(self.sample_ids)} sample ids for {n} columns")
        if labels.shape != (n,) or not np.isin(labels, (1, 2)).all():
            raise ValueError("labels must be one value in {1, 2} per sample")
        if not ((labels == 1).any() and (labels == 2).any()):
            raise ValueError("both classes must be nonempty")
        if len(set(self.gene_ids)) != N:
            raise ValueError("gene ids are not unique")
        if not np.isfinite(values).all():
            raise ValueError("expression values must be finite")
        values.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "gene_ids", tuple(self.gene_ids))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))

    @property
    def n_genes(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    @property
    def class_sizes(self) -> tuple[int, int]:
        return int((self.labels == 1).sum()), int((self.labels == 2).sum())

    def gene_index(self) -> dict[str, int]:
        return {g: i for i, g in enumerate(self.gene_ids)}

    def with_labels(self, labels) -> "ExpressionMatrix":
        return ExpressionMatrix(self.values, self.gene_ids, self.sample_ids, labels)


@dataclass(frozen=True)
class GeneSet:
    name: str
    description: str
    members: tuple[str, ...]


@dataclass(frozen=True)
class GeneSetCatalog:
    sets: tuple[GeneSet, ...]
    # number of duplicate member ids collapsed while loading
    duplicates_collapsed: int = 0

    def __post_init__(self):
        names = [s.name for s in self.sets]
        if len(set(names)) != len(names):
            raise ValueError("gene-set names must be unique")
        for s in self.sets:
            if not s.members:
                raise ValueError(f"gene-set {s.name!r} is empty")

    @classmethod
    def from_mapping(cls, mapping: dict[str, Sequence[str]]) -> "GeneSetCatalog":
        sets = tuple(GeneSet(k, "", tuple(dict.fromkeys(v))) for k, v in mapping.items())
        return cls(sets)

    def __len__(self):
        return len(self.sets)


@dataclass(frozen=True)
class ResolvedSet:
    name: str
    row_indices: np.ndarray
    dropped: int

    @property
    def m(self) -> int:
        return int(self.row_indices.size)


@dataclass(frozen=True)
class ResolvedCatalog:
    sets: tuple[ResolvedSet, ...]
    # (name, resolved size) of sets excluded by the size filter
    excluded: tuple[tuple[str, int], ...] = ()
    min_size: int = 1
    max_size: float = math.inf

    def __len__(self):
        return len(self.sets)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.sets]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.m for s in self.sets], dtype=np.int64)

    def to_catalog(self, matrix: ExpressionMatrix) -> GeneSetCatalog:
        """Surviving sets as a plain catalog of gene ids."""
        return GeneSetCatalog(
            tuple(
                GeneSet(s.name, "", tuple(matrix.gene_ids[i] for i in s.row_indices))
                for s in self.sets
            )
        )


def _read_tsv(path) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh, delimiter="\t")]


def _coerce_classes(raw: Sequence[str], where: str) -> np.ndarray:
    order = list(dict.fromkeys(raw))
    if len(order) != 2:
        raise LoadError(f"{where}: expected exactly 2 classes, found {len(order)}: {order}")
    codes = np.array([order.index(v) + 1 for v in raw], dtype=np.int64)
    for k, name in enumerate(order, start=1):
        if (codes == k).sum() < 2:
            raise LoadError(f"{where}: class {name!r} has fewer than 2 samples")
    return codes


def load_expression_tsv(path, labels_path=None) -> ExpressionMatrix:
    """Load a tab-delimited expression table.

    Row 1 is ``gene_id`` followed by sample ids; each further row is a gene id
    followed by one value per sample. Class labels come from ``labels_path``
    (two columns: sample_id, class) or, when it is None, from an inline second
    header row whose first cell is ignored. Classes are coded 1 and 2 in order
    of first appearance.

    Row and column numbers in error messages are 1-based and count genes and
    samples, not header lines.
    """
    rows = [r for r in _read_tsv(path) if r]
    if not rows:
        raise LoadError(f"{path}: empty file")
    header = rows[0]
    sample_ids = header[1:]
    n = len(sample_ids)
    if n == 0:
        raise LoadError(f"{path}: header has no sample columns")
    if len(set(sample_ids)) != n:
        raise LoadError(f"{path}: duplicate sample ids in header")
    body = rows[1:]

    if labels_path is None:
        if not body:
            raise LoadError(f"{path}: missing inline class-label row")
        label_row = body[0]
        body = body[1:]
        if len(label_row) != n + 1:
            raise LoadError(f"{path}: label row has {len(label_row) - 1} entries for {n} samples")
        labels = _coerce_classes(label_row[1:], f"{path}: label row")
    else:
        lab_rows = [r for r in _read_tsv(labels_path) if r]
        mapping: dict[str, str] = {}
        for i, r in enumerate(lab_rows, start=1):
            if len(r) != 2:
                raise LoadError(f"{labels_path}: line {i}: expected 2 fields, got {len(r)}")
            if i == 1 and r[0] == "sample_id":
                continue
            if r[0] not in sample_ids:
                raise LoadError(f"{labels_path}: line {i}: unknown sample {r[0]!r}")
            mapping[r[0]] = r[1]
        missing = [s for s in sample_ids if s not in mapping]
        if missing:
            raise LoadError(f"{labels_path}: no class label for sample(s) {', '.join(missing)}")
        labels = _coerce_classes([mapping[s] for s in sample_ids], str(labels_path))

    if not body:
        raise LoadError(f"{path}: no gene rows")
    gene_ids = []
    values = np.empty((len(body), n))
    for i, r in enumerate(body):
        if len(r) != n + 1:
            raise LoadError(
                f"{path}: gene row {i + 1} ({r[0]!r}) has {len(r) - 1} values, expected {n}"
            )
        gene_ids.append(r[0])
        for j, cell in enumerate(r[1:]):
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise LoadError(
                    f"{path}: non-numeric or missing value {cell!r} at gene row {i + 1} "
                    f"({r[0]!r}), sample column {j + 1} ({sample_ids[j]!r})"
                )
            values[i, j] = v
    if len(set(gene_ids)) != len(gene_ids):
        seen, dup = set(), None
        for g in gene_ids:
            if g in seen:
                dup = g
                break
            seen.add(g)
        raise LoadError(f"{path}: duplicate gene id {dup!r}")
    try:
        return ExpressionMatrix(values, tuple(gene_ids), tuple(sample_ids), labels)
    except ValueError as exc:
        raise LoadError(f"{path}: {exc}") from exc


def write_expression_tsv(matrix: ExpressionMatrix, path, labels_path=None) -> None:
    """Write ``matrix`` in the format read by :func:`load_expression_tsv`.

    Labels go to ``labels_path`` when given, otherwise to an inline second row.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["gene_id", *matrix.sample_ids])
        if labels_path is None:
            w.writerow(["class", *(str(c) for c in matrix.labels)])
        for g, row in zip(matrix.gene_ids, matrix.values):
            w.writerow([g, *(repr(float(v)) for v in row)])
    if labels_path is not None:
        with open(labels_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["sample_id", "class"])
            for s, c in zip(matrix.sample_ids, matrix.labels):
                w.writerow([s, str(c)])


def load_gmt(path) -> GeneSetCatalog:
    """Read a GMT file: ``name<TAB>description<TAB>member...`` per line."""
    sets: list[GeneSet] = []
    seen: dict[str, int] = {}
    collapsed = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 3:
                raise LoadError(f"{path}: line {lineno}: expected name, description and members")
            name, desc, raw = fields[0], fields[1], [f for f in fields[2:] if f]
            if not raw:
                raise LoadError(f"{path}: line {lineno}: gene-set {name!r} has no members")
            if name in seen:
                raise LoadError(
                    f"{path}: line {lineno}: duplicate gene-set name {name!r} "
                    f"(first seen on line {seen[name]})"
                )
            seen[name] = lineno
            members = tuple(dict.fromkeys(raw))
            collapsed += len(raw) - len(members)
            sets.append(GeneSet(name, desc, members))
    if collapsed:
        log.warning("%s: collapsed %d duplicate member ids", path, collapsed)
    return GeneSetCatalog(tuple(sets), duplicates_collapsed=collapsed)


def write_gmt(catalog: GeneSetCatalog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in catalog.sets:
            fh.write("\t".join([s.name, s.description, *s.members]) + "\n")


def resolve_catalog(
    catalog: GeneSetCatalog,
    matrix: ExpressionMatrix,
    min_size: int = 2,
    max_size: float = math.inf,
) -> ResolvedCatalog:
    """Map set members to matrix rows and apply the size filter.

    Members missing from the matrix are dropped and counted per set; sets whose
    resolved size falls outside ``[min_size, max_size]`` are excluded.
    """
    if min_size < 1 or max_size < min_size:
        raise ValueError(f"invalid size bounds [{min_size}, {max_size}]")
    index = matrix.gene_index()
    kept: list[ResolvedSet] = []
    excluded: list[tuple[str, int]] = []
    for s in catalog.sets:
        rows = [index[g] for g in dict.fromkeys(s.members) if g in index]
        dropped = len(s.members) - len(rows)
        if min_size <= len(rows) <= max_size:
            idx = np.array(rows, dtype=np.int64)
            idx.setflags(write=False)
            kept.append(ResolvedSet(s.name, idx, dropped))
        else:
            excluded.append((s.name, len(rows)))
    if excluded:
        log.info("excluded %d gene-sets outside size range [%s, %s]", len(excluded), min_size, max_size)
    if not kept:
        raise ResolutionError(
            f"no gene-set has between {min_size} and {max_size} members present in the "
            f"matrix ({len(catalog.sets)} sets examined)"
        )
    return ResolvedCatalog(tuple(kept), tuple(excluded), min_size, max_size)


def resolved_from_indices(
    blocks: Iterable[Sequence[int]], names: Sequence[str] | None = None
) -> ResolvedCatalog:
    """Build a ResolvedCatalog directly from row-index blocks."""
    sets = []
    for k, rows in enumerate(blocks):
        idx = np.asarray(rows, dtype=np.int64)
        if idx.size == 0 or np.unique(idx).size != idx.size:
            raise ValueError(f"block {k} is empty or has repeated rows")
        name = names[k] if names is not None else f"set{k + 1}"
        sets.append(ResolvedSet(name, idx, 0))
    return ResolvedCatalog(tuple(sets))
