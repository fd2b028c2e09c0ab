"""Synthetic two-class data, the five-scenario study and power grids.

Simulated datasets use consecutive, non-overlapping blocks of genes as the
gene-sets and add treatment effects to the class-2 columns of chosen blocks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import ExpressionMatrix, GeneSet, GeneSetCatalog, resolve_catalog
from .inference import PermutationPlan, gene_set_analysis
from .numerics import RandomStream, normal_cdf, percentile
from .statistics import SetStatistic
from .tables import tsv_text

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EffectBlock:
    """Shift genes ``start:stop`` (0-based, within the set) of set ``set_index``
    by ``sign * shift`` in class 2."""

    set_index: int
    start: int
    stop: int
    shift: float
    sign: int = 1


@dataclass(frozen=True)
class ScenarioSpec:
    n_genes: int = 1000
    n_per_class: int = 50
    set_size: int = 20
    n_sets: int = 50
    effects: tuple[EffectBlock, ...] = ()
    seed: int = 0

    def validate(self) -> None:
        if self.set_size < 1 or self.n_sets < 1:
            raise ValueError("set size and number of sets must be positive")
        if self.set_size * self.n_sets > self.n_genes:
            raise ValueError(
                f"{self.n_sets} blocks of {self.set_size} genes do not fit in {self.n_genes} genes"
            )
        if self.n_per_class < 2:
            raise ValueError("need at least 2 samples per class")
        for e in self.effects:
            if not 0 <= e.set_index < self.n_sets:
                raise ValueError(f"effect block refers to set {e.set_index} of {self.n_sets}")
            if not 0 <= e.start < e.stop <= self.set_size:
                raise ValueError(f"effect range {e.start}:{e.stop} outside set of {self.set_size}")
            if e.sign not in (1, -1):
                raise ValueError("effect sign must be +1 or -1")


def _first_set(*blocks) -> tuple[EffectBlock, ...]:
    return tuple(EffectBlock(0, a, b, shift, sign) for a, b, shift, sign in blocks)


# Two worked examples: 1000 genes, 25 + 25 samples.
_EXAMPLES = {
    "example1": dict(n_per_class=25, effects=_first_set((0, 10, 2.5, 1))),
    "example2": dict(
        n_per_class=25,
        effects=tuple(EffectBlock(k, 0, 10, 2.5) for k in range(50)),
    ),
}

# Five-scenario study; only gene-set 1 carries an effect.
_SCENARIOS = {
    "scenario1": _first_set((0, 20, 0.2, 1)),
    "scenario2": _first_set((0, 15, 0.3, 1)),
    "scenario3": _first_set((0, 10, 0.4, 1)),
    "scenario4": _first_set((0, 5, 0.6, 1)),
    "scenario5": _first_set((0, 10, 0.4, 1), (10, 20, 0.4, -1)),
}

# Samples per class used for the scenario presets (see README).
SCENARIO_PER_CLASS = 25

PRESETS = ("example1", "example2", *_SCENARIOS)


def preset(name: str, seed: int = 0, **overrides) -> ScenarioSpec:
    """A named ScenarioSpec: ``example1``, ``example2`` or ``scenario1``..``scenario5``.

    A bare digit such as ``"3"`` is read as ``scenario3``.
    """
    key = str(name).strip().lower()
    if key.isdigit():
        key = f"scenario{key}"
    if key in _EXAMPLES:
        spec = ScenarioSpec(seed=seed, **_EXAMPLES[key])
    elif key in _SCENARIOS:
        spec = ScenarioSpec(n_per_class=SCENARIO_PER_CLASS, effects=_SCENARIOS[key], seed=seed)
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from {', '.join(PRESETS)}")
    return replace(spec, **overrides) if overrides else spec


def generate_scenario(
    spec: ScenarioSpec, stream: RandomStream | None = None
) -> tuple[ExpressionMatrix, GeneSetCatalog]:
    """Draw a dataset for ``spec``; ``stream`` defaults to ``RandomStream(spec.seed)``."""
    spec.validate()
    stream = stream or RandomStream(spec.seed)
    n1 = n2 = spec.n_per_class
    values = stream.generator().standard_normal((spec.n_genes, n1 + n2))
    for e in spec.effects:
        first = e.set_index * spec.set_size
        values[first + e.start : first + e.stop, n1:] += e.sign * e.shift
    width = len(str(spec.n_genes))
    gene_ids = tuple(f"g{i + 1:0{width}d}" for i in range(spec.n_genes))
    sample_ids = tuple([f"c{j + 1}" for j in range(n1)] + [f"t{j + 1}" for j in range(n2)])
    labels = np.array([1] * n1 + [2] * n2)
    matrix = ExpressionMatrix(values, gene_ids, sample_ids, labels)
    sets = tuple(
        GeneSet(
            f"set{k + 1}",
            f"genes {k * spec.set_size + 1}-{(k + 1) * spec.set_size}",
            gene_ids[k * spec.set_size : (k + 1) * spec.set_size],
        )
        for k in range(spec.n_sets)
    )
    return matrix, GeneSetCatalog(sets)


@dataclass(frozen=True)
class StudyCell:
    mean_p: float
    se_p: float | None
    p_values: tuple[float, ...]


@dataclass
class ScenarioStudy:
    scenario: str
    statistics: list[str]
    cells: dict[str, StudyCell]


def _rep_seeds(seed: int, rep: int) -> tuple[RandomStream, int]:
    data_stream = RandomStream(seed, rep)
    plan_seed = int(RandomStream(seed, rep, (1,)).generator().integers(2**63))
    return data_stream, plan_seed


def run_scenario_study(
    scenario: str,
    statistics: Sequence[str] = ("mean", "mean_abs", "maxmean", "ks_signed"),
    B: int = 200,
    reps: int = 20,
    seed: int = 0,
    target_set: int = 0,
    threads: int = 1,
    **analysis_options,
) -> ScenarioStudy:
    """Mean and standard error, over ``reps`` datasets, of gene-set 1's p-value.

    Each replicate draws a fresh dataset and permutation plan from streams
    keyed by ``(seed, rep)`` and runs the restandardized analysis for every
    statistic on shared permutations.
    """
    stats = [SetStatistic.parse(s).value for s in statistics]
    spec = preset(scenario)
    if reps < 1:
        raise ValueError("need at least one replicate")
    pvals: dict[str, list[float]] = {s: [] for s in stats}
    for rep in range(reps):
        data_stream, plan_seed = _rep_seeds(seed, rep)
        try:
            matrix, catalog = generate_scenario(spec, data_stream)
            resolved = resolve_catalog(catalog, matrix, min_size=1)
            plan = PermutationPlan.for_matrix(matrix, B, plan_seed)
            res = gene_set_analysis(
                matrix, resolved, stats, plan=plan, threads=threads, **analysis_options
            )
        except Exception as exc:
            raise RuntimeError(f"{scenario}, replicate {rep}: {exc}") from exc
        for s in stats:
            pvals[s].append(float(res.tables[s].p[target_set]))
    cells = {}
    for s in stats:
        arr = np.array(pvals[s])
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else None
        cells[s] = StudyCell(float(arr.mean()), se, tuple(arr))
    return ScenarioStudy(spec_name(scenario), stats, cells)


def spec_name(scenario: str) -> str:
    key = str(scenario).strip().lower()
    return f"scenario{key}" if key.isdigit() else key


def study_table_tsv(studies: Sequence[ScenarioStudy]) -> str:
    """Scenarios as rows (a mean row and an se row each), statistics as columns."""
    stats = studies[0].statistics
    rows = []
    for st in studies:
        rows.append([st.scenario, "mean", *(st.cells[s].mean_p for s in stats)])
        rows.append([st.scenario, "se", *(st.cells[s].se_p for s in stats)])
    return tsv_text(["scenario", "quantity", *stats], rows)


# ---------------------------------------------------------------------------
# Power grids on directly drawn z-values

POWER_STATISTICS = ("abs_mean", "mean_abs", "maxmean", "ks", "single_gene")


def power_statistic(name: str, z: np.ndarray) -> np.ndarray:
    """Row-wise test statistic for a (draws x m) array of z-values.

    ``abs_mean`` is |mean z|, ``mean_abs`` is mean |z|, ``maxmean`` the larger
    of the averaged positive and negative parts, ``ks`` the one-sample
    Kolmogorov-Smirnov distance to the N(0, 1) c.d.f. and ``single_gene`` |z|
    of the first gene alone.
    """
    z = np.asarray(z, dtype=float)
    m = z.shape[1]
    if name == "abs_mean":
        return np.abs(z.mean(axis=1))
    if name == "mean_abs":
        return np.abs(z).mean(axis=1)
    if name == "maxmean":
        return np.maximum(np.maximum(z, 0).sum(axis=1), np.maximum(-z, 0).sum(axis=1)) / m
    if name == "ks":
        F = normal_cdf(np.sort(z, axis=1))
        i = np.arange(1, m + 1)
        return np.maximum((i / m - F).max(axis=1), (F - (i - 1) / m).max(axis=1))
    if name == "single_gene":
        return np.abs(z[:, 0])
    raise ValueError(f"unknown power statistic {name!r}; choose from {POWER_STATISTICS}")


@dataclass(frozen=True)
class PowerGridSpec:
    m: int = 25
    b_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    g_grid: tuple[float, ...] = (1.0, 1.125, 1.25, 1.375, 1.5)
    shift_mode: str = "all"
    level: float = 0.95
    n_null: int = 40000
    n_alt: int = 10000
    statistics: tuple[str, ...] = ("abs_mean", "mean_abs", "maxmean", "ks")

    def validate(self) -> None:
        if self.m < 1:
            raise ValueError("set size must be positive")
        if not self.b_grid or not self.g_grid:
            raise ValueError("power grid is empty")
        if any(g < 1 for g in self.g_grid):
            raise ValueError("scale values g must be at least 1")
        if any(b < 0 for b in self.b_grid):
            raise ValueError("shift values b must be nonnegative")
        if not 0 < self.level < 1:
            raise ValueError("level must lie strictly between 0 and 1")
        if self.n_null < 1000 or self.n_alt < 1000:
            raise ValueError("need at least 1000 null and 1000 alternative draws")
        if self.shift_mode not in ("all", "half"):
            raise ValueError("shift_mode must be 'all' or 'half'")
        for s in self.statistics:
            if s not in POWER_STATISTICS:
                raise ValueError(f"unknown power statistic {s!r}")


@dataclass(frozen=True)
class PowerRow:
    statistic: str
    b: float
    g: float
    power: float
    mc_se: float


@dataclass
class PowerTable:
    spec: PowerGridSpec
    critical_values: dict[str, float]
    rows: list[PowerRow] = field(default_factory=list)

    def power(self, statistic: str, b: float, g: float) -> PowerRow:
        for r in self.rows:
            if r.statistic == statistic and np.isclose(r.b, b) and np.isclose(r.g, g):
                return r
        raise KeyError((statistic, b, g))

    def to_tsv(self) -> str:
        return tsv_text(
            ["statistic", "b", "g", "power", "mc_se"],
            [(r.statistic, r.b, r.g, r.power, r.mc_se) for r in self.rows],
        )


def _shift_signs(m: int, mode: str) -> np.ndarray:
    signs = np.ones(m)
    if mode == "half":
        signs[m - m // 2 :] = -1.0
    return signs


def power_grid(spec: PowerGridSpec, stream: RandomStream) -> PowerTable:
    """Monte Carlo power of each statistic over the (b, g) grid.

    Null draws are m i.i.d. N(0, 1) values; alternatives are N(b, g^2) for every
    gene (``all``) or N(+b, g^2) / N(-b, g^2) for the two halves (``half``).
    A test rejects when the statistic exceeds the null ``level`` percentile.
    All statistics see the same draws in every cell.
    """
    spec.validate()
    null = stream.substream(0).generator().standard_normal((spec.n_null, spec.m))
    crit = {s: percentile(power_statistic(s, null), spec.level) for s in spec.statistics}
    signs = _shift_signs(spec.m, spec.shift_mode)
    table = PowerTable(spec, crit)
    cell = 0
    for g in spec.g_grid:
        for b in spec.b_grid:
            cell += 1
            eps = stream.substream(cell).generator().standard_normal((spec.n_alt, spec.m))
            z = b * signs + g * eps
            for s in spec.statistics:
                pw = float((power_statistic(s, z) > crit[s]).mean())
                se = float(np.sqrt(pw * (1 - pw) / spec.n_alt))
                table.rows.append(PowerRow(s, float(b), float(g), pw, se))
    return table
