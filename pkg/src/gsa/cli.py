"""Command line: ``gsa run``, ``gsa simulate`` and ``gsa power``.

``GSA_SEED`` and ``GSA_THREADS`` supply the seed and thread count when the
corresponding flags are not given.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .data import LoadError, ResolutionError, load_expression_tsv, load_gmt, resolve_catalog
from .gene_scores import ZeroVarianceError, gene_scores
from .inference import DegenerateStatisticError, PermutationPlan, gene_set_analysis
from .numerics import RandomStream
from .simulation import (
    POWER_STATISTICS,
    PowerGridSpec,
    power_grid,
    preset,
    run_scenario_study,
    study_table_tsv,
)
from .statistics import SetStatistic
from .tables import write_tsv

log = logging.getLogger("gsa")

RESULT_COLUMNS = ["name", "m", "raw_S", "S_prime", "side", "p", "p_lo", "p_hi", "q"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    expression: str
    gmt: list[str]
    labels: str | None = None
    statistic: str = "maxmean"
    B: int = 1000
    seed: int = 0
    min_size: int = 2
    max_size: float = math.inf
    moments_mode: str = "multiplicity"
    perm_moments: str = "per_permutation"
    pvalue: str = "weak"
    q_cut: float = 0.10
    ks_draws: int = 200
    variance_floor: bool = False
    restandardize: bool = True
    out: str = "gsa_out"
    threads: int = 1
    json: bool = False

    # execution-only settings; kept out of metadata so outputs do not depend on them
    _EXECUTION_ONLY = ("out", "threads")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in self._EXECUTION_ONLY:
            d.pop(k)
        d["max_size"] = None if math.isinf(self.max_size) else self.max_size
        return d

    @classmethod
    def from_dict(cls, d: dict, **execution) -> "RunConfig":
        d = dict(d, **execution)
        if d.get("max_size") is None:
            d["max_size"] = math.inf
        return cls(**d)


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"environment variable {name}={raw!r} is not an integer") from None


def _float_list(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _scenario_list(text: str) -> list[str]:
    out = []
    for part in text.split(","):
        part = part.strip()
        rng = re.fullmatch(r"(\d+)\.\.(\d+)", part)
        if rng:
            out.extend(str(k) for k in range(int(rng[1]), int(rng[2]) + 1))
        elif part:
            out.append(part)
    return out


def _catalog_stems(paths: list[str]) -> list[str]:
    stems = [Path(p).stem for p in paths]
    if len(set(stems)) == len(stems):
        return stems
    return [f"{k + 1}_{s}" for k, s in enumerate(stems)]


def cmd_run(config: RunConfig) -> int:
    """Analyse every catalog against one expression matrix and write the tables."""
    out = Path(config.out)
    stat = SetStatistic.parse(config.statistic)
    matrix = load_expression_tsv(config.expression, config.labels)
    catalogs = [load_gmt(p) for p in config.gmt]
    scores = gene_scores(matrix, config.variance_floor)
    plan = PermutationPlan.for_matrix(matrix, config.B, config.seed)
    out.mkdir(parents=True, exist_ok=True)

    meta = {
        "version": __version__,
        "config": config.to_dict(),
        "n_genes": matrix.n_genes,
        "n_samples": matrix.n_samples,
        "class_sizes": list(matrix.class_sizes),
        "catalogs": [],
    }
    write_tsv(
        out / "genes.tsv",
        ["gene_id", "t", "z"],
        zip(matrix.gene_ids, scores.t.astype(float), scores.z.astype(float)),
    )
    for path, stem, catalog in zip(config.gmt, _catalog_stems(config.gmt), catalogs):
        try:
            resolved = resolve_catalog(catalog, matrix, config.min_size, config.max_size)
        except ResolutionError as exc:
            raise ResolutionError(f"{path}: {exc}") from exc
        res = gene_set_analysis(
            matrix,
            resolved,
            [stat],
            plan=plan,
            moments_mode=config.moments_mode,
            perm_moments=config.perm_moments,
            restandardize=config.restandardize,
            add_one=config.pvalue == "add_one",
            ks_draws=config.ks_draws,
            variance_floor=config.variance_floor,
            threads=config.threads,
        )
        table = res.tables[stat.value]
        rows = table.rows()
        write_tsv(out / f"{stem}.results.tsv", RESULT_COLUMNS, (list(r.values()) for r in rows))
        if config.json:
            with open(out / f"{stem}.results.json", "w", encoding="utf-8", newline="\n") as fh:
                json.dump(rows, fh, indent=1)
                fh.write("\n")
        meta["catalogs"].append(
            {
                "path": path,
                "output": f"{stem}.results.tsv",
                "n_sets": len(catalog),
                "n_resolved": len(resolved),
                "duplicates_collapsed": catalog.duplicates_collapsed,
                "dropped_genes": {s.name: s.dropped for s in resolved.sets if s.dropped},
                "excluded_sets": [{"name": n, "size": m} for n, m in resolved.excluded],
                "degenerate_permutation_cells": int(np.sum(plan.B - table.n_valid)),
                "significant": table.significant(config.q_cut),
            }
        )
    with open(out / "run_metadata.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_simulate(scenarios, statistics, B=200, reps=20, seed=0, threads=1) -> str:
    studies = [
        run_scenario_study(sc, statistics, B=B, reps=reps, seed=seed, threads=threads)
        for sc in scenarios
    ]
    return study_table_tsv(studies)


def cmd_power(spec: PowerGridSpec, seed: int = 0) -> str:
    return power_grid(spec, RandomStream(seed)).to_tsv()


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gsa", description="Gene-set analysis with maxmean and restandardization.")
    p.add_argument("--version", action="version", version=f"gsa {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="analyse an expression matrix against gene-set catalogs")
    r.add_argument("--expression", required=True, help="expression TSV (gene_id + sample columns)")
    r.add_argument("--labels", help="labels TSV (sample_id, class); default: inline second row")
    r.add_argument("--gmt", required=True, action="append", help="GMT catalog (repeatable)")
    r.add_argument("--statistic", default="maxmean", choices=[s.value for s in SetStatistic] + ["ks"])
    r.add_argument("--B", "--permutations", dest="B", type=int, default=1000)
    r.add_argument("--seed", type=int)
    r.add_argument("--min-size", type=int, default=2)
    r.add_argument("--max-size", type=float, default=math.inf)
    r.add_argument("--moments", dest="moments_mode", default="multiplicity", choices=["multiplicity", "all_genes"])
    r.add_argument("--perm-moments", default="per_permutation", choices=["per_permutation", "pooled"])
    r.add_argument("--pvalue", default="weak", choices=["weak", "add_one"])
    r.add_argument("--q-cut", type=float, default=0.10)
    r.add_argument("--ks-draws", type=int, default=200)
    r.add_argument("--variance-floor", action="store_true")
    r.add_argument("--no-restandardize", dest="restandardize", action="store_false")
    r.add_argument("--out", default="gsa_out")
    r.add_argument("--threads", type=int)
    r.add_argument("--json", action="store_true", help="also write a JSON copy of each result table")

    s = sub.add_parser("simulate", help="five-scenario simulation study")
    s.add_argument("--scenarios", default="1..5", help="e.g. '1..5' or '1,3,5'")
    s.add_argument("--statistics", default="mean,mean_abs,maxmean,ks")
    s.add_argument("--B", "--permutations", dest="B", type=int, default=200)
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int)
    s.add_argument("--out", help="output TSV (default stdout)")

    w = sub.add_parser("power", help="power grid over shift b and scale g")
    w.add_argument("--m", type=int, default=25)
    w.add_argument("--b-grid", type=_float_list, default=PowerGridSpec.b_grid)
    w.add_argument("--g-grid", type=_float_list, default=PowerGridSpec.g_grid)
    w.add_argument("--shift-mode", choices=["all", "half"], default="all")
    w.add_argument("--level", type=float, default=0.95)
    w.add_argument("--null-draws", type=int, default=40000)
    w.add_argument("--alt-draws", type=int, default=10000)
    w.add_argument("--statistics", default="abs_mean,mean_abs,maxmean,ks")
    w.add_argument("--seed", type=int)
    w.add_argument("--out", help="output TSV (default stdout)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits for --help/--version (0) and usage errors (1)
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        seed = args.seed if args.seed is not None else _env_int("GSA_SEED", 0)
        if args.command == "run":
            threads = args.threads if args.threads is not None else _env_int("GSA_THREADS", os.cpu_count() or 1)
            config = RunConfig(
                expression=args.expression,
                gmt=list(args.gmt),
                labels=args.labels,
                statistic=SetStatistic.parse(args.statistic).value,
                B=args.B,
                seed=seed,
                min_size=args.min_size,
                max_size=args.max_size,
                moments_mode=args.moments_mode,
                perm_moments=args.perm_moments,
                pvalue=args.pvalue,
                q_cut=args.q_cut,
                ks_draws=args.ks_draws,
                variance_floor=args.variance_floor,
                restandardize=args.restandardize,
                out=args.out,
                threads=max(1, threads),
                json=args.json,
            )
            return cmd_run(config)
        if args.command == "simulate":
            threads = args.threads if args.threads is not None else _env_int("GSA_THREADS", 1)
            scenarios = _scenario_list(args.scenarios)
            stats = [SetStatistic.parse(s).value for s in args.statistics.split(",") if s.strip()]
            for sc in scenarios:
                preset(sc)
            _emit(cmd_simulate(scenarios, stats, args.B, args.reps, seed, max(1, threads)), args.out)
            return 0
        stats = tuple(s.strip() for s in args.statistics.split(",") if s.strip())
        bad = [s for s in stats if s not in POWER_STATISTICS]
        if bad:
            raise UsageError(f"unknown power statistic(s) {bad}; choose from {POWER_STATISTICS}")
        spec = PowerGridSpec(
            m=args.m,
            b_grid=args.b_grid,
            g_grid=args.g_grid,
            shift_mode=args.shift_mode,
            level=args.level,
            n_null=args.null_draws,
            n_alt=args.alt_draws,
            statistics=stats,
        )
        _emit(cmd_power(spec, seed), args.out)
        return 0
    except DegenerateStatisticError as exc:
        print(f"gsa: degenerate statistic: {exc}", file=sys.stderr)
        return 2
    except (LoadError, ResolutionError, ZeroVarianceError, UsageError, ValueError, OSError) as exc:
        print(f"gsa: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
