"""Gene-set analysis with the maxmean statistic and restandardized permutation inference."""

from .data import (
    ExpressionMatrix,
    GeneSet,
    GeneSetCatalog,
    LoadError,
    ResolutionError,
    ResolvedCatalog,
    load_expression_tsv,
    load_gmt,
    resolve_catalog,
    write_expression_tsv,
    write_gmt,
)
from .gene_scores import catalog_score_moments, gene_scores, t_to_z, two_sample_t
from .inference import (
    DegenerateStatisticError,
    PermutationPlan,
    SetScoreTable,
    bh_fdr,
    gene_set_analysis,
    permutation_scores,
    pvalues,
    row_randomization_scores,
    standardize_score,
)
from .numerics import RandomStream, normal_cdf, normal_quantile, percentile, t_cdf
from .selection import TiltedModel, mle_beta, sample_subset, subset_log_prob
from .simulation import (
    PowerGridSpec,
    ScenarioSpec,
    generate_scenario,
    power_grid,
    preset,
    run_scenario_study,
)
from .statistics import (
    ScoreFunction,
    SetStatistic,
    randomization_moments,
    set_ks_signed,
    set_maxmean,
    set_mean,
)

__version__ = "0.1.0"
