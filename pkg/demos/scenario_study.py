"""
Comparing gene-set statistics on five simulated scenarios
=========================================================

Only gene-set 1 carries a treatment effect, and the scenarios trade the
number of shifted genes against the shift size. Scenario 5 shifts half the
genes up and half down, which defeats the plain mean but not maxmean.

The full study (20 replicates, 200 permutations) takes about a minute; the
numbers below use fewer replicates.
"""

from gsa.simulation import run_scenario_study, study_table_tsv

studies = [
    run_scenario_study(sc, ("mean", "mean_abs", "maxmean", "ks"), B=200, reps=5, seed=2007)
    for sc in ("1", "2", "3", "4", "5")
]
# mean and standard error of set 1's p-value, one column per statistic
print(study_table_tsv(studies))
