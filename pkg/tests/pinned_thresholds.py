"""Pinned acceptance constants.

Seed lists and count thresholds for the benchmark-scale acceptance criteria,
plus the seeds of the self-contained checks. Measured reference values from
the pinning run are recorded in comments next to each entry; the assertions
use the stated bounds, the comments document what the suite saw when these
were frozen.
"""

# Self-contained checks
GRAD_CHECK_SEED = 0        # measured max rel err 4.8e-09 over 20 triples
ORACLE_CHECK_SEED = 0      # measured max err 4.4e-16 over 10 seeds x 2 variants
DEAD_ZONE_SEED = 7
EMA_SEED = 3

# Benchmark-scale criteria
BENCHMARK_SEEDS = (0, 1, 2, 3, 4)
SCALING_SEED_OFFSETS = (0, 1, 2, 3, 4)
MARGIN_SEEDS = (0, 1, 2, 3, 4)

DIP_MIN_SEEDS = 3          # criterion floor: 3 of 5
FN_MIN_SEEDS = 4           # criterion floor: 4 of 5
MARGIN_MIN_SEEDS = 3       # criterion floor: 3 of 5
