from .config import ConfigError, ExperimentConfig
from .diagnostics import (DegenerateTraceError, GapIntervalCounts, RegretFit, count_gap_intervals,
                          fit_regret_models)
from .runner import RegretTrace, run_experiment, run_single
