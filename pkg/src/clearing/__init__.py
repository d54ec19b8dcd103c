"""Exact and simulated performance of stochastic clearing policies under Poisson input."""

from .calibration import CalibrationError, FeasibleRange, IntegralityError, calibrate, feasible_cycle_range
from .experiments import (
    ComparisonReport,
    Verdict,
    compare_fixed_cycle,
    compare_fixed_params,
    lemma_suite,
    verify,
    write_csv,
)
from .policies import (
    CostParams,
    PolicyError,
    PolicyKind,
    PolicyMetrics,
    PolicySpec,
    aod,
    aod_closed_form,
    avg_cost,
    expected_cycle,
    expected_wait,
    metrics,
)
from .simulator import CycleBatch, CycleRecord, Estimate, SimEstimate, sample_cycle, simulate, simulate_cycles

__version__ = "0.1.0"

__all__ = [
    "CalibrationError", "FeasibleRange", "IntegralityError", "calibrate", "feasible_cycle_range",
    "ComparisonReport", "Verdict", "compare_fixed_cycle", "compare_fixed_params", "lemma_suite",
    "verify", "write_csv",
    "CostParams", "PolicyError", "PolicyKind", "PolicyMetrics", "PolicySpec", "aod",
    "aod_closed_form", "avg_cost", "expected_cycle", "expected_wait", "metrics",
    "CycleBatch", "CycleRecord", "Estimate", "SimEstimate", "sample_cycle", "simulate",
    "simulate_cycles",
]
