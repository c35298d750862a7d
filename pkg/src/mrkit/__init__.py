"""Mendelian randomization toolkit.

Summary-data estimators (ratio, IVW, weighted median, mode, Egger),
individual-level IV estimators and first-stage diagnostics, valid-instrument
selection by voting and maximum cliques, a weak-instrument bias simulator,
and an exact calculator for IV estimands on finite potential-outcome
populations.
"""

from . import io
from .bias import (
    BiasExperimentConfig,
    BiasReport,
    generate_alice,
    run_bias_experiment,
    simulate_two_sample_summary,
    theoretical_mean,
)
from .errors import DataError, MRError, NumericError
from .estimands import (
    EstimandKind,
    check_assumptions,
    compute_estimand,
    enumerate_compliance,
    usual_iv_estimand,
)
from .individual import (
    FirstStageDiagnostics,
    first_stage_f,
    marginal_associations,
    ols_estimate,
    ssiv_estimate,
    tsls_estimate,
)
from .selection import (
    LDMatrix,
    SelectionResult,
    VotingMatrix,
    ld_clump,
    max_clique_valid_set,
    robust_confidence_interval,
    select_relevant,
    spi_select,
    voting_matrix,
)
from .report import emit_report, forest_svg
from .summary import (
    egger_estimate,
    ivw_estimate,
    mode_based_estimate,
    ratio_estimate,
    weighted_median_estimate,
)
from .types import (
    AliceConfig,
    CausalPopulation,
    Design,
    EstimateResult,
    IndividualDataset,
    SnpRecord,
    SummaryDataset,
    Unit,
)

__version__ = "0.1.0"

__all__ = [
    "AliceConfig", "BiasExperimentConfig", "BiasReport", "CausalPopulation", "DataError", "Design", "EstimandKind", "EstimateResult",
    "FirstStageDiagnostics", "IndividualDataset", "LDMatrix", "MRError", "NumericError",
    "SelectionResult", "SnpRecord", "SummaryDataset", "Unit", "VotingMatrix",
    "check_assumptions", "compute_estimand", "egger_estimate", "emit_report",
    "enumerate_compliance", "first_stage_f", "forest_svg", "generate_alice", "io", "ivw_estimate", "ld_clump", "marginal_associations",
    "max_clique_valid_set", "mode_based_estimate", "ols_estimate", "ratio_estimate",
    "robust_confidence_interval", "run_bias_experiment", "select_relevant",
    "simulate_two_sample_summary", "spi_select", "ssiv_estimate", "theoretical_mean",
    "tsls_estimate", "usual_iv_estimand", "voting_matrix", "weighted_median_estimate",
]
