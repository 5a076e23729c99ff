"""Design and analysis of cluster randomized trials with matched pairs.

The package covers the full workflow: pairing clusters on baseline
features, randomizing treatment within pairs, estimating size-weighted and
equal-weighted average effects, a pair-aware variance estimator with
normal-approximation inference, a randomization test over within-pair
swaps, and a simulation harness with a Monte Carlo variance oracle.
"""

from .assignment import assign_within_pairs
from .core import (
    ClusterRecord,
    ClusterSummary,
    Dataset,
    UnitRow,
    build_dataset,
    load_dataset,
    read_clusters,
    read_units,
    summarize,
    write_clusters,
    write_dataset,
)
from .errors import (
    BadB,
    DataError,
    DuplicateUnit,
    EmptyArm,
    EmptyCluster,
    MissingTreatment,
    NonBinaryTreatment,
    NonFiniteOutcome,
    NonScalarKey,
    OddClusterCount,
    PairedCrtError,
    RaggedCovariates,
    SampleExceedsSize,
    SingularDesign,
    TooFewPairs,
    TooManyPairsForExact,
    UnknownCluster,
)
from .estimation import (
    PointEstimate,
    estimate_equal_weighted,
    estimate_size_weighted,
    wls_oracle,
)
from .inference import (
    AdjustedOutcomes,
    InferenceResult,
    VarianceEstimate,
    adjusted_outcomes,
    infer,
    variance_estimate,
)
from .matching import (
    ImbalanceReport,
    MatchedDesign,
    imbalance_report,
    order_pairs_for_variance,
    pair_greedy_nn,
    pair_sorted_scalar,
    read_design,
    write_design,
)
from .randtest import RandTestResult, randomization_test
from .simulation import (
    MATCH_MODES,
    PRESET_NAMES,
    CovariateLaw,
    DgpSpec,
    LinearOutcomeModel,
    SamplingRule,
    SimConfig,
    SimReport,
    SizeLaw,
    generate_trial,
    match_records,
    monte_carlo,
    oracle_kind,
    oracle_variance,
    preset,
)

__version__ = "0.1.0"

__all__ = [
    "AdjustedOutcomes",
    "BadB",
    "ClusterRecord",
    "ClusterSummary",
    "CovariateLaw",
    "DataError",
    "Dataset",
    "DgpSpec",
    "DuplicateUnit",
    "EmptyArm",
    "EmptyCluster",
    "ImbalanceReport",
    "InferenceResult",
    "LinearOutcomeModel",
    "MATCH_MODES",
    "MatchedDesign",
    "MissingTreatment",
    "NonBinaryTreatment",
    "NonFiniteOutcome",
    "NonScalarKey",
    "OddClusterCount",
    "PRESET_NAMES",
    "PairedCrtError",
    "PointEstimate",
    "RaggedCovariates",
    "RandTestResult",
    "SampleExceedsSize",
    "SamplingRule",
    "SimConfig",
    "SimReport",
    "SingularDesign",
    "SizeLaw",
    "TooFewPairs",
    "TooManyPairsForExact",
    "UnitRow",
    "UnknownCluster",
    "VarianceEstimate",
    "adjusted_outcomes",
    "assign_within_pairs",
    "build_dataset",
    "estimate_equal_weighted",
    "estimate_size_weighted",
    "generate_trial",
    "imbalance_report",
    "infer",
    "load_dataset",
    "match_records",
    "monte_carlo",
    "oracle_kind",
    "oracle_variance",
    "order_pairs_for_variance",
    "pair_greedy_nn",
    "pair_sorted_scalar",
    "preset",
    "randomization_test",
    "read_clusters",
    "read_design",
    "read_units",
    "summarize",
    "variance_estimate",
    "wls_oracle",
    "write_clusters",
    "write_dataset",
    "write_design",
]
