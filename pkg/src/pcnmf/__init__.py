"""Missing-measurement recovery by masked NMF with piecewise-constant activations."""

from .matrices import (
    FactorPair,
    MaskedMatrix,
    ReweightMatrix,
    ShapeMismatchError,
    load_dense_csv,
    load_masked_csv,
    masked_product_residual,
    reconstruct,
    save_dense_csv,
    save_masked_csv,
)
from .solver import (
    ACTIVATION_FLOOR,
    DegenerateFactorError,
    IterationRecord,
    NumericFailureError,
    SolverConfig,
    SolveTrace,
    compute_reweights,
    fit_gradient,
    infer_activations,
    objective,
    penalty_smoothed,
    rescale,
    solve,
    surrogate_per_slot,
    update_activations,
    update_gains,
    weighted_fit,
)
from .simulate import (
    ScenarioConfig,
    ScenarioTruth,
    activation_rate_for_duty,
    fading_step,
    generate_scenario,
    markov_activity,
    path_gain,
    place_network,
    save_scenario,
)
from .bench import (
    ExperimentConfig,
    SummaryRow,
    TrialResult,
    UndefinedMetricError,
    derive_trial_seeds,
    read_trials_csv,
    rmse_missing,
    rmse_missing_pooled,
    run_sweep,
    run_trial,
    scale_rows_to_reference,
    transition_count,
    write_benchmark_outputs,
    write_summary_csv,
    write_trials_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ACTIVATION_FLOOR",
    "DegenerateFactorError",
    "ExperimentConfig",
    "FactorPair",
    "IterationRecord",
    "MaskedMatrix",
    "NumericFailureError",
    "ReweightMatrix",
    "ScenarioConfig",
    "ScenarioTruth",
    "ShapeMismatchError",
    "SolveTrace",
    "SolverConfig",
    "SummaryRow",
    "TrialResult",
    "UndefinedMetricError",
    "activation_rate_for_duty",
    "compute_reweights",
    "derive_trial_seeds",
    "fading_step",
    "fit_gradient",
    "generate_scenario",
    "infer_activations",
    "load_dense_csv",
    "load_masked_csv",
    "markov_activity",
    "masked_product_residual",
    "objective",
    "path_gain",
    "penalty_smoothed",
    "place_network",
    "read_trials_csv",
    "reconstruct",
    "rescale",
    "rmse_missing",
    "rmse_missing_pooled",
    "run_sweep",
    "run_trial",
    "save_dense_csv",
    "save_masked_csv",
    "save_scenario",
    "scale_rows_to_reference",
    "solve",
    "surrogate_per_slot",
    "transition_count",
    "update_activations",
    "update_gains",
    "weighted_fit",
    "write_benchmark_outputs",
    "write_summary_csv",
    "write_trials_csv",
]
