"""Markov-modulated single-server queue: closed forms and exact simulation."""

from .dps import (
    ClassLoads,
    CollapsePrediction,
    DpsSpec,
    StateDependentDps,
    class_loads,
    collapse_prediction,
    ht_dps,
    ht_parametrize_dps,
    ht_workload_from_collapse,
    make_dps,
    rate_conservation_residual,
    split_to_classes,
    weighted_moment_residual,
)
from .environment import (
    EnvPath,
    GeneratorMatrix,
    sample_environment_path,
    solve_offset_vector,
    stationary_distribution,
    validate_generator,
)
from .estimators import estimate_scaled_law, independence_diagnostic
from .service import Deterministic, Exponential, HyperExponential, mixture_from_classes
from .simulator import SimEstimates, simulate_dps, simulate_workload
from .workload import (
    ExponentialLaw,
    HtModelSpec,
    ModelSpec,
    ht_mean_workload,
    ht_model,
    ht_parametrize,
    ht_workload_law,
    make_model,
    mean_workload,
    qa_rhs,
    traffic_intensity,
)

__version__ = "0.1.0"
