"""Temporally consistent frame-to-frame retrieval."""

from .benchmark import (
    LAMBDA_GRID,
    MethodScore,
    NoiseSpec,
    adversarial_fixture,
    compare_methods,
    frame_accuracy,
    noisy_benchmark,
    noisy_sequence,
    tune_lambda,
)
from .candidates import (
    CandidateSequence,
    CandidateToken,
    RawCandidate,
    TrajectoryPrediction,
    candidates_from_results,
    dp_objective,
    load_candidates,
    load_predictions,
    make_prediction,
    nearest_labels,
    save_candidates,
    save_predictions,
    tokenize_candidates,
)
from .methods import (
    DEFAULT_LAMBDA,
    DEFAULT_SIGMA_M,
    METHODS,
    affinity_matrix,
    dominant_sets_baseline,
    dp_choices,
    dp_oracle,
    nn_baseline,
    replicator_dynamics,
    run_method,
    transretriever_predict,
)

__all__ = [
    "CandidateSequence",
    "CandidateToken",
    "DEFAULT_LAMBDA",
    "DEFAULT_SIGMA_M",
    "LAMBDA_GRID",
    "METHODS",
    "MethodScore",
    "NoiseSpec",
    "RawCandidate",
    "TrajectoryPrediction",
    "adversarial_fixture",
    "affinity_matrix",
    "candidates_from_results",
    "compare_methods",
    "dominant_sets_baseline",
    "dp_choices",
    "dp_objective",
    "dp_oracle",
    "frame_accuracy",
    "load_candidates",
    "load_predictions",
    "make_prediction",
    "nearest_labels",
    "nn_baseline",
    "noisy_benchmark",
    "noisy_sequence",
    "replicator_dynamics",
    "run_method",
    "save_candidates",
    "save_predictions",
    "tokenize_candidates",
    "transretriever_predict",
    "tune_lambda",
]
