"""Trajectory selection methods over candidate sequences.

All methods return a `TrajectoryPrediction` scored with the same path
objective ``sum ||p_i - p_{i+1}|| - lam * sum S_i``:

- ``nn``: per-frame most similar candidate.
- ``dp``: exact minimiser of the objective by dynamic programming over the path.
- ``ds``: dominant-set selection on a cross-frame affinity graph.
- ``transretriever``: greedy decoding with a trained `TransRetriever`.
"""

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from geotrack.errors import UsageError
from geotrack.models.retriever import TransRetriever, greedy_decode

from .candidates import CandidateSequence, TrajectoryPrediction, make_prediction

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 50.0
DEFAULT_SIGMA_M = 50.0
REPLICATOR_TOL = 1e-8
REPLICATOR_MAX_ITER = 10_000
SUPPORT_EPS = 1e-9
TIE_TOL = 1e-9

METHODS = ("nn", "ds", "dp", "transretriever")


def _first_min(values: np.ndarray) -> int:
    """Lowest index whose value is within tolerance of the minimum."""
    lo = float(values.min())
    return int(np.flatnonzero(values <= lo + TIE_TOL * max(1.0, abs(lo)))[0])


def nn_choices(seq: CandidateSequence) -> List[int]:
    sims = seq.sims()
    # argmax returns the first maximum, i.e. the lowest candidate index
    return [int(j) for j in np.argmax(sims, axis=1)]


def nn_baseline(seq: CandidateSequence, lam: float = DEFAULT_LAMBDA) -> TrajectoryPrediction:
    """Most similar candidate per frame, ignoring geometry."""
    return make_prediction(seq, nn_choices(seq), "nn", lam)


def dp_choices(seq: CandidateSequence, lam: float = DEFAULT_LAMBDA) -> List[int]:
    """Exact optimum in O(n t^2); ties resolve to the lexicographically smallest choices."""
    coords = seq.coords()
    unary = -lam * seq.sims()
    n = seq.n
    # cost_to_go[i, j]: best objective of frames i.. given candidate j at frame i
    cost_to_go = np.empty_like(unary)
    cost_to_go[-1] = unary[-1]
    for i in range(n - 2, -1, -1):
        step = np.linalg.norm(coords[i][:, None, :] - coords[i + 1][None, :, :], axis=-1)
        cost_to_go[i] = unary[i] + (step + cost_to_go[i + 1][None, :]).min(axis=1)
    choices = [_first_min(cost_to_go[0])]
    for i in range(1, n):
        prev = coords[i - 1][choices[-1]]
        total = np.linalg.norm(coords[i] - prev[None, :], axis=-1) + cost_to_go[i]
        choices.append(_first_min(total))
    return choices


def dp_oracle(seq: CandidateSequence, lam: float = DEFAULT_LAMBDA) -> TrajectoryPrediction:
    """Exact minimiser of the path objective."""
    return make_prediction(seq, dp_choices(seq, lam), "dp", lam)


def affinity_matrix(seq: CandidateSequence, sigma: float = DEFAULT_SIGMA_M) -> np.ndarray:
    """Cross-frame affinities ``exp(-d/sigma) * (S_p + S_q + 2) / 4``; zero within a frame."""
    if sigma <= 0:
        raise UsageError(f"sigma must be positive, got {sigma}")
    xy = seq.coords().reshape(-1, 2)
    sims = seq.sims().reshape(-1)
    frame = np.repeat(np.arange(seq.n), seq.t)
    dist = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
    weights = np.exp(-dist / sigma) * (sims[:, None] + sims[None, :] + 2.0) / 4.0
    weights[frame[:, None] == frame[None, :]] = 0.0
    return weights


def replicator_dynamics(
    affinity: np.ndarray, tol: float = REPLICATOR_TOL, max_iter: int = REPLICATOR_MAX_ITER
) -> np.ndarray:
    """Iterate ``x <- x * (A x) / (x^T A x)`` from the barycentre until the L1 change drops below ``tol``."""
    size = affinity.shape[0]
    x = np.full(size, 1.0 / size)
    for iteration in range(max_iter):
        ax = affinity @ x
        denom = float(x @ ax)
        if denom <= 0.0:
            break
        nxt = x * ax / denom
        delta = float(np.abs(nxt - x).sum())
        x = nxt
        if delta < tol:
            logger.debug("replicator converged after %d iterations", iteration + 1)
            break
    return x


def dominant_set_choices(seq: CandidateSequence, sigma: float = DEFAULT_SIGMA_M) -> List[int]:
    fallback = nn_choices(seq)
    if seq.n == 1:
        # no cross-frame edges
        return fallback
    support = replicator_dynamics(affinity_matrix(seq, sigma)).reshape(seq.n, seq.t)
    choices = []
    for i in range(seq.n):
        if support[i].max() > SUPPORT_EPS:
            choices.append(int(np.argmax(support[i])))
        else:
            choices.append(fallback[i])
    return choices


def dominant_sets_baseline(
    seq: CandidateSequence, sigma: float = DEFAULT_SIGMA_M, lam: float = DEFAULT_LAMBDA
) -> TrajectoryPrediction:
    """Per frame, the candidate with the most weight in the dominant set; NN where it has none."""
    return make_prediction(seq, dominant_set_choices(seq, sigma), "ds", lam)


def transretriever_predict(
    model: TransRetriever, seq: CandidateSequence, lam: float = DEFAULT_LAMBDA
) -> TrajectoryPrediction:
    return make_prediction(seq, greedy_decode(model, seq.tokens()), "transretriever", lam)


def run_method(
    method: str,
    seq: CandidateSequence,
    lam: float = DEFAULT_LAMBDA,
    sigma: float = DEFAULT_SIGMA_M,
    model: Optional[TransRetriever] = None,
) -> TrajectoryPrediction:
    """Dispatch by method name."""
    runners: Dict[str, Callable[[], TrajectoryPrediction]] = {
        "nn": lambda: nn_baseline(seq, lam),
        "dp": lambda: dp_oracle(seq, lam),
        "ds": lambda: dominant_sets_baseline(seq, sigma, lam),
    }
    if method == "transretriever":
        if model is None:
            raise UsageError("method transretriever needs a trained retriever checkpoint")
        return transretriever_predict(model, seq, lam)
    if method not in runners:
        raise UsageError(f"unknown method {method!r}, expected one of {METHODS}")
    return runners[method]()
