"""Synthetic candidate benchmarks for the trajectory selection methods.

`noisy_sequence` draws a smooth trajectory, places the correct candidate of
each frame on it and scatters distractors around it. Similarities are
noisy and, on a fraction of frames, one distractor is boosted above the
correct candidate so that per-frame nearest-neighbour selection errs while
temporal consistency still identifies the right tile.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from geotrack.errors import EmptyInputError, UsageError
from geotrack.geo.geodesy import FALSE_EASTING, utm_to_latlon_arrays
from geotrack.models.retriever import TransRetriever
from geotrack.utils.data_utils import make_rng

from .candidates import CandidateSequence, CandidateToken
from .methods import DEFAULT_LAMBDA, DEFAULT_SIGMA_M, METHODS, dp_choices, run_method

logger = logging.getLogger(__name__)

BENCH_ZONE = 18
BENCH_NORTHING = 4_430_000.0
LAMBDA_GRID = (10.0, 25.0, 50.0, 100.0)


@dataclass
class NoiseSpec:
    """Parameters of the noisy candidate benchmark."""

    frames: int = 40
    candidates: int = 10
    step_m: float = 10.0
    turn_sd_deg: float = 15.0
    spread_m: float = 200.0
    min_offset_m: float = 60.0
    correct_sim: float = 0.7
    distractor_sim: float = 0.45
    sim_sd: float = 0.08
    corrupt_prob: float = 0.35
    jitter_m: float = 2.0


def _sequence_from_xy(
    xy: np.ndarray, sims: np.ndarray, truth_xy: np.ndarray, labels: List[int], video_id: str
) -> CandidateSequence:
    n, t, _ = xy.shape
    lat, lon = utm_to_latlon_arrays(xy[..., 0].ravel(), xy[..., 1].ravel(), BENCH_ZONE, "N")
    lat, lon = lat.reshape(n, t), lon.reshape(n, t)
    sets = [
        [
            CandidateToken(
                utm_x=float(xy[i, j, 0]),
                utm_y=float(xy[i, j, 1]),
                sim=float(sims[i, j]),
                source_id=f"{video_id}-f{i:03d}-c{j:02d}",
                lat=float(lat[i, j]),
                lon=float(lon[i, j]),
            )
            for j in range(t)
        ]
        for i in range(n)
    ]
    tlat, tlon = utm_to_latlon_arrays(truth_xy[:, 0], truth_xy[:, 1], BENCH_ZONE, "N")
    return CandidateSequence(
        sets=sets,
        zone=BENCH_ZONE,
        hemisphere="N",
        video_id=video_id,
        frame_ids=[f"{video_id}-f{i:03d}" for i in range(n)],
        truth=list(zip(tlat.tolist(), tlon.tolist())),
        labels=labels,
    )


def noisy_sequence(rng: np.random.Generator, spec: Optional[NoiseSpec] = None, video_id: str = "bench") -> CandidateSequence:
    """One labelled benchmark sequence; candidates are listed by descending similarity."""
    spec = spec or NoiseSpec()
    n, t = spec.frames, spec.candidates
    heading = rng.uniform(0, 2 * np.pi)
    truth = np.zeros((n, 2))
    truth[0] = (FALSE_EASTING + rng.uniform(-1000, 1000), BENCH_NORTHING + rng.uniform(-1000, 1000))
    for i in range(1, n):
        heading += np.radians(rng.normal(0.0, spec.turn_sd_deg))
        truth[i] = truth[i - 1] + spec.step_m * np.array([np.cos(heading), np.sin(heading)])

    xy = np.zeros((n, t, 2))
    sims = np.zeros((n, t))
    labels = []
    for i in range(n):
        radius = rng.uniform(spec.min_offset_m, spec.spread_m, size=t - 1)
        angle = rng.uniform(0, 2 * np.pi, size=t - 1)
        distractors = truth[i] + np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=-1)
        correct = truth[i] + rng.normal(0.0, spec.jitter_m, size=2)
        points = np.vstack([correct[None, :], distractors])
        s = np.concatenate(
            [
                [rng.normal(spec.correct_sim, spec.sim_sd)],
                rng.normal(spec.distractor_sim, spec.sim_sd, size=t - 1),
            ]
        )
        if t > 1 and rng.random() < spec.corrupt_prob:
            s[1 + rng.integers(t - 1)] = s[0] + rng.uniform(0.05, 0.2)
        s = np.clip(s, -1.0, 1.0)
        order = np.argsort(-s, kind="stable")
        xy[i], sims[i] = points[order], s[order]
        labels.append(int(np.flatnonzero(order == 0)[0]))
    return _sequence_from_xy(xy, sims, truth, labels, video_id)


def noisy_benchmark(count: int, seed: int = 0, spec: Optional[NoiseSpec] = None) -> List[CandidateSequence]:
    """``count`` independent sequences, reproducible from ``seed``."""
    return [noisy_sequence(make_rng(seed, 7, i), spec, video_id=f"bench{i:04d}") for i in range(count)]


def adversarial_fixture() -> CandidateSequence:
    """Nine frames on a straight 10 m-step line, three candidates each.

    The correct tile sits on the line; two distractors lie 250 m and 400 m
    away in scattered directions. Frame 4 has a far distractor whose
    similarity beats the correct tile, so per-frame NN jumps off the road
    while a consistency-aware method stays on it.
    """
    n = 9
    truth = np.stack([FALSE_EASTING + 10.0 * np.arange(n), np.full(n, BENCH_NORTHING)], axis=-1)
    theta = 2.4 * np.arange(n)
    near = truth + 250.0 * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    far = truth + 400.0 * np.stack([np.cos(theta + np.pi), np.sin(theta + np.pi)], axis=-1)
    points = np.stack([truth, near, far], axis=1)
    sims = np.tile(np.array([0.8, 0.5, 0.4]), (n, 1))
    sims[4, 1] = 0.95
    order = np.argsort(-sims, axis=1, kind="stable")
    xy = np.take_along_axis(points, order[..., None], axis=1)
    sims = np.take_along_axis(sims, order, axis=1)
    labels = [int(np.flatnonzero(row == 0)[0]) for row in order]
    return _sequence_from_xy(xy, sims, truth, labels, "adversarial")


@dataclass
class MethodScore:
    """Mean frame accuracy and mean path objective of one method."""

    method: str
    frame_accuracy: float = 0.0
    objective: float = 0.0
    per_sequence: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {"method": self.method, "frame_accuracy": self.frame_accuracy, "objective": self.objective}


def frame_accuracy(choices: Sequence[int], labels: Sequence[int]) -> float:
    return float(np.mean(np.asarray(choices) == np.asarray(labels)))


def compare_methods(
    sequences: Sequence[CandidateSequence],
    methods: Sequence[str] = ("nn", "ds", "dp"),
    lam: float = DEFAULT_LAMBDA,
    sigma: float = DEFAULT_SIGMA_M,
    model: Optional[TransRetriever] = None,
) -> Dict[str, MethodScore]:
    """Score each method on labelled sequences."""
    if not sequences:
        raise EmptyInputError("no sequences to compare methods on")
    scores = {}
    for method in methods:
        if method not in METHODS:
            raise UsageError(f"unknown method {method!r}, expected one of {METHODS}")
        accuracies, objectives = [], []
        for seq in sequences:
            pred = run_method(method, seq, lam=lam, sigma=sigma, model=model)
            objectives.append(pred.objective)
            if seq.labels is not None:
                accuracies.append(frame_accuracy(pred.choices, seq.labels))
        scores[method] = MethodScore(
            method=method,
            frame_accuracy=float(np.mean(accuracies)) if accuracies else float("nan"),
            objective=float(np.mean(objectives)),
            per_sequence=objectives,
        )
        logger.info("method %s: accuracy %.4f objective %.2f", method, scores[method].frame_accuracy, scores[method].objective)
    return scores


def tune_lambda(
    sequences: Sequence[CandidateSequence], grid: Sequence[float] = LAMBDA_GRID
) -> Tuple[float, Dict[float, float]]:
    """Pick the λ whose DP choices best match the labels; the first grid value wins ties."""
    labelled = [s for s in sequences if s.labels is not None]
    if not labelled:
        raise EmptyInputError("lambda tuning needs labelled sequences")
    accuracy = {}
    for lam in grid:
        accuracy[float(lam)] = float(np.mean([frame_accuracy(dp_choices(s, lam), s.labels) for s in labelled]))
    best = max(accuracy, key=lambda lam: (accuracy[lam], -list(accuracy).index(lam)))
    logger.info("tuned lambda=%s over %s", best, accuracy)
    return best, accuracy
