"""Non-neural humanizers: quantized, linear regression and KNN retrieval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrainingSet, ShapeMismatch
from .representation import MAX_OFFSET, GrooveTensor


@dataclass(frozen=True, slots=True)
class TrainStats:
    """Corpus-level statistics used by the quantized baseline."""

    mean_velocity: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean_velocity <= 1.0:
            raise ValueError(f"mean velocity {self.mean_velocity} outside [0, 1]")


@dataclass(slots=True)
class LinearParams:
    """Ridge weights mapping flattened hits (plus bias) to velocities and offsets."""

    weights_velocity: np.ndarray  # (T*M + 1, T*M)
    weights_offset: np.ndarray  # (T*M + 1, T*M)

    def __post_init__(self) -> None:
        if self.weights_velocity.shape != self.weights_offset.shape:
            raise ValueError("velocity and offset weight shapes differ")
        if not (np.isfinite(self.weights_velocity).all() and np.isfinite(self.weights_offset).all()):
            raise ValueError("non-finite linear weights")


def compute_train_stats(corpus: list[GrooveTensor]) -> TrainStats:
    """Mean velocity over every hit in the training windows."""
    if not corpus:
        raise EmptyTrainingSet("no training windows")
    total = sum(float(g.velocities.sum()) for g in corpus)
    hits = sum(g.hit_count() for g in corpus)
    if hits == 0:
        raise EmptyTrainingSet("training windows contain no hits")
    return TrainStats(mean_velocity=total / hits)


def quantized_baseline(hits: np.ndarray, stats: TrainStats, tempo_bpm: float = 120.0) -> GrooveTensor:
    """All offsets 0, all hit velocities at the training mean."""
    hits = np.asarray(hits, dtype=np.float64)
    return GrooveTensor(
        hits=hits.copy(),
        velocities=hits * stats.mean_velocity,
        offsets=np.zeros_like(hits),
        tempo_bpm=tempo_bpm,
    )


def _design_matrix(grooves: list[GrooveTensor]) -> np.ndarray:
    rows = [g.hits.reshape(-1) for g in grooves]
    X = np.stack(rows)
    return np.hstack([X, np.ones((X.shape[0], 1))])


def linear_fit(corpus: list[GrooveTensor], ridge_lambda: float = 1e-3) -> LinearParams:
    """Closed-form ridge regression of hits against velocities and offsets.

    The bias row is not penalized, so large lambda shrinks predictions
    toward the per-cell target means.
    """
    if not corpus:
        raise EmptyTrainingSet("no training windows")
    if ridge_lambda <= 0:
        raise ValueError("ridge lambda must be > 0 for a unique solution")
    X = _design_matrix(corpus)
    Yv = np.stack([g.velocities.reshape(-1) for g in corpus])
    Yo = np.stack([g.offsets.reshape(-1) for g in corpus])
    penalty = ridge_lambda * np.eye(X.shape[1])
    penalty[-1, -1] = 0.0
    gram = X.T @ X + penalty
    weights_velocity = np.linalg.solve(gram, X.T @ Yv)
    weights_offset = np.linalg.solve(gram, X.T @ Yo)
    return LinearParams(weights_velocity=weights_velocity, weights_offset=weights_offset)


def linear_humanize(hits: np.ndarray, params: LinearParams, tempo_bpm: float = 120.0) -> GrooveTensor:
    """Predict velocities/offsets linearly, clamp into range and mask to hits."""
    hits = np.asarray(hits, dtype=np.float64)
    x = np.concatenate([hits.reshape(-1), [1.0]])
    velocities = np.clip(x @ params.weights_velocity, 0.0, 1.0).reshape(hits.shape)
    offsets = np.clip(x @ params.weights_offset, -0.5, MAX_OFFSET).reshape(hits.shape)
    return GrooveTensor(
        hits=hits.copy(),
        velocities=velocities * hits,
        offsets=offsets * hits,
        tempo_bpm=tempo_bpm,
    )


def knn_similarity(hits_a: np.ndarray, hits_b: np.ndarray) -> int:
    """Notes in common between two hit matrices (Hadamard-product count).

    A similarity, not a distance: larger means closer.
    """
    hits_a = np.asarray(hits_a)
    hits_b = np.asarray(hits_b)
    if hits_a.shape != hits_b.shape:
        raise ShapeMismatch(f"{hits_a.shape} vs {hits_b.shape}")
    return int((hits_a * hits_b).sum())


def knn_neighbors(hits: np.ndarray, trainset: list[GrooveTensor], k: int) -> list[int]:
    """Indices of the k most similar training windows.

    Ties break by training-set index order, so a fixed input ordering gives
    identical neighbor sets across runs.
    """
    if not trainset:
        raise EmptyTrainingSet("no training windows to retrieve from")
    if k < 1 or k > len(trainset):
        raise ValueError(f"k={k} outside 1..{len(trainset)}")
    similarities = np.array([knn_similarity(hits, g.hits) for g in trainset])
    order = np.argsort(-similarities, kind="stable")
    return order[:k].tolist()


def knn_humanize(
    hits: np.ndarray, trainset: list[GrooveTensor], k: int = 20, tempo_bpm: float = 120.0
) -> GrooveTensor:
    """Element-wise mean groove of the k most similar training windows.

    Entries where the input has no hit are ignored (zeroed).
    """
    hits = np.asarray(hits, dtype=np.float64)
    neighbors = knn_neighbors(hits, trainset, k)
    # sequential accumulation in neighbor order keeps the means reproducible
    velocities = sum(trainset[i].velocities for i in neighbors) / k
    offsets = sum(trainset[i].offsets for i in neighbors) / k
    return GrooveTensor(
        hits=hits.copy(),
        velocities=velocities * hits,
        offsets=offsets * hits,
        tempo_bpm=tempo_bpm,
    )
