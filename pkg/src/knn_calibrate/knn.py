"""Exact top-k retrieval and temperature-scaled aggregation into class probabilities."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .store import DataError, EmbeddingStore

METRICS = ("euclidean", "cosine")

UNIT_NORM_TOL = 1e-4


@dataclass(frozen=True)
class NeighborSet:
    """Retrieved neighbors sorted ascending by distance, ties by store index.

    Cosine distances are stored as (1 - cosine similarity) so that "smaller
    is closer" holds for both metrics.
    """

    indices: np.ndarray  # (m,) int64 store rows
    distances: np.ndarray  # (m,) float64, nonnegative
    labels: np.ndarray  # (m,) int64
    k: int
    metric: str

    def __len__(self) -> int:
        return self.indices.shape[0]


def _check_unit(name: str, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise DataError(f"{name} must be a 1-D vector")
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise DataError(f"{name} is not unit-norm (|v| = {norm:.6g})")
    return v


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise DataError(f"unknown metric {metric!r} (expected one of {METRICS})")


def distance(q: np.ndarray, x: np.ndarray, metric: str = "euclidean") -> float:
    """Distance between two unit vectors: ||q - x|| or 1 - q.x."""
    _check_metric(metric)
    q = _check_unit("q", q)
    x = _check_unit("x", x)
    if q.shape != x.shape:
        raise DataError(f"dimension mismatch: {q.shape[0]} vs {x.shape[0]}")
    if metric == "euclidean":
        return float(np.sqrt(np.square(q - x).sum()))
    return float(max(1.0 - (q * x).sum(), 0.0))


def _all_distances(store: EmbeddingStore, q: np.ndarray, metric: str) -> np.ndarray:
    # f32 store rows, f64 accumulation; elementwise square/sum so that a
    # per-row evaluation reproduces the same floating-point result
    vectors = store.vectors.astype(np.float64)
    if metric == "euclidean":
        return np.sqrt(np.square(vectors - q).sum(axis=1))
    return np.maximum(1.0 - (vectors * q).sum(axis=1), 0.0)


def retrieve(
    store: EmbeddingStore,
    q: np.ndarray,
    k: int,
    metric: str = "euclidean",
    exclude: int | None = None,
) -> NeighborSet:
    """Exact top-k rows of the store by distance to ``q``.

    ``exclude`` removes one store row from the candidates (leave-one-out).
    If k exceeds the candidate count, all candidates are returned with a
    warning; the few-shot setting makes this collision routine.
    """
    _check_metric(metric)
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    q = _check_unit("q", q)
    if q.shape[0] != store.dim:
        raise DataError(f"query dimension {q.shape[0]} does not match store D={store.dim}")
    if exclude is not None and not 0 <= exclude < store.n:
        raise DataError(f"exclude index {exclude} out of range [0, {store.n})")

    dist = _all_distances(store, q, metric)
    available = store.n
    if exclude is not None:
        dist[exclude] = np.inf
        available -= 1
    if k > available:
        warnings.warn(
            f"k={k} exceeds {available} available candidates; clamping",
            stacklevel=2,
        )
    take = min(k, available)
    # stable sort on distance breaks ties by ascending store index
    order = np.argsort(dist, kind="stable")[:take]
    return NeighborSet(
        indices=order.astype(np.int64),
        distances=dist[order],
        labels=store.labels[order],
        k=k,
        metric=metric,
    )


def aggregate(neighbors: NeighborSet, tau: float, class_count: int) -> np.ndarray:
    """Softmax over negative neighbor distances, summed within label subsets.

    Classes with no retrieved neighbor get exact probability 0. The minimum
    distance is subtracted before exponentiation (the ratio is shift
    invariant), which keeps tau=0.01 from underflowing.
    """
    if len(neighbors) == 0:
        raise DataError("cannot aggregate an empty neighbor set")
    if tau <= 0:
        raise DataError(f"tau must be positive, got {tau}")
    shifted = neighbors.distances - neighbors.distances.min()
    weights = np.exp(-shifted / tau)
    probs = np.bincount(neighbors.labels, weights=weights, minlength=class_count)
    return probs / probs.sum()


def knn_predict(
    store: EmbeddingStore,
    q: np.ndarray,
    k: int,
    tau: float,
    metric: str = "euclidean",
    exclude: int | None = None,
) -> np.ndarray:
    """Retrieve then aggregate: the class distribution of the lazy learner."""
    neighbors = retrieve(store, q, k, metric=metric, exclude=exclude)
    return aggregate(neighbors, tau, store.class_count)
