"""Deterministic seeded k-means for grouping step embeddings.

This is a plain Lloyd's loop with k-means++ seeding, written in-repo
instead of delegated so that every tie-break is pinned down: a point
equidistant from two centroids goes to the lower centroid id, an empty
cluster steals the point currently farthest from its own centroid
(ties toward the lower point index), and the whole run is a pure
function of (points, k, seed).
"""

from __future__ import annotations

import numpy as np

DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-6


def _kmeans_pp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = points[first]
    nearest_sq = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = float(nearest_sq.sum())
        if total <= 0.0:
            # All remaining points coincide with a chosen centroid.
            index = int(rng.integers(n))
        else:
            index = int(rng.choice(n, p=nearest_sq / total))
        centroids[j] = points[index]
        nearest_sq = np.minimum(nearest_sq, ((points - centroids[j]) ** 2).sum(axis=1))
    return centroids


def _assign_with_repair(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    distances = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    labels = distances.argmin(axis=1)  # argmin ties resolve to the lower id
    counts = np.bincount(labels, minlength=centroids.shape[0])
    for empty in np.flatnonzero(counts == 0):
        own_distance = distances[np.arange(points.shape[0]), labels].copy()
        own_distance[counts[labels] <= 1] = -np.inf  # do not empty another cluster
        donor = int(own_distance.argmax())
        if own_distance[donor] == -np.inf:
            continue
        counts[labels[donor]] -= 1
        labels[donor] = empty
        counts[empty] += 1
    return labels


def kmeans(
    points: np.ndarray,
    k: int,
    seed: int,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster points into k groups; returns (centroids, labels).

    Iterates until no centroid moves more than ``tol`` (L2) or
    ``max_iter`` passes, whichever comes first. Requires k <= n.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in 1..{n}, got {k}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        labels = _assign_with_repair(points, centroids)
        updated = centroids.copy()
        for j in range(k):
            members = points[labels == j]
            if members.shape[0] > 0:
                updated[j] = members.mean(axis=0)
        movement = float(np.linalg.norm(updated - centroids, axis=1).max())
        centroids = updated
        if movement < tol:
            break
    return centroids, labels
