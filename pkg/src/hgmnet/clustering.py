"""Column grouping: k-means initialization and per-iteration reassignment.

Columns of the data matrix are clustered as points in R^n.  Initialization
uses k-means++ seeding followed by Hartigan-Wong transfer passes: a column
moves from its cluster a to another cluster b when

    n_b/(n_b+1) ||x - c_b||^2  <  n_a/(n_a-1) ||x - c_a||^2,

with centers and counts updated immediately.  Transfers strictly reduce the
within-cluster sum of squares, so the pass loop terminates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DimensionMismatchError, KTooLargeError
from .model import DataMatrix, GroupAssignment


@dataclass(frozen=True, eq=False)
class KmeansResult:
    centers: np.ndarray  # n x k, column k is the mean of cluster k
    groups: GroupAssignment
    within_ss: float
    restarts: int


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Squared distances, points (p, n) x centers (k, n) -> (p, k)."""
    p2 = np.einsum("ij,ij->i", points, points)
    c2 = np.einsum("ij,ij->i", centers, centers)
    return p2[:, None] - 2.0 * points @ centers.T + c2[None, :]


def _kmeanspp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    p = points.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(p)
    d2 = np.maximum(_sq_dists(points, points[chosen[:1]])[:, 0], 0.0)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            chosen[i] = rng.integers(p)  # all mass on duplicates; pick uniformly
        else:
            r = rng.random() * total
            chosen[i] = min(np.searchsorted(np.cumsum(d2), r, side="right"), p - 1)
        d2 = np.minimum(d2, np.maximum(_sq_dists(points, points[chosen[i : i + 1]])[:, 0], 0.0))
    return points[chosen].copy()


def _repair_empty(labels: np.ndarray, k: int, points: np.ndarray) -> None:
    """Move the farthest-from-its-center column into each empty cluster."""
    counts = np.bincount(labels, minlength=k)
    while (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        centers = _means(points, labels, k, counts)
        d2 = _sq_dists(points, centers)
        own = d2[np.arange(labels.size), labels].copy()
        own[counts[labels] <= 1] = -np.inf  # never empty another cluster
        j = int(np.argmax(own))
        counts[labels[j]] -= 1
        labels[j] = empty
        counts[empty] += 1


def _means(points: np.ndarray, labels: np.ndarray, k: int, counts: np.ndarray) -> np.ndarray:
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    safe = np.maximum(counts, 1)
    return sums / safe[:, None]


@njit(cache=True)
def _hartigan_pass(points, labels, centers, counts):  # pragma: no cover - compiled
    p, n = points.shape
    k = centers.shape[0]
    moves = 0
    for j in range(p):
        a = labels[j]
        ca = counts[a]
        if ca <= 1:
            continue
        removal = 0.0
        best_b = -1
        best_cost = np.inf
        for b in range(k):
            d2 = 0.0
            for l in range(n):
                diff = points[j, l] - centers[b, l]
                d2 += diff * diff
            if b == a:
                removal = ca / (ca - 1.0) * d2
            else:
                cost = counts[b] / (counts[b] + 1.0) * d2
                if cost < best_cost:
                    best_cost = cost
                    best_b = b
        # strict improvement with a tiny relative margin so rounding noise
        # cannot cycle a column between two clusters forever
        if best_b >= 0 and best_cost < removal * (1.0 - 1e-12):
            cb = counts[best_b]
            for l in range(n):
                centers[a, l] = (centers[a, l] * ca - points[j, l]) / (ca - 1.0)
                centers[best_b, l] = (centers[best_b, l] * cb + points[j, l]) / (cb + 1.0)
            counts[a] -= 1
            counts[best_b] += 1
            labels[j] = best_b
            moves += 1
    return moves


def _within_ss(points: np.ndarray, labels: np.ndarray, k: int) -> float:
    counts = np.bincount(labels, minlength=k)
    centers = _means(points, labels, k, counts)
    resid = points - centers[labels]
    return float(np.einsum("ij,ij->", resid, resid))


_MAX_PASSES = 200


def kmeans_init(x: DataMatrix, k: int, seed: int, restarts: int = 1) -> KmeansResult:
    """Cluster the p columns of ``x`` into k groups.

    Runs ``restarts`` independent seeded runs (k-means++ seeding, nearest
    assignment, empty-cluster repair, Hartigan-Wong transfer passes) and
    keeps the run with the smallest within-cluster sum of squares.
    Deterministic given (seed, restarts).
    """
    if k < 1:
        raise DimensionMismatchError(f"k must be >= 1, got {k}")
    if k > x.p:
        raise KTooLargeError(f"k={k} groups but only {x.p} columns")
    if restarts < 1:
        raise DimensionMismatchError(f"restarts must be >= 1, got {restarts}")
    points = np.ascontiguousarray(x.values.T)
    rng = np.random.default_rng(seed)

    best_ss = np.inf
    best_labels = None
    for _ in range(restarts):
        centers = _kmeanspp_seed(points, k, rng)
        labels = np.argmin(_sq_dists(points, centers), axis=1).astype(np.int64)
        _repair_empty(labels, k, points)
        counts = np.bincount(labels, minlength=k)
        centers = _means(points, labels, k, counts)
        for _pass in range(_MAX_PASSES):
            if _hartigan_pass(points, labels, centers, counts.astype(np.float64)) == 0:
                break
            counts = np.bincount(labels, minlength=k)
            centers = _means(points, labels, k, counts)  # exact recompute, no drift
        ss = _within_ss(points, labels, k)
        if ss < best_ss:
            best_ss = ss
            best_labels = labels.copy()

    counts = np.bincount(best_labels, minlength=k)
    centers = _means(points, best_labels, k, counts)
    groups = GroupAssignment(best_labels, k)
    return KmeansResult(np.ascontiguousarray(centers.T), groups, best_ss, restarts)


def _nearest_labels(
    x: DataMatrix, z: np.ndarray, phi: np.ndarray | None = None
) -> tuple[np.ndarray, int]:
    """Labels by nearest latent signal; returns (labels, n_repaired).

    With ``phi`` given, distances are the objective-aligned
    ||x_j - z_k||^2 / (n phi_k) + log phi_k instead of plain Euclidean.
    """
    if z.shape[0] != x.n:
        raise DimensionMismatchError("z rows must match data rows")
    k = z.shape[1]
    points = np.ascontiguousarray(x.values.T)
    d2 = _sq_dists(points, np.ascontiguousarray(z.T))
    if phi is not None:
        d2 = d2 / (x.n * phi)[None, :] + np.log(phi)[None, :]
    labels = np.argmin(d2, axis=1).astype(np.int64)
    counts = np.bincount(labels, minlength=k)
    n_empty = int((counts == 0).sum())
    if n_empty:
        _repair_empty(labels, k, points)
    return labels, n_empty


def reassign_groups(x: DataMatrix, z: np.ndarray, phi: np.ndarray | None = None) -> GroupAssignment:
    """Assign every column to the group of its nearest latent signal.

    Ties go to the smallest group index; empty groups are repaired by
    moving in the farthest-from-its-center column.  Pass ``phi`` to use
    noise-weighted distances (see ``_nearest_labels``).
    """
    labels, _ = _nearest_labels(x, z, phi)
    return GroupAssignment(labels, z.shape[1])


def coherence_rates(estimated: GroupAssignment, truth: GroupAssignment) -> np.ndarray:
    """Per true group: largest fraction captured by a single estimated group.

    r_k = max_i |Ghat_i intersect G_k| / |G_k|, in (0, 1]; r_k = 1 means
    group k was recovered whole (possibly merged with others).
    """
    if estimated.p != truth.p:
        raise DimensionMismatchError("assignments cover different numbers of columns")
    table = np.zeros((estimated.k, truth.k), dtype=np.int64)
    np.add.at(table, (estimated.labels, truth.labels), 1)
    return table.max(axis=0) / truth.sizes
