"""Weighted point-set compression: k-center variants and sampling baselines.

All methods return a CompressionResult whose centers carry the aggregated
cluster weights (random keeps uniform W/k weights instead). Deterministic
given (input, parameters, seed).
"""

from __future__ import annotations

import numpy as np

from wassalign.core import (
    CompressionResult,
    ConsistencyError,
    WeightedPointSet,
    diameter_estimate,
    squared_distances,
)

_KMEANS_OBJECTIVE_RTOL = 1e-9


def _identity_result(P: WeightedPointSet, method_tag: str, seed: int) -> CompressionResult:
    return CompressionResult(
        centers=WeightedPointSet(P.points, P.weights),
        assignment=np.arange(P.n, dtype=np.intp),
        radius=0.0,
        method_tag=method_tag,
        seed=seed,
        ball_radius=0.0 if method_tag == "kcenter+" else None,
    )


def _greedy_centers(points: np.ndarray, start: int, k: int, stop_radius2: float | None):
    """Farthest-point traversal from ``start``.

    Maintains the squared distance to the current center set so each added
    center costs one O(n d) scan. Stops early once the covering radius falls
    to ``stop_radius2`` (if given) or all residual distances hit zero.
    """
    n = points.shape[0]
    centers = [start]
    assign = np.zeros(n, dtype=np.intp)
    d2 = ((points - points[start]) ** 2).sum(axis=1)
    np.maximum(d2, 0.0, out=d2)
    while len(centers) < k:
        if stop_radius2 is not None and d2.max() <= stop_radius2:
            break
        far = int(np.argmax(d2))
        if d2[far] <= 0.0:
            break
        centers.append(far)
        nd2 = ((points - points[far]) ** 2).sum(axis=1)
        closer = nd2 < d2
        assign[closer] = len(centers) - 1
        np.minimum(d2, nd2, out=d2)
        np.maximum(d2, 0.0, out=d2)
    return np.asarray(centers, dtype=np.intp), assign, float(np.sqrt(d2.max()))


def _aggregate(P: WeightedPointSet, center_points: np.ndarray, assign: np.ndarray) -> WeightedPointSet:
    weights = np.bincount(assign, weights=P.weights, minlength=center_points.shape[0])
    return WeightedPointSet(center_points, weights)


def gonzalez_kcenter(P: WeightedPointSet, k: int, seed: int = 0) -> CompressionResult:
    """Greedy 2-approximate k-center: repeatedly add the farthest point.

    The first center is drawn uniformly from the seed; farthest-point ties go
    to the lowest index. k >= n degenerates to every point being its own
    center.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k >= P.n:
        return _identity_result(P, "kcenter", seed)
    start = int(np.random.default_rng(seed).integers(P.n))
    idx, assign, radius = _greedy_centers(P.points, start, k, None)
    return CompressionResult(
        centers=_aggregate(P, P.points[idx], assign),
        assignment=assign,
        radius=radius,
        method_tag="kcenter",
        seed=seed,
    )


def gonzalez_adaptive(
    P: WeightedPointSet, epsilon: float, k_cap: int, seed: int = 0
) -> CompressionResult:
    """Greedy k-center run until the radius drops to epsilon * estimated diameter.

    The diameter estimate comes from one distance scan and sits within a
    factor two of the true diameter, so success implies radius <= epsilon
    times the true diameter as well. Hitting ``k_cap`` first returns the best
    covering found with the truncated flag set.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if k_cap < 1:
        raise ValueError(f"k_cap must be >= 1, got {k_cap}")
    threshold = epsilon * diameter_estimate(P)
    start = int(np.random.default_rng(seed).integers(P.n))
    idx, assign, radius = _greedy_centers(P.points, start, k_cap, threshold * threshold)
    return CompressionResult(
        centers=_aggregate(P, P.points[idx], assign),
        assignment=assign,
        radius=radius,
        method_tag="kcenter",
        seed=seed,
        truncated=radius > threshold,
    )


def _cluster_means(
    points: np.ndarray, weights: np.ndarray, assign: np.ndarray, fallback: np.ndarray
) -> np.ndarray:
    """Weighted per-cluster means; weightless clusters keep their fallback row."""
    k = fallback.shape[0]
    sums = np.zeros_like(fallback)
    np.add.at(sums, assign, weights[:, None] * points)
    totals = np.bincount(assign, weights=weights, minlength=k)
    means = fallback.copy()
    filled = totals > 0.0
    means[filled] = sums[filled] / totals[filled, None]
    return means


def kcenter_plus(P: WeightedPointSet, k: int, seed: int = 0) -> CompressionResult:
    """Gonzalez clusters with each ball center replaced by the cluster mean.

    The assignment is kept, so per-point distances can grow, but the weighted
    sum of squared displacements within each cluster never increases. Both
    the refined radius and the original ball radius are reported.
    """
    base = gonzalez_kcenter(P, k, seed)
    means = _cluster_means(P.points, P.weights, base.assignment, base.centers.points)
    shifted = np.sqrt(
        np.maximum(((P.points - means[base.assignment]) ** 2).sum(axis=1), 0.0)
    )
    return CompressionResult(
        centers=WeightedPointSet(means, base.centers.weights),
        assignment=base.assignment,
        radius=float(shifted.max(initial=0.0)),
        method_tag="kcenter+",
        seed=seed,
        ball_radius=base.radius,
    )


def _kmeans_plus_plus(points, weights, k, rng):
    n = points.shape[0]
    first = int(rng.choice(n, p=weights / weights.sum()))
    chosen = [first]
    d2 = ((points - points[first]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        mass = weights * np.maximum(d2, 0.0)
        total = mass.sum()
        if total <= 0.0:
            # all residual distance is zero; any point works
            nxt = int(rng.integers(n))
        else:
            nxt = int(rng.choice(n, p=mass / total))
        chosen.append(nxt)
        nd2 = ((points - points[nxt]) ** 2).sum(axis=1)
        np.minimum(d2, nd2, out=d2)
    return points[chosen].copy()


def kmeans_compress(
    P: WeightedPointSet, k: int, seed: int = 0, max_iters: int = 100
) -> CompressionResult:
    """Weighted Lloyd iterations from k-means++ seeding.

    Stops when assignments stabilize or after max_iters. Empty clusters are
    re-seeded at the point farthest from its current center. The weighted
    within-cluster objective is checked to be non-increasing every step.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be >= 1, got {max_iters}")
    if k >= P.n:
        return _identity_result(P, "kmeans", seed)
    rng = np.random.default_rng(seed)
    centers = _kmeans_plus_plus(P.points, P.weights, k, rng)
    assign = None
    objective = np.inf
    for _ in range(max_iters):
        d2 = squared_distances(P.points, centers)
        new_assign = d2.argmin(axis=1)
        best = d2[np.arange(P.n), new_assign]
        empty = np.setdiff1d(np.arange(k), new_assign, assume_unique=False)
        for c in empty:
            runaway = int(np.argmax(best))
            centers[c] = P.points[runaway]
            new_assign[runaway] = c
            best[runaway] = 0.0
        new_objective = float((P.weights * best).sum())
        if new_objective > objective * (1.0 + _KMEANS_OBJECTIVE_RTOL) + 1e-30:
            raise ConsistencyError(
                f"k-means objective rose from {objective:.6e} to {new_objective:.6e}"
            )
        objective = new_objective
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        centers = _cluster_means(P.points, P.weights, assign, centers)
    return CompressionResult(
        centers=_aggregate(P, centers, assign),
        assignment=assign,
        radius=_assigned_radius(P.points, centers, assign),
        method_tag="kmeans",
        seed=seed,
    )


def _assigned_radius(points: np.ndarray, centers: np.ndarray, assign: np.ndarray) -> float:
    # direct subtraction: the gemm-based matrix carries cancellation noise
    gaps = ((points - centers[assign]) ** 2).sum(axis=1)
    return float(np.sqrt(max(float(gaps.max(initial=0.0)), 0.0)))


def _nearest_assignment(points: np.ndarray, centers: np.ndarray):
    d2 = squared_distances(points, centers)
    assign = d2.argmin(axis=1).astype(np.intp)
    return assign, _assigned_radius(points, centers, assign)


def random_compress(P: WeightedPointSet, k: int, seed: int = 0) -> CompressionResult:
    """k points sampled uniformly without replacement, each weighted W_P / k.

    The nearest-sample assignment is recorded for radius reporting only; the
    sample weights ignore the clusters entirely.
    """
    if not 1 <= k <= P.n:
        raise ValueError(f"k must be in [1, {P.n}], got {k}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(P.n, size=k, replace=False)
    centers = P.points[idx]
    assign, radius = _nearest_assignment(P.points, centers)
    weights = np.full(k, P.total_weight / k)
    return CompressionResult(
        centers=WeightedPointSet(centers, weights),
        assignment=assign,
        radius=radius,
        method_tag="random",
        seed=seed,
    )


def random_plus_compress(P: WeightedPointSet, k: int, seed: int = 0) -> CompressionResult:
    """Uniform samples like random, but weighted by their assigned clusters."""
    if not 1 <= k <= P.n:
        raise ValueError(f"k must be in [1, {P.n}], got {k}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(P.n, size=k, replace=False)
    centers = P.points[idx]
    assign, radius = _nearest_assignment(P.points, centers)
    return CompressionResult(
        centers=_aggregate(P, centers, assign),
        assignment=assign,
        radius=radius,
        method_tag="random+",
        seed=seed,
    )


_FIXED_K_METHODS = {
    "kcenter": gonzalez_kcenter,
    "kcenter+": kcenter_plus,
    "kmeans": kmeans_compress,
    "random": random_compress,
    "random+": random_plus_compress,
}


def compress(P: WeightedPointSet, method: str, k: int, seed: int = 0) -> CompressionResult:
    """Dispatch a fixed-k compression by method tag."""
    try:
        fn = _FIXED_K_METHODS[method]
    except KeyError:
        raise ValueError(
            f"unknown compression method {method!r}; expected one of {sorted(_FIXED_K_METHODS)}"
        ) from None
    return fn(P, k, seed)
