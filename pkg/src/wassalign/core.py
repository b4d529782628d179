"""Core types and geometric primitives shared by every other module."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

WEIGHT_SUM_RTOL = 1e-12
ORTHOGONALITY_ATOL = 1e-9
CAPACITY_RTOL = 1e-9
TOTAL_FLOW_RTOL = 1e-9
RADIUS_ATOL = 1e-9

COMPRESSION_METHODS = ("kcenter", "kcenter+", "kmeans", "random", "random+")


class NumericalError(RuntimeError):
    """A solve or downstream computation failed numerically."""


class ConvergenceError(NumericalError):
    """Iteration budget exhausted before the requested tolerance."""

    def __init__(self, message: str, last_violation: float | None = None):
        super().__init__(message)
        self.last_violation = last_violation


class ConsistencyError(NumericalError):
    """An invariant that should hold mathematically was violated."""


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class WeightedPointSet:
    """n points in R^d with nonnegative weights.

    ``points`` is (n, d) float64 and ``weights`` is (n,) float64.
    ``total_weight`` is cached at construction. Zero-weight points are
    permitted (they can never receive flow) but the total must be positive.
    """

    points: np.ndarray
    weights: np.ndarray
    total_weight: float = field(init=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2:
            raise ValueError(f"points must be a 2-D array, got shape {pts.shape}")
        n, d = pts.shape
        if n < 1 or d < 1:
            raise ValueError(f"need n >= 1 and d >= 1, got shape {pts.shape}")
        w = np.array(self.weights, dtype=np.float64, copy=True).reshape(-1)
        if w.shape[0] != n:
            raise ValueError(f"{n} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain NaN or Inf")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights contain NaN or Inf")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        total = float(w.sum())
        if total <= 0.0:
            raise ValueError("total weight must be positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "total_weight", total)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class RigidTransform:
    """Map x -> R x + v with R orthogonal; det(R) = -1 (reflection) is allowed."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64, copy=True)
        if rot.ndim != 2 or rot.shape[0] != rot.shape[1]:
            raise ValueError(f"rotation must be square, got shape {rot.shape}")
        d = rot.shape[0]
        vec = np.array(self.translation, dtype=np.float64, copy=True).reshape(-1)
        if vec.shape[0] != d:
            raise ValueError(f"translation has dimension {vec.shape[0]}, rotation {d}")
        if not (np.all(np.isfinite(rot)) and np.all(np.isfinite(vec))):
            raise ValueError("transform contains NaN or Inf")
        gram_err = np.abs(rot.T @ rot - np.eye(d)).max()
        if gram_err > ORTHOGONALITY_ATOL:
            raise ValueError(f"rotation is not orthogonal (max |R^T R - I| = {gram_err:.3e})")
        det = np.linalg.det(rot)
        if abs(abs(det) - 1.0) > ORTHOGONALITY_ATOL:
            raise ValueError(f"|det R| = {abs(det):.12f}, expected 1")
        rot.setflags(write=False)
        vec.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", vec)

    @property
    def d(self) -> int:
        return self.rotation.shape[0]

    @classmethod
    def identity(cls, d: int) -> "RigidTransform":
        return cls(np.eye(d), np.zeros(d))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


@dataclass(frozen=True)
class TransportPlan:
    """Sparse nonnegative flow between a source and a target point set.

    Entries are parallel arrays (sources[t], targets[t]) -> flows[t] > 0,
    indices 0-based over the original sets. ``normalized_distance`` is
    cost / (fraction * min{W_A, W_B}); an all-empty plan (degenerate
    normalizer 0) reports distance 0.
    """

    sources: np.ndarray
    targets: np.ndarray
    flows: np.ndarray
    total_flow: float
    cost: float
    normalized_distance: float
    n_source: int
    n_target: int

    def __post_init__(self):
        src = _frozen_array(self.sources, np.int64).reshape(-1)
        tgt = _frozen_array(self.targets, np.int64).reshape(-1)
        flw = _frozen_array(self.flows, np.float64).reshape(-1)
        if not (src.shape == tgt.shape == flw.shape):
            raise ValueError("sources, targets and flows must have equal length")
        if flw.size and not np.all(flw > 0.0):
            raise ValueError("stored flow entries must be strictly positive")
        if flw.size:
            if src.min() < 0 or src.max() >= self.n_source:
                raise ValueError("source index out of range")
            if tgt.min() < 0 or tgt.max() >= self.n_target:
                raise ValueError("target index out of range")
        object.__setattr__(self, "sources", src)
        object.__setattr__(self, "targets", tgt)
        object.__setattr__(self, "flows", flw)

    @property
    def nnz(self) -> int:
        return self.flows.shape[0]

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for i, j, f in zip(self.sources, self.targets, self.flows):
            yield int(i), int(j), float(f)

    def as_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_source, self.n_target))
        np.add.at(dense, (self.sources, self.targets), self.flows)
        return dense

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.sources, weights=self.flows, minlength=self.n_source)

    def col_sums(self) -> np.ndarray:
        return np.bincount(self.targets, weights=self.flows, minlength=self.n_target)

    def validate(self, A: WeightedPointSet, B: WeightedPointSet, fraction: float = 1.0) -> None:
        """Raise ConsistencyError unless the feasibility invariants hold for (A, B)."""
        if self.n_source != A.n or self.n_target != B.n:
            raise ConsistencyError("plan shape does not match the point sets")
        if np.any(self.row_sums() > A.weights + CAPACITY_RTOL * A.total_weight):
            raise ConsistencyError("a row sum exceeds its source capacity")
        if np.any(self.col_sums() > B.weights + CAPACITY_RTOL * B.total_weight):
            raise ConsistencyError("a column sum exceeds its target capacity")
        required = fraction * min(A.total_weight, B.total_weight)
        if abs(self.total_flow - required) > TOTAL_FLOW_RTOL * max(required, 1.0):
            raise ConsistencyError(
                f"total flow {self.total_flow!r} != required {required!r}"
            )
        shipped = float(self.flows.sum())
        if abs(shipped - self.total_flow) > TOTAL_FLOW_RTOL * max(required, 1.0):
            raise ConsistencyError("stored total_flow disagrees with the entries")


@dataclass(frozen=True)
class CompressionResult:
    """Compressed stand-in for a weighted point set.

    ``assignment[i]`` is the center index of original point i; ``radius`` is
    the max distance from a point to its assigned center. ``ball_radius``
    keeps the pre-refinement radius for mean-refined k-center results, and
    ``truncated`` marks adaptive runs that hit their center cap before
    reaching the requested radius.
    """

    centers: WeightedPointSet
    assignment: np.ndarray
    radius: float
    method_tag: str
    seed: int
    ball_radius: float | None = None
    truncated: bool = False

    def __post_init__(self):
        if self.method_tag not in COMPRESSION_METHODS:
            raise ValueError(f"unknown method tag {self.method_tag!r}")
        assn = _frozen_array(self.assignment, np.int64).reshape(-1)
        if assn.size == 0:
            raise ValueError("assignment must cover at least one point")
        if assn.min() < 0 or assn.max() >= self.centers.n:
            raise ValueError("assignment refers to a missing center")
        object.__setattr__(self, "assignment", assn)

    @property
    def k(self) -> int:
        return self.centers.n

    def validate(self, original: WeightedPointSet) -> None:
        """Raise ConsistencyError unless this result is coherent with ``original``."""
        if self.assignment.shape[0] != original.n:
            raise ConsistencyError("assignment length does not match the input")
        if abs(self.centers.total_weight - original.total_weight) > 1e-9 * original.total_weight:
            raise ConsistencyError("aggregated center weights lose or invent mass")
        gaps = original.points - self.centers.points[self.assignment]
        achieved = float(np.sqrt((gaps ** 2).sum(axis=1).max()))
        if abs(achieved - self.radius) > RADIUS_ATOL * max(1.0, achieved):
            raise ConsistencyError(f"stored radius {self.radius} but measured {achieved}")


def apply_transform(transform: RigidTransform, P: WeightedPointSet) -> WeightedPointSet:
    """Return the point set with points R p + v and unchanged weights."""
    if transform.d != P.d:
        raise ValueError(f"transform dimension {transform.d} != point dimension {P.d}")
    return WeightedPointSet(transform.apply(P.points), P.weights)


def compose_sequence(steps: Sequence[RigidTransform]) -> RigidTransform:
    """Collapse an ordered sequence of rigid steps into one transform.

    Step l is applied after step l-1, so the result maps x to
    R_h(...(R_1 x + v_1)...) + v_h. Work is O(h d^3), independent of any
    point count.
    """
    if len(steps) == 0:
        raise ValueError("cannot compose an empty sequence")
    d = steps[0].d
    rot = np.eye(d)
    vec = np.zeros(d)
    for step in steps:
        if step.d != d:
            raise ValueError(f"dimension mismatch in sequence: {step.d} != {d}")
        rot = step.rotation @ rot
        vec = step.rotation @ vec + step.translation
    return RigidTransform(rot, vec)


def squared_distances(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances between rows of X and rows of Y."""
    sq = (X * X).sum(axis=1)[:, None] + (Y * Y).sum(axis=1)[None, :] - 2.0 * (X @ Y.T)
    # rounding can push exact zeros slightly negative
    np.maximum(sq, 0.0, out=sq)
    return sq


def cost_matrix(A: WeightedPointSet, B: WeightedPointSet) -> np.ndarray:
    """Ground-cost matrix: entry (i, j) = ||a_i - b_j||^2."""
    if A.d != B.d:
        raise ValueError(f"dimension mismatch: {A.d} != {B.d}")
    return squared_distances(A.points, B.points)


def diameter_estimate(P: WeightedPointSet) -> float:
    """Distance from the first point to its farthest point.

    Always within a factor 2 of the true diameter: if the true diameter is
    realized by (q, q'), the triangle inequality forces one of them at least
    half that far from the anchor.
    """
    gaps = P.points - P.points[0]
    return float(np.sqrt((gaps * gaps).sum(axis=1).max()))


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian, sign-fixed)."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return q * signs
