"""Alternating flow/transform minimization and the compressed pipeline.

One alignment round solves the fractional transport problem for the current
pose of B, then updates the rigid transform by weighted orthogonal Procrustes
on the flow. Per-round transforms are composed at the end, so the compressed
pipeline touches the full-size B exactly once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from wassalign.compression import compress, gonzalez_adaptive
from wassalign.core import (
    ConsistencyError,
    NumericalError,
    RigidTransform,
    TransportPlan,
    WeightedPointSet,
    apply_transform,
    compose_sequence,
    diameter_estimate,
    random_orthogonal,
)
from wassalign.transport import TransportConfig, fractional_wasserstein

_MONOTONE_RTOL = 1e-6


@dataclass(frozen=True)
class AlignmentConfig:
    """Knobs for the alternating minimization.

    ``restarts`` adds that many random orthogonal initializations on top of
    the identity start; the best final distance wins, ties going to the
    earlier start. ``rotation_only`` restricts updates to proper rotations by
    sign-flipping the smallest singular direction.
    """

    max_rounds: int = 10
    objective_tolerance: float = 1e-6
    fraction: float = 1.0
    transport: TransportConfig = field(default_factory=TransportConfig)
    restarts: int = 0
    seed: int = 0
    rotation_only: bool = False

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if not self.objective_tolerance > 0:
            raise ValueError("objective_tolerance must be positive")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must be in (0, 1], got {self.fraction}")
        if self.restarts < 0:
            raise ValueError(f"restarts must be >= 0, got {self.restarts}")


@dataclass(frozen=True)
class AlignmentReport:
    """Outcome of one alignment run.

    ``plan`` and ``final_distance`` always refer to the original (full-size)
    sets. ``history`` holds one (distance, update norm) pair per round of the
    winning start; ``timings`` maps the stages compress, align_loop,
    final_flow and compose to seconds. ``compression`` carries the per-side
    compression metadata, or None for uncompressed runs.
    """

    transform: RigidTransform
    plan: TransportPlan
    final_distance: float
    fraction: float
    history: tuple[tuple[float, float], ...]
    timings: dict[str, float]
    compression: dict | None = None


def flow_cross_covariance(
    A: WeightedPointSet, B: WeightedPointSet, F: TransportPlan
) -> np.ndarray:
    """d x d matrix with entries sum_ij f_ij a_i[r] b_j[s].

    Equals the product of the flow-expanded coordinate matrices without ever
    materializing their n1*n2 columns: either a sum of weighted outer
    products over the sparse entries, or a scatter onto the smaller side
    followed by one d x d product, whichever costs less.
    """
    if F.n_source != A.n or F.n_target != B.n:
        raise ValueError("plan shape does not match the point sets")
    return _cross_covariance(A.points, B.points, F.sources, F.targets, F.flows)


def _cross_covariance(a_pts, b_pts, sources, targets, flows) -> np.ndarray:
    d = a_pts.shape[1]
    nnz = flows.shape[0]
    if nnz == 0:
        return np.zeros((d, d))
    n_small = min(a_pts.shape[0], b_pts.shape[0])
    if nnz * d * d <= nnz * d + n_small * d * d:
        return np.einsum(
            "k,ki,kj->ij", flows, a_pts[sources], b_pts[targets], optimize=True
        )
    if b_pts.shape[0] <= a_pts.shape[0]:
        acc = np.zeros((b_pts.shape[0], d))
        np.add.at(acc, targets, flows[:, None] * a_pts[sources])
        return acc.T @ b_pts
    acc = np.zeros((a_pts.shape[0], d))
    np.add.at(acc, sources, flows[:, None] * b_pts[targets])
    return a_pts.T @ acc


def weighted_procrustes(
    A: WeightedPointSet,
    B: WeightedPointSet,
    F: TransportPlan,
    rotation_only: bool = False,
) -> RigidTransform:
    """Rigid transform minimizing sum_ij f_ij ||a_i - (R b_j + v)||^2.

    Both sides are centered at their flow-weighted means, R comes from the
    SVD of the centered cross-covariance, and v re-aligns the means. A
    reflection (det R = -1) is kept unless rotation_only is set.
    """
    total = F.total_flow
    if not total > 0.0:
        raise ValueError("procrustes update needs positive total flow")
    mu_a = F.row_sums() @ A.points / total
    mu_b = F.col_sums() @ B.points / total
    cov = _cross_covariance(
        A.points - mu_a, B.points - mu_b, F.sources, F.targets, F.flows
    )
    try:
        u, _, vt = np.linalg.svd(cov)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD of the cross-covariance failed: {exc}") from exc
    rotation = u @ vt
    if rotation_only and np.linalg.det(rotation) < 0.0:
        u = u.copy()
        u[:, -1] *= -1.0
        rotation = u @ vt
    return RigidTransform(rotation, mu_a - rotation @ mu_b)


def _update_norm(step: RigidTransform) -> float:
    d = step.rotation.shape[0]
    return float(
        np.linalg.norm(step.rotation - np.eye(d)) + np.linalg.norm(step.translation)
    )


def _run_from_start(
    A: WeightedPointSet, B: WeightedPointSet, cfg: AlignmentConfig, init: RigidTransform
):
    steps = [init]
    current = apply_transform(init, B)
    history: list[tuple[float, float]] = []
    plan = None
    prev = np.inf
    # cancellation noise in the cost entries scales with the squared extent
    noise_floor = 1e-12 * max(1.0, diameter_estimate(A) ** 2)
    for round_idx in range(cfg.max_rounds):
        plan = fractional_wasserstein(A, current, cfg.fraction, cfg.transport)
        distance = plan.normalized_distance
        if not np.isfinite(distance):
            raise NumericalError(f"non-finite objective {distance!r} during alignment")
        if cfg.transport.backend == "exact" and distance > prev * (
            1.0 + _MONOTONE_RTOL
        ) + noise_floor:
            raise ConsistencyError(
                f"objective rose from {prev:.6e} to {distance:.6e} between rounds"
            )
        decrease = prev - distance
        if round_idx == cfg.max_rounds - 1 or (
            round_idx > 0 and decrease <= cfg.objective_tolerance * max(prev, 1e-300)
        ):
            history.append((distance, 0.0))
            prev = distance
            break
        step = weighted_procrustes(A, current, plan, rotation_only=cfg.rotation_only)
        steps.append(step)
        current = apply_transform(step, current)
        history.append((distance, _update_norm(step)))
        prev = distance
    t0 = time.monotonic()
    transform = compose_sequence(steps)
    compose_time = time.monotonic() - t0
    return prev, transform, plan, tuple(history), compose_time


def alternate_minimize(
    A: WeightedPointSet, B: WeightedPointSet, cfg: AlignmentConfig = AlignmentConfig()
) -> AlignmentReport:
    """Alternating transport/Procrustes minimization on (A, B) directly."""
    if A.d != B.d:
        raise ValueError(f"dimension mismatch: {A.d} vs {B.d}")
    rng = np.random.default_rng(cfg.seed)
    inits = [RigidTransform.identity(B.d)]
    for _ in range(cfg.restarts):
        inits.append(RigidTransform(random_orthogonal(B.d, rng), np.zeros(B.d)))
    best = None
    compose_time = 0.0
    t0 = time.monotonic()
    for init in inits:
        outcome = _run_from_start(A, B, cfg, init)
        if best is None or outcome[0] < best[0]:
            best = outcome
            compose_time = outcome[4]
    loop_time = time.monotonic() - t0
    distance, transform, plan, history, _ = best
    return AlignmentReport(
        transform=transform,
        plan=plan,
        final_distance=distance,
        fraction=cfg.fraction,
        history=history,
        timings={
            "compress": 0.0,
            "align_loop": loop_time,
            "final_flow": 0.0,
            "compose": compose_time,
        },
    )


def align_with_compression(
    A: WeightedPointSet,
    B: WeightedPointSet,
    method: str,
    cfg: AlignmentConfig = AlignmentConfig(),
    k: int | None = None,
    epsilon: float | None = None,
    k_cap: int | None = None,
) -> AlignmentReport:
    """Compress both sides, align the summaries, then solve once at full size.

    Exactly one of ``k`` (fixed center count) and ``epsilon`` (adaptive radius
    target, k-center only) must be given. The full-size B is touched once by
    the composed transform, followed by a single fractional transport solve
    on the originals.
    """
    if (k is None) == (epsilon is None):
        raise ValueError("pass exactly one of k and epsilon")
    if epsilon is not None and method != "kcenter":
        raise ValueError("adaptive radius compression is defined for kcenter only")
    if A.d != B.d:
        raise ValueError(f"dimension mismatch: {A.d} vs {B.d}")
    seed_a, seed_b = (
        int(s) for s in np.random.default_rng(cfg.seed).integers(2**63, size=2)
    )
    t0 = time.monotonic()
    if epsilon is not None:
        side_a = gonzalez_adaptive(A, epsilon, k_cap if k_cap is not None else A.n, seed_a)
        side_b = gonzalez_adaptive(B, epsilon, k_cap if k_cap is not None else B.n, seed_b)
    else:
        side_a = compress(A, method, k, seed_a)
        side_b = compress(B, method, k, seed_b)
    compress_time = time.monotonic() - t0
    inner = alternate_minimize(side_a.centers, side_b.centers, cfg)
    t1 = time.monotonic()
    moved = apply_transform(inner.transform, B)
    apply_time = time.monotonic() - t1
    t2 = time.monotonic()
    plan = fractional_wasserstein(A, moved, cfg.fraction, cfg.transport)
    final_flow_time = time.monotonic() - t2
    return AlignmentReport(
        transform=inner.transform,
        plan=plan,
        final_distance=plan.normalized_distance,
        fraction=cfg.fraction,
        history=inner.history,
        timings={
            "compress": compress_time,
            "align_loop": inner.timings["align_loop"],
            "final_flow": final_flow_time,
            "compose": inner.timings["compose"] + apply_time,
        },
        compression={
            "method": method,
            "k": k,
            "epsilon": epsilon,
            "k_a": side_a.k,
            "k_b": side_b.k,
            "radius_a": side_a.radius,
            "radius_b": side_b.radius,
            "truncated_a": side_a.truncated,
            "truncated_b": side_b.truncated,
        },
    )
