"""Synthetic instances with a planted rigid transform and known optimum."""

from __future__ import annotations

import numpy as np

from wassalign.core import RigidTransform, WeightedPointSet, apply_transform, random_orthogonal


def generate_planted(
    n: int,
    d: int,
    intrinsic_dim: int,
    noise: float = 0.0,
    outlier_fraction: float = 0.0,
    seed: int = 0,
) -> tuple[WeightedPointSet, WeightedPointSet, RigidTransform]:
    """Unit-weight A on a random affine subspace and B = T*(A) + noise.

    Points live in an ``intrinsic_dim``-dimensional affine subspace of R^d,
    so their doubling dimension stays low regardless of d. A round
    ``outlier_fraction`` share of B's points is replaced by uniform draws from
    B's bounding box. With zero noise and no outliers the optimal alignment
    distance is exactly zero and T* is returned as ground truth.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if intrinsic_dim < 1 or intrinsic_dim > d:
        raise ValueError(f"intrinsic_dim must be in [1, {d}], got {intrinsic_dim}")
    if noise < 0.0:
        raise ValueError(f"noise must be >= 0, got {noise}")
    if not 0.0 <= outlier_fraction <= 1.0:
        raise ValueError(f"outlier_fraction must be in [0, 1], got {outlier_fraction}")
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(d, intrinsic_dim)))
    offset = rng.normal(size=d)
    coeffs = rng.normal(size=(n, intrinsic_dim))
    a_points = offset + coeffs @ basis.T
    A = WeightedPointSet(a_points, np.ones(n))
    true_transform = RigidTransform(random_orthogonal(d, rng), rng.normal(size=d))
    B = apply_transform(true_transform, A)
    b_points = B.points.copy()
    if noise > 0.0:
        b_points += noise * rng.normal(size=b_points.shape)
    n_outliers = int(round(outlier_fraction * n))
    if n_outliers > 0:
        lo = b_points.min(axis=0)
        hi = b_points.max(axis=0)
        which = rng.choice(n, size=n_outliers, replace=False)
        b_points[which] = rng.uniform(size=(n_outliers, d)) * (hi - lo) + lo
    return A, WeightedPointSet(b_points, np.ones(n)), true_transform
