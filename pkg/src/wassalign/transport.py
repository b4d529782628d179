"""Plain and fractional squared-Euclidean Wasserstein distance solvers.

Two backends: an exact min-cost-flow solve and an entropic-regularized
scaling iteration with a final projection onto the feasible polytope. The
fractional (outlier-dropping) variant reduces to a plain solve on an
instance augmented with one dummy point per side.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from wassalign.core import (
    ConsistencyError,
    ConvergenceError,
    TransportPlan,
    WeightedPointSet,
    cost_matrix,
)
from wassalign.mincostflow import solve_transportation

BACKENDS = ("exact", "sinkhorn")

# relative tolerances tied to the plan invariants
_BALANCE_RTOL = 1e-9
_DUMMY_FLOW_RTOL = 1e-9
_TRIM_RTOL = 1e-9


@dataclass(frozen=True)
class TransportConfig:
    """Backend selection and tuning shared by all transport entry points.

    ``sinkhorn_regularization`` of None means "1e-2 x median positive ground
    cost", resolved per instance. ``sinkhorn_tolerance`` is the largest
    acceptable marginal violation relative to the total mass.
    ``big_cost_multiplier`` scales the finite stand-in for the forbidden
    dummy-to-dummy edge of the fractional reduction.
    """

    backend: str = "exact"
    sinkhorn_regularization: float | None = None
    sinkhorn_max_iters: int = 10_000
    sinkhorn_tolerance: float = 1e-4
    big_cost_multiplier: float = 1e6

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.sinkhorn_regularization is not None and not self.sinkhorn_regularization > 0:
            raise ValueError("sinkhorn_regularization must be positive")
        if self.sinkhorn_max_iters < 1:
            raise ValueError("sinkhorn_max_iters must be >= 1")
        if not self.sinkhorn_tolerance > 0:
            raise ValueError("sinkhorn_tolerance must be positive")
        if self.big_cost_multiplier < 1e3:
            raise ValueError("big_cost_multiplier must be >= 1e3")


def _build_plan(
    flow: np.ndarray, cost: np.ndarray, normalizer: float, mass_scale: float
) -> TransportPlan:
    """Sparse plan from a dense flow matrix, dropping only dust entries."""
    keep = flow > 0.0
    dust = 1e-16 * mass_scale
    if np.count_nonzero(keep) and dust > 0.0:
        small = keep & (flow < dust)
        if small.any() and float(flow[small].sum()) <= 1e-11 * mass_scale:
            keep &= ~small
    sources, targets = np.nonzero(keep)
    flows = flow[sources, targets]
    total = float(flows.sum())
    plan_cost = float((flows * cost[sources, targets]).sum())
    distance = plan_cost / normalizer if normalizer > 0.0 else 0.0
    return TransportPlan(
        sources=sources,
        targets=targets,
        flows=flows,
        total_flow=total,
        cost=plan_cost,
        normalized_distance=distance,
        n_source=flow.shape[0],
        n_target=flow.shape[1],
    )


def wasserstein_exact(A: WeightedPointSet, B: WeightedPointSet) -> TransportPlan:
    """Optimal plan shipping min{W_A, W_B} mass at minimum squared-distance cost."""
    cost = cost_matrix(A, B)
    flow, _ = solve_transportation(cost, A.weights, B.weights)
    min_w = min(A.total_weight, B.total_weight)
    plan = _build_plan(flow, cost, min_w, min_w)
    plan.validate(A, B, fraction=1.0)
    return plan


def _resolve_regularization(base_cost: np.ndarray, cfg: TransportConfig) -> float:
    if cfg.sinkhorn_regularization is not None:
        return cfg.sinkhorn_regularization
    positive = base_cost[base_cost > 0.0]
    if positive.size == 0:
        return 1.0
    return 1e-2 * float(np.median(positive))


def _fill_deficits(
    plan: np.ndarray, row_deficit: np.ndarray, col_deficit: np.ndarray, forbidden
) -> None:
    """Greedy repair of leftover marginal deficits, skipping forbidden cells.

    Deficits that could only be met through a forbidden cell stay unmet;
    they are bounded by the pre-projection violation.
    """
    scale = max(plan.sum(), 1.0)
    rows = np.flatnonzero(row_deficit > 1e-15 * scale)
    cols = list(np.flatnonzero(col_deficit > 1e-15 * scale))
    for i in rows:
        need = row_deficit[i]
        for j in cols:
            if need <= 0.0:
                break
            if (int(i), int(j)) in forbidden:
                continue
            amount = min(need, col_deficit[j])
            if amount <= 0.0:
                continue
            plan[i, j] += amount
            col_deficit[j] -= amount
            need -= amount
        row_deficit[i] = need


def _project_to_marginals(
    plan: np.ndarray, row_targets: np.ndarray, col_targets: np.ndarray, forbidden
) -> np.ndarray:
    """Scale rows then columns down to their targets, then repair the deficits."""
    row_sums = plan.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        row_scale = np.where(row_sums > 0.0, np.minimum(1.0, row_targets / row_sums), 0.0)
    plan = plan * row_scale[:, None]
    col_sums = plan.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        col_scale = np.where(col_sums > 0.0, np.minimum(1.0, col_targets / col_sums), 0.0)
    plan = plan * col_scale[None, :]
    row_deficit = np.maximum(row_targets - plan.sum(axis=1), 0.0)
    col_deficit = np.maximum(col_targets - plan.sum(axis=0), 0.0)
    _fill_deficits(plan, row_deficit, col_deficit, forbidden)
    return plan


def sinkhorn_transport(
    cost: np.ndarray,
    row_targets: np.ndarray,
    col_targets: np.ndarray,
    cfg: TransportConfig,
    base_cost: np.ndarray | None = None,
    forbidden=frozenset(),
) -> np.ndarray:
    """Entropic-regularized transport with equality marginals, then projection.

    Zero-capacity rows/columns are excluded up front. Raises ConvergenceError
    if the marginal violation is still above ``cfg.sinkhorn_tolerance``
    (relative to total mass) after ``cfg.sinkhorn_max_iters`` iterations.
    """
    row_targets = np.asarray(row_targets, dtype=np.float64)
    col_targets = np.asarray(col_targets, dtype=np.float64)
    total_mass = float(row_targets.sum())
    ridx = np.flatnonzero(row_targets > 0.0)
    cidx = np.flatnonzero(col_targets > 0.0)
    sub_cost = np.ascontiguousarray(cost[np.ix_(ridx, cidx)])
    r = row_targets[ridx]
    c = col_targets[cidx]
    reference = cost if base_cost is None else base_cost
    reg = _resolve_regularization(reference, cfg)
    # anneal from a warm regularization down to the target; the big stand-in
    # cost must not inflate the starting point, hence the reference matrix
    stages = []
    warm = max(float(reference.max(initial=0.0)) / 10.0, reg)
    while warm > 1.5 * reg:
        stages.append(warm)
        warm /= 2.0
    stages.append(reg)
    f = np.zeros(r.shape[0])
    g = np.zeros(c.shape[0])
    u = np.ones(r.shape[0])
    v = np.ones(c.shape[0])
    kernel = np.exp((f[:, None] + g[None, :] - sub_cost) / stages[0])
    tol_abs = cfg.sinkhorn_tolerance * max(total_mass, 1e-300)
    violation = np.inf
    converged = False
    tiny = 1e-300
    spent = 0
    for si, stage_reg in enumerate(stages):
        if si > 0:
            kernel = np.exp((f[:, None] + g[None, :] - sub_cost) / stage_reg)
            u = np.ones_like(u)
            v = np.ones_like(v)
        last = si == len(stages) - 1
        budget = (cfg.sinkhorn_max_iters - spent) if last else min(
            60, cfg.sinkhorn_max_iters - spent
        )
        for it in range(budget):
            u = r / np.maximum(kernel @ v, tiny)
            v = c / np.maximum(kernel.T @ u, tiny)
            spent += 1
            # refresh the kernel on a schedule, not only on overflow: stale
            # absorbed potentials freeze an underflowed zero pattern
            hot = max(u.max(initial=0.0), v.max(initial=0.0)) > 1e100
            if hot or it % 50 == 49 or it == budget - 1:
                f += stage_reg * np.log(np.maximum(u, tiny))
                g += stage_reg * np.log(np.maximum(v, tiny))
                kernel = np.exp((f[:, None] + g[None, :] - sub_cost) / stage_reg)
                u = np.ones_like(u)
                v = np.ones_like(v)
                if hot:
                    continue
            if last and (it % 20 == 19 or it == budget - 1):
                plan = (u[:, None] * kernel) * v[None, :]
                violation = max(
                    float(np.abs(plan.sum(axis=1) - r).max(initial=0.0)),
                    float(np.abs(plan.sum(axis=0) - c).max(initial=0.0)),
                )
                if violation <= tol_abs:
                    converged = True
                    break
        if converged or spent >= cfg.sinkhorn_max_iters:
            break
    if not converged:
        plan = (u[:, None] * kernel) * v[None, :]
        violation = max(
            float(np.abs(plan.sum(axis=1) - r).max(initial=0.0)),
            float(np.abs(plan.sum(axis=0) - c).max(initial=0.0)),
        )
        if violation > tol_abs:
            raise ConvergenceError(
                f"marginal violation {violation:.3e} above tolerance {tol_abs:.3e} "
                f"after {cfg.sinkhorn_max_iters} iterations",
                last_violation=violation,
            )
    plan = (u[:, None] * kernel) * v[None, :]
    sub_forbidden = set()
    if forbidden:
        rpos = {int(orig): pos for pos, orig in enumerate(ridx)}
        cpos = {int(orig): pos for pos, orig in enumerate(cidx)}
        for i, j in forbidden:
            if i in rpos and j in cpos:
                plan[rpos[i], cpos[j]] = 0.0
                sub_forbidden.add((rpos[i], cpos[j]))
    plan = _project_to_marginals(plan, r, c, sub_forbidden)
    full = np.zeros_like(cost)
    full[np.ix_(ridx, cidx)] = plan
    return full


def wasserstein_sinkhorn(
    A: WeightedPointSet, B: WeightedPointSet, cfg: TransportConfig = TransportConfig()
) -> TransportPlan:
    """Approximate plan for the balanced case W_A = W_B."""
    cost = cost_matrix(A, B)
    scale = max(A.total_weight, B.total_weight)
    if abs(A.total_weight - B.total_weight) > _BALANCE_RTOL * scale:
        raise ValueError(
            "sinkhorn backend requires balanced total weights "
            f"({A.total_weight} vs {B.total_weight}); rescale the inputs first"
        )
    flow = sinkhorn_transport(cost, A.weights, B.weights, cfg)
    min_w = min(A.total_weight, B.total_weight)
    plan = _build_plan(flow, cost, min_w, min_w)
    plan.validate(A, B, fraction=1.0)
    return plan


def augment_with_dummies(
    A: WeightedPointSet,
    B: WeightedPointSet,
    fraction: float,
    big_cost_multiplier: float = 1e6,
) -> tuple[WeightedPointSet, WeightedPointSet, np.ndarray]:
    """Dummy-point reduction of the fractional problem to a plain one.

    Prepends one dummy point (index 0) to each side with weight
    (1 - fraction) * min{W_A, W_B}. Dummy-to-real edges cost 0; the
    dummy-to-dummy edge gets a finite stand-in for +inf.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    cost = cost_matrix(A, B)
    spare = (1.0 - fraction) * min(A.total_weight, B.total_weight)
    aug_a = WeightedPointSet(
        np.vstack([np.zeros((1, A.d)), A.points]), np.concatenate([[spare], A.weights])
    )
    aug_b = WeightedPointSet(
        np.vstack([np.zeros((1, B.d)), B.points]), np.concatenate([[spare], B.weights])
    )
    aug_cost = np.zeros((A.n + 1, B.n + 1))
    aug_cost[1:, 1:] = cost
    aug_cost[0, 0] = big_cost_multiplier * (float(cost.max()) + 1.0)
    return aug_a, aug_b, aug_cost


def _trim_excess(flow: np.ndarray, cost: np.ndarray, excess: float, scale: float) -> float:
    """Remove tie-induced surplus mass from (near-)zero-cost cells.

    Among equal-cost optima of the augmented problem some route extra mass
    through free real edges instead of the dummies; the surplus is provably
    removable from zero-cost cells without changing the optimal cost.
    """
    zero_cost = 1e-12 * max(1.0, float(cost.max()))
    rows, cols = np.nonzero((flow > 0.0) & (cost <= zero_cost))
    for i, j in zip(rows, cols):
        if excess <= 0.0:
            break
        cut = min(excess, flow[i, j])
        flow[i, j] -= cut
        excess -= cut
    if excess > _TRIM_RTOL * scale:
        raise ConsistencyError(
            "augmented solve shipped surplus real mass that is not on zero-cost edges"
        )
    return excess


def fractional_wasserstein(
    A: WeightedPointSet,
    B: WeightedPointSet,
    fraction: float,
    cfg: TransportConfig = TransportConfig(),
) -> TransportPlan:
    """Optimal plan shipping only a ``fraction`` of the smaller total weight.

    Solves the dummy-augmented instance with the configured backend, checks
    that no mass crossed the forbidden dummy-dummy edge, strips the dummies
    and returns the real-to-real plan (0-based original indices).
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    min_w = min(A.total_weight, B.total_weight)
    normalizer = fraction * min_w
    cost = cost_matrix(A, B)
    if normalizer <= 0.0:
        empty = np.array([], dtype=np.int64)
        return TransportPlan(empty, empty, np.array([]), 0.0, 0.0, 0.0, A.n, B.n)
    aug_a, aug_b, aug_cost = augment_with_dummies(A, B, fraction, cfg.big_cost_multiplier)
    if cfg.backend == "exact":
        aug_flow, _ = solve_transportation(aug_cost, aug_a.weights, aug_b.weights)
    else:
        aug_flow = _sinkhorn_augmented(aug_a, aug_b, aug_cost, cost, cfg)
    dummy_flow = float(aug_flow[0, 0])
    if dummy_flow > _DUMMY_FLOW_RTOL * min_w:
        raise ConsistencyError(
            f"flow {dummy_flow!r} crossed the forbidden dummy edge; "
            "big_cost_multiplier is too small for this instance"
        )
    real = np.ascontiguousarray(aug_flow[1:, 1:])
    excess = float(real.sum()) - normalizer
    if excess > _TRIM_RTOL * max(normalizer, 1.0):
        _trim_excess(real, cost, excess, max(normalizer, 1.0))
    elif excess < -_TRIM_RTOL * max(normalizer, 1.0):
        raise ConsistencyError(
            f"augmented solve under-shipped: {real.sum()} real mass vs {normalizer} required"
        )
    plan = _build_plan(real, cost, normalizer, normalizer)
    plan.validate(A, B, fraction=fraction)
    return plan


def _repair_forbidden_deficits(
    plan: np.ndarray,
    row_targets: np.ndarray,
    col_targets: np.ndarray,
    forbidden,
    real_rows: np.ndarray,
    real_cols: np.ndarray,
) -> None:
    """Close deficits stranded on forbidden pairs via zero-or-better cycles.

    The greedy fill only ever leaves deficit on (row, col) pairs that are all
    forbidden. Rerouting plan[i, j] -> plan[i, c] and adding plan[r, j] for a
    real cell (i, j) restores both marginals without touching (r, c); the move
    only ever removes real-to-real cost.
    """
    scale = max(float(row_targets.sum()), 1.0)
    eps = 1e-15 * scale
    row_def = row_targets - plan.sum(axis=1)
    col_def = col_targets - plan.sum(axis=0)
    for r, c in sorted(forbidden):
        need = min(float(row_def[r]), float(col_def[c]))
        if need <= eps:
            continue
        for i in real_rows:
            if need <= eps:
                break
            row = plan[i]
            for j in real_cols:
                if need <= eps:
                    break
                m = min(float(row[j]), need)
                if m <= 0.0:
                    continue
                row[j] -= m
                plan[i, c] += m
                plan[r, j] += m
                need -= m
        row_def[r] -= min(float(row_def[r]), float(col_def[c])) - need
        col_def[c] = col_targets[c] - plan[:, c].sum()
    leftover = max(
        float(np.maximum(row_targets - plan.sum(axis=1), 0.0).sum()),
        float(np.maximum(col_targets - plan.sum(axis=0), 0.0).sum()),
    )
    if leftover > 1e-9 * scale:
        raise ConsistencyError(
            f"marginal deficit {leftover:.3e} could not be repaired without "
            "routing flow through a forbidden cell"
        )


def _sinkhorn_augmented(
    aug_a: WeightedPointSet,
    aug_b: WeightedPointSet,
    aug_cost: np.ndarray,
    base_cost: np.ndarray,
    cfg: TransportConfig,
) -> np.ndarray:
    """Balanced sinkhorn solve of the augmented instance.

    When the augmented totals differ, a zero-cost slack node is appended on
    the lighter side so equality marginals exist; slack-to-dummy cells share
    the forbidden big cost so the stripped real block keeps exactly
    fraction * min{W_A, W_B} mass.
    """
    big = float(aug_cost[0, 0])
    rows = aug_a.weights
    cols = aug_b.weights
    gap = float(rows.sum() - cols.sum())
    scale = max(rows.sum(), cols.sum())
    forbidden = {(0, 0)}
    work_cost = aug_cost
    slack_row = slack_col = False
    if gap < -_BALANCE_RTOL * scale:
        slack_row = True
        work_cost = np.vstack([aug_cost, np.zeros((1, aug_cost.shape[1]))])
        work_cost[-1, 0] = big
        rows = np.concatenate([rows, [-gap]])
        forbidden.add((aug_cost.shape[0], 0))
    elif gap > _BALANCE_RTOL * scale:
        slack_col = True
        work_cost = np.hstack([aug_cost, np.zeros((aug_cost.shape[0], 1))])
        work_cost[0, -1] = big
        cols = np.concatenate([cols, [gap]])
        forbidden.add((0, aug_cost.shape[1]))
    flow = sinkhorn_transport(work_cost, rows, cols, cfg, base_cost=base_cost, forbidden=forbidden)
    n_real_rows = aug_cost.shape[0] - 1
    n_real_cols = aug_cost.shape[1] - 1
    _repair_forbidden_deficits(
        flow,
        rows,
        cols,
        forbidden,
        real_rows=np.arange(1, n_real_rows + 1),
        real_cols=np.arange(1, n_real_cols + 1),
    )
    if slack_row:
        flow = flow[:-1, :]
    if slack_col:
        flow = flow[:, :-1]
    return flow


def solve_plain(
    A: WeightedPointSet, B: WeightedPointSet, cfg: TransportConfig = TransportConfig()
) -> TransportPlan:
    """Backend-dispatching plain solve (sinkhorn route works unbalanced too)."""
    if cfg.backend == "exact":
        return wasserstein_exact(A, B)
    return fractional_wasserstein(A, B, 1.0, cfg)
