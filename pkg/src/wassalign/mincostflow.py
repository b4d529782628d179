"""Exact solver for the capacity-constrained transportation problem.

Successive shortest augmenting paths with node potentials (so Dijkstra works
throughout despite residual arcs). Supplies and demands are real-valued and
are used directly, no integer scaling; the solver stops once the required
total mass has been shipped, so unbalanced instances (sum of supplies !=
sum of demands) and partial shipping are handled natively.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from wassalign.core import NumericalError

STATUS_OK = 0
STATUS_DISCONNECTED = 1
STATUS_STALLED = 2

# relative slack under which a residual supply/demand counts as exhausted
_REMAINDER_EPS = 1e-13


@njit(cache=True)
def _ssp_kernel(cost, alpha, beta, required, node_eps):
    n1, n2 = cost.shape
    nv = n1 + n2
    rem_a = alpha.copy()
    rem_b = beta.copy()
    flow = np.zeros((n1, n2))
    pot = np.zeros(nv)
    dist = np.empty(nv)
    done = np.empty(nv, dtype=np.bool_)
    parent = np.empty(nv, dtype=np.int64)
    shipped = 0.0
    max_augmentations = 50 * nv + 1000
    augmentations = 0
    # every node may strand up to node_eps of dust, so the aggregate
    # termination slack has to scale with the node count
    total_eps = node_eps * nv
    while shipped < required - total_eps:
        augmentations += 1
        if augmentations > max_augmentations:
            return flow, shipped, STATUS_STALLED
        for x in range(nv):
            dist[x] = np.inf
            done[x] = False
            parent[x] = -1
        for i in range(n1):
            if rem_a[i] > node_eps:
                dist[i] = 0.0
        target = -1
        while True:
            u = -1
            best = np.inf
            for x in range(nv):
                if not done[x] and dist[x] < best:
                    best = dist[x]
                    u = x
            if u < 0:
                break
            done[u] = True
            if u >= n1 and rem_b[u - n1] > node_eps:
                target = u
                break
            if u < n1:
                # forward arcs u -> every target
                base = dist[u] + pot[u]
                for j in range(n2):
                    x = n1 + j
                    if done[x]:
                        continue
                    nd = base + cost[u, j] - pot[x]
                    if nd < dist[x]:
                        dist[x] = nd
                        parent[x] = u
            else:
                # residual arcs back along positive flows
                j = u - n1
                base = dist[u] + pot[u]
                for i in range(n1):
                    if done[i] or flow[i, j] <= 0.0:
                        continue
                    nd = base - cost[i, j] - pot[i]
                    if nd < dist[i]:
                        dist[i] = nd
                        parent[i] = u
        if target < 0:
            return flow, shipped, STATUS_DISCONNECTED
        cap = dist[target]
        for x in range(nv):
            if done[x] and dist[x] < cap:
                pot[x] += dist[x]
            else:
                pot[x] += cap
        # bottleneck along the path
        delta = required - shipped
        if rem_b[target - n1] < delta:
            delta = rem_b[target - n1]
        node = target
        while parent[node] >= 0:
            prev = parent[node]
            if prev >= n1:
                # residual arc: limited by the flow it cancels
                f = flow[node, prev - n1]
                if f < delta:
                    delta = f
            node = prev
        if rem_a[node] < delta:
            delta = rem_a[node]
        if delta <= 0.0:
            return flow, shipped, STATUS_STALLED
        # apply
        node = target
        while parent[node] >= 0:
            prev = parent[node]
            if prev < n1:
                flow[prev, node - n1] += delta
            else:
                flow[node, prev - n1] -= delta
            node = prev
        rem_a[node] -= delta
        if rem_a[node] < 0.0:
            rem_a[node] = 0.0
        rem_b[target - n1] -= delta
        if rem_b[target - n1] < 0.0:
            rem_b[target - n1] = 0.0
        shipped += delta
    return flow, shipped, STATUS_OK


def solve_transportation(
    cost: np.ndarray,
    alpha: np.ndarray,
    beta: np.ndarray,
    required: float | None = None,
) -> tuple[np.ndarray, float]:
    """Minimum-cost flow shipping ``required`` mass (default: min of the totals).

    Returns (dense flow matrix, shipped mass). Row sums never exceed alpha,
    column sums never exceed beta.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    alpha = np.ascontiguousarray(alpha, dtype=np.float64)
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    if cost.shape != (alpha.shape[0], beta.shape[0]):
        raise ValueError("cost matrix shape does not match the weight vectors")
    max_possible = min(float(alpha.sum()), float(beta.sum()))
    if required is None:
        required = max_possible
    if required > max_possible * (1.0 + 1e-9) + 1e-300:
        raise ValueError(f"required flow {required} exceeds shippable mass {max_possible}")
    scale = max(float(alpha.sum()), float(beta.sum()), 1.0)
    node_eps = _REMAINDER_EPS * scale
    if required <= node_eps:
        return np.zeros_like(cost), 0.0
    flow, shipped, status = _ssp_kernel(cost, alpha, beta, float(required), node_eps)
    if status == STATUS_DISCONNECTED:
        raise NumericalError("transportation network exhausted before the required flow")
    if status == STATUS_STALLED:
        raise NumericalError("augmenting-path search stalled (degenerate bottlenecks)")
    return flow, float(shipped)
