"""Dual price solver for the single-budget allocation problem.

The underlying integer program assigns at most one treatment per user to
maximize total reward subject to one global cost budget. Relaxing the budget
with a multiplier lam >= 0 decouples users: each user independently takes the
treatment maximizing reward - lam * cost (the null slot keeps that score at or
above zero). Summing the per-user maxima gives the aggregate opportunity value

    v(lam) = sum_i max_j (r_ij - lam * c_ij)

which is piecewise linear, convex, and non-increasing in lam. The dual
objective L(lam) = lam * B + v(lam) upper-bounds the optimal reward for every
lam >= 0 (weak duality), and its minimizer is the market-clearing price: post
lam*, every user self-selects, and the aggregate selected cost crosses the
budget exactly where the subgradient B - sum_i c_{i,j*(lam)} changes sign.

Two solvers are provided: bisection on the subgradient sign for raw user
lists, and an O(log K) descent over a precomputed value row for grid-priced
slots. Tie handling is pinned everywhere (prefer lower cost, then lower
index; grid argmin ties prefer the smaller price) so results are reproducible
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import LengthMismatch, NoBracket, ValidationError
from .model import ArrivalVectorSeries, LambdaGrid, UserResponse


@dataclass(frozen=True)
class BestResponse:
    """One user's decision at a fixed price."""

    treatment_index: int
    score: float
    cost: float


@dataclass(frozen=True)
class DualSolution:
    lambda_star: float
    objective: float
    iterations: int
    subgradient_at_solution: float


def pack_responses(users: Sequence[UserResponse]) -> tuple[np.ndarray, np.ndarray]:
    """Stack user reward/cost vectors into (n, count) float matrices."""
    n = len(users)
    if n == 0:
        return np.zeros((0, 1)), np.zeros((0, 1))
    count = len(users[0].rewards)
    R = np.empty((n, count))
    C = np.empty((n, count))
    for i, u in enumerate(users):
        if len(u.rewards) != count or len(u.costs) != count:
            raise LengthMismatch(f"user {u.user_id}: inconsistent vector length")
        R[i] = u.rewards
        C[i] = u.costs
    return R, C


def best_response(user: UserResponse, lam: float) -> BestResponse:
    """argmax_j rewards[j] - lam * costs[j]; ties: lower cost, then lower index."""
    best_j = 0
    best_score = user.rewards[0] - lam * user.costs[0]
    best_cost = user.costs[0]
    for j in range(1, len(user.rewards)):
        score = user.rewards[j] - lam * user.costs[j]
        cost = user.costs[j]
        if score > best_score or (score == best_score and cost < best_cost):
            best_j, best_score, best_cost = j, score, cost
    return BestResponse(treatment_index=best_j, score=best_score, cost=best_cost)


def best_response_matrix(
    R: np.ndarray, C: np.ndarray, lam: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized best_response over packed users.

    Returns (indices, scores, costs). Matches the scalar tie-break exactly:
    columns are scanned in index order, and a later column wins only on a
    strictly better score or an equal score at strictly lower cost.
    """
    n, count = R.shape
    scores = R - lam * C
    best_j = np.zeros(n, dtype=np.int64)
    best_score = scores[:, 0].copy()
    best_cost = C[:, 0].copy()
    for j in range(1, count):
        s = scores[:, j]
        c = C[:, j]
        take = (s > best_score) | ((s == best_score) & (c < best_cost))
        best_j[take] = j
        best_score[take] = s[take]
        best_cost[take] = c[take]
    return best_j, best_score, best_cost


def _values_on_grid(R: np.ndarray, C: np.ndarray, lams: Iterable[float]) -> np.ndarray:
    """v(lam) for each price, one fixed-order summation per grid cell."""
    lams = list(lams)
    out = np.empty(len(lams))
    if R.shape[0] == 0:
        out.fill(0.0)
        return out
    for k, lam in enumerate(lams):
        per_user = np.max(R - lam * C, axis=1)
        out[k] = float(np.sum(per_user))
    return out


def arrival_value(users: Sequence[UserResponse], lam: float) -> float:
    """v(lam) = sum over users of the best score at price lam."""
    R, C = pack_responses(users)
    return float(_values_on_grid(R, C, [lam])[0])


def arrival_series(
    slotted_users: Sequence[Sequence[UserResponse]], grid: LambdaGrid
) -> ArrivalVectorSeries:
    """Evaluate v(lam) per slot over the grid.

    Each cell is computed independently with the same summation order as
    arrival_value, so matrix[t][k] == arrival_value(slot_t_users, values[k])
    exactly, regardless of how callers shard the work.
    """
    matrix = np.empty((len(slotted_users), len(grid)))
    for t, users in enumerate(slotted_users):
        R, C = pack_responses(list(users))
        matrix[t] = _values_on_grid(R, C, grid.values)
    return ArrivalVectorSeries(grid=grid, matrix=matrix)


def dual_objective(lam: float, budget: float, users: Sequence[UserResponse]) -> float:
    return lam * budget + arrival_value(users, lam)


def selected_cost(users: Sequence[UserResponse], lam: float) -> float:
    """Aggregate cost of every user's best response at price lam."""
    R, C = pack_responses(users)
    if R.shape[0] == 0:
        return 0.0
    _, _, costs = best_response_matrix(R, C, lam)
    return float(np.sum(costs))


def dual_subgradient(lam: float, budget: float, users: Sequence[UserResponse]) -> float:
    """B minus the aggregate selected cost; the right derivative of L at lam.

    Tie-breaking toward the lower-cost treatment makes this the derivative on
    the high side of each kink, so it is non-decreasing in lam.
    """
    return budget - selected_cost(users, lam)


def default_lambda_max(users: Sequence[UserResponse]) -> float:
    """Price beyond which no user selects a positive-cost treatment.

    max over users and treatments of reward/cost among positive-cost entries
    with positive reward, padded with a small margin against rounding. At any
    price above this, every costly slot scores below the null floor, so the
    aggregate selected cost is zero and the subgradient is B >= 0.
    """
    ratio = 0.0
    for u in users:
        for r, c in zip(u.rewards, u.costs):
            if c > 0 and r > 0:
                ratio = max(ratio, r / c)
    return ratio * (1.0 + 1e-9) + 1e-9


def solve_bisect(
    users: Sequence[UserResponse],
    budget: float,
    tolerance: float = 1e-6,
    lambda_max: float | None = None,
) -> DualSolution:
    """Minimize L(lam) by bisecting on the subgradient sign over [0, lambda_max].

    If the budget is already slack at lam = 0 the answer is 0 immediately.
    Raises NoBracket when the subgradient is still negative at lambda_max
    (only possible with a caller-supplied bound that is too small).
    """
    if tolerance <= 0 or not math.isfinite(tolerance):
        raise ValidationError(f"tolerance must be positive, got {tolerance}")
    g0 = dual_subgradient(0.0, budget, users)
    if g0 >= 0:
        return DualSolution(
            lambda_star=0.0,
            objective=dual_objective(0.0, budget, users),
            iterations=0,
            subgradient_at_solution=g0,
        )
    if lambda_max is None:
        lambda_max = default_lambda_max(users)
    g_hi = dual_subgradient(lambda_max, budget, users)
    if g_hi < 0:
        raise NoBracket(
            f"subgradient still negative at lambda_max={lambda_max}; "
            "no sign change to bisect"
        )
    lo, hi = 0.0, float(lambda_max)
    iterations = 0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # interval no longer splits in float64
            break
        iterations += 1
        if dual_subgradient(mid, budget, users) < 0:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    return DualSolution(
        lambda_star=lam,
        objective=dual_objective(lam, budget, users),
        iterations=iterations,
        subgradient_at_solution=dual_subgradient(lam, budget, users),
    )


def solve_grid(
    series_row: Sequence[float], grid: LambdaGrid, slot_budget: float
) -> DualSolution:
    """Minimize values[k] * B_t + row[k] over the grid in O(log K).

    The row is convex and the budget term is linear, so the objective is
    convex in k; binary search on the forward difference finds the leftmost
    minimizer, which matches a linear scan with ties toward the smaller
    price. Raises LengthMismatch if the row does not cover the grid.
    """
    row = np.asarray(series_row, dtype=float)
    if row.ndim != 1 or row.shape[0] != len(grid):
        raise LengthMismatch(
            f"series row has {row.shape[0] if row.ndim == 1 else 'bad'} entries, "
            f"grid has {len(grid)}"
        )
    values = grid.values

    def objective(k: int) -> float:
        return values[k] * slot_budget + float(row[k])

    lo, hi = 0, grid.k_count
    iterations = 0
    while lo < hi:
        mid = (lo + hi) // 2
        iterations += 1
        if objective(mid) <= objective(mid + 1):
            hi = mid
        else:
            lo = mid + 1
    if lo < grid.k_count:
        slope = (objective(lo + 1) - objective(lo)) / grid.epsilon
    else:
        slope = (objective(lo) - objective(lo - 1)) / grid.epsilon
    return DualSolution(
        lambda_star=values[lo],
        objective=objective(lo),
        iterations=iterations,
        subgradient_at_solution=slope,
    )


def ogd_step(
    lam: float, observed_cost: float, target_rate: float, step_size: float
) -> float:
    """Projected ascent on the dual: raise the price when spend runs hot.

    max(0, lam + step_size * (observed_cost - target_rate)).
    """
    if step_size <= 0 or not math.isfinite(step_size):
        raise ValidationError(f"step_size must be positive, got {step_size}")
    return max(0.0, lam + step_size * (observed_cost - target_rate))
