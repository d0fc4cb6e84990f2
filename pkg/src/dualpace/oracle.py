"""Ground-truth references for small instances.

brute_force_ip enumerates every assignment of treatments to users and keeps
the best budget-feasible one, so it is exact by construction. dense_dual_min
scans the dual objective on a fine uniform price grid. Together they certify
the production solvers: any feasible assignment's reward must sit at or below
every dual value (weak duality), and the bisection solver's objective must
land within a Lipschitz-sized band of the dense minimum.

Neither function shares code with the solvers beyond instance validation and
the per-user decision rule definition, so agreement is a two-route check, not
a tautology.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import TooLarge, ValidationError
from .model import AllocationInstance, validate_instance
from .solver import default_lambda_max, pack_responses

ENUMERATION_CAP = 10_000_000


@dataclass(frozen=True)
class OracleResult:
    best_value: float
    best_assignment: tuple[int, ...]
    dual_bound: float | None = None
    gap: float | None = None


def brute_force_ip(instance: AllocationInstance) -> OracleResult:
    """Exact optimum by full enumeration.

    Ties on total reward break toward the lexicographically smallest
    assignment vector. Raises TooLarge when count**users exceeds the cap.

    The enumeration is materialized as numpy tensors built one user at a
    time, so each total is accumulated in the same left-to-right order as a
    sequential loop over users and the float semantics match a plain
    reference implementation exactly.
    """
    inst = validate_instance(instance)
    users = inst.users
    n = len(users)
    count = inst.catalog.count
    if n == 0:
        return OracleResult(best_value=0.0, best_assignment=())
    if count**n > ENUMERATION_CAP:
        raise TooLarge(
            f"{count}**{n} assignments exceed the enumeration cap {ENUMERATION_CAP}"
        )

    R, C = pack_responses(users)
    rewards = np.zeros(1)
    costs = np.zeros(1)
    for i in range(n):
        rewards = (rewards[:, None] + R[i][None, :]).ravel()
        costs = (costs[:, None] + C[i][None, :]).ravel()

    feasible = costs <= inst.budget  # all-null is always feasible (budget >= 0)
    best_value = float(np.max(rewards[feasible]))
    best_index = int(np.flatnonzero(feasible & (rewards == best_value))[0])

    assignment = [0] * n
    idx = best_index
    for i in range(n - 1, -1, -1):  # user 0 is the most significant digit
        assignment[i] = idx % count
        idx //= count
    return OracleResult(best_value=best_value, best_assignment=tuple(assignment))


def dense_dual_min(
    instance: AllocationInstance,
    step: float = 1e-4,
    lambda_max: float | None = None,
    chunk: int = 65536,
) -> float:
    """Linear scan of L(lam) = lam * B + v(lam) over [0, lambda_max].

    Scans prices 0, step, 2*step, ... and returns the smallest objective
    seen. L is convex, so once a whole chunk fails to improve the running
    minimum the scan can stop: a convex sequence never decreases again after
    it stops decreasing. That keeps fine steps tractable without involving
    the bisection solver in any way.
    """
    if step <= 0 or not math.isfinite(step):
        raise ValidationError(f"step must be positive, got {step}")
    inst = validate_instance(instance)
    if lambda_max is None:
        lambda_max = default_lambda_max(inst.users)
    R, C = pack_responses(inst.users)
    budget = inst.budget

    n_points = int(math.floor(lambda_max / step)) + 1
    # keep the (chunk, users, treatments) intermediate under ~64 MB
    cells = max(1, R.shape[0] * R.shape[1])
    chunk = max(1, min(chunk, 8_000_000 // cells))
    best = math.inf
    start = 0
    while start < n_points:
        stop = min(start + chunk, n_points)
        lams = np.arange(start, stop, dtype=float) * step
        if R.shape[0] == 0:
            values = np.zeros(len(lams))
        else:
            scores = R[None, :, :] - lams[:, None, None] * C[None, :, :]
            values = scores.max(axis=2).sum(axis=1)
        objectives = lams * budget + values
        chunk_best = float(np.min(objectives))
        if chunk_best < best:
            best = chunk_best
        else:
            break  # convex: no later point can undercut the running minimum
        start = stop
    return best


def certify(instance: AllocationInstance, step: float = 1e-4) -> OracleResult:
    """Brute-force optimum plus dense dual bound and their gap."""
    ip = brute_force_ip(instance)
    bound = dense_dual_min(instance, step=step)
    return OracleResult(
        best_value=ip.best_value,
        best_assignment=ip.best_assignment,
        dual_bound=bound,
        gap=bound - ip.best_value,
    )
