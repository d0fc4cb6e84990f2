"""Domain types for budget-constrained treatment allocation.

An allocation instance is a set of user responses, each carrying per-treatment
reward and cost vectors, plus one global budget shared by all users. Treatment
index 0 is reserved for the null treatment (assign nothing): reward 0, cost 0
for every user. With the null slot present, the per-user best score under any
non-negative price is never below zero, which downstream solver code relies
on. Rewards may be negative (a treatment can hurt); costs may not.

All types are immutable values. validate_instance is the single entry point
that establishes the invariants; it injects the null slot when the catalog
does not include one yet, and is the identity on an already validated
instance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidStep,
    NegativeBudget,
    NegativeCost,
    NonFiniteValue,
    ParseError,
    ValidationError,
)
from . import serialize

DEFAULT_EPSILON = 0.01
DEFAULT_K_COUNT = 100


@dataclass(frozen=True)
class TreatmentCatalog:
    """Shape of the treatment set all users in an instance share.

    count is the length of each user's reward/cost vector. includes_null
    records whether slot 0 is the reserved null treatment.
    """

    count: int
    includes_null: bool = True

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValidationError("catalog must have at least one treatment slot")


@dataclass(frozen=True)
class UserResponse:
    """One user's predicted reward and cost per treatment slot."""

    user_id: int
    arrival_time: float
    rewards: tuple[float, ...]
    costs: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))


@dataclass(frozen=True)
class AllocationInstance:
    users: tuple[UserResponse, ...]
    catalog: TreatmentCatalog
    budget: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "users", tuple(self.users))


def validate_instance(instance: AllocationInstance) -> AllocationInstance:
    """Check invariants and return an instance with the null slot at index 0.

    Raises NegativeBudget, DimensionMismatch, NegativeCost, or NonFiniteValue.
    Idempotent: a validated instance passes through unchanged (same object).
    """
    budget = instance.budget
    if not math.isfinite(budget):
        raise NonFiniteValue(f"budget is not finite: {budget!r}")
    if budget < 0:
        raise NegativeBudget(f"budget must be non-negative, got {budget}")

    count = instance.catalog.count
    for user in instance.users:
        if len(user.rewards) != count or len(user.costs) != count:
            raise DimensionMismatch(
                f"user {user.user_id}: expected {count} reward/cost entries, "
                f"got {len(user.rewards)}/{len(user.costs)}"
            )
        for r in user.rewards:
            if not math.isfinite(r):
                raise NonFiniteValue(f"user {user.user_id}: non-finite reward {r!r}")
        for c in user.costs:
            if not math.isfinite(c):
                raise NonFiniteValue(f"user {user.user_id}: non-finite cost {c!r}")
            if c < 0:
                raise NegativeCost(f"user {user.user_id}: negative cost {c}")
        if not math.isfinite(user.arrival_time):
            raise NonFiniteValue(f"user {user.user_id}: non-finite arrival time")

    if instance.catalog.includes_null:
        for user in instance.users:
            if user.rewards[0] != 0.0 or user.costs[0] != 0.0:
                raise ValidationError(
                    f"user {user.user_id}: null slot must be reward 0, cost 0"
                )
        return instance

    users = tuple(
        UserResponse(
            user_id=u.user_id,
            arrival_time=u.arrival_time,
            rewards=(0.0,) + u.rewards,
            costs=(0.0,) + u.costs,
        )
        for u in instance.users
    )
    return AllocationInstance(
        users=users,
        catalog=TreatmentCatalog(count=count + 1, includes_null=True),
        budget=budget,
    )


@dataclass(frozen=True)
class LambdaGrid:
    """Uniform price grid: values[k] = lambda_low + k * epsilon, k = 0..k_count."""

    lambda_low: float
    epsilon: float
    k_count: int
    values: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not math.isfinite(self.epsilon) or self.epsilon <= 0:
            raise InvalidStep(f"epsilon must be positive, got {self.epsilon}")
        if self.k_count < 1:
            raise ValidationError(f"k_count must be >= 1, got {self.k_count}")
        if not math.isfinite(self.lambda_low) or self.lambda_low < 0:
            raise ValidationError(f"lambda_low must be >= 0, got {self.lambda_low}")
        values = tuple(self.lambda_low + k * self.epsilon for k in range(self.k_count + 1))
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.k_count + 1


def build_grid(
    lambda_warm: float,
    epsilon: float = DEFAULT_EPSILON,
    k_count: int = DEFAULT_K_COUNT,
) -> LambdaGrid:
    """Grid centered on a warm-start price, clamped so it never goes negative.

    lambda_low = max(0, lambda_warm - (k_count/2) * epsilon). Clamping shifts
    the whole grid up without changing the spacing.
    """
    if not math.isfinite(epsilon) or epsilon <= 0:
        raise InvalidStep(f"epsilon must be positive, got {epsilon}")
    if not math.isfinite(lambda_warm) or lambda_warm < 0:
        raise ValidationError(f"lambda_warm must be >= 0, got {lambda_warm}")
    lambda_low = max(0.0, lambda_warm - (k_count / 2.0) * epsilon)
    return LambdaGrid(lambda_low=lambda_low, epsilon=epsilon, k_count=k_count)


@dataclass(frozen=True)
class ArrivalVectorSeries:
    """Per-slot aggregate opportunity values over a price grid.

    matrix[t][k] is the slot-t sum over arriving users of the best score at
    price values[k]. Rows are non-increasing and convex in k (each row is a
    sum of per-user upper envelopes of affine functions of the price) and
    non-negative (the null slot floors every per-user score at zero).
    """

    grid: LambdaGrid
    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[1] != len(self.grid):
            raise DimensionMismatch(
                f"series matrix must be (slots, {len(self.grid)}), got {m.shape}"
            )
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def slot_count(self) -> int:
        return int(self.matrix.shape[0])


def check_series_row(row: np.ndarray, tol_scale: float = 1e-9) -> None:
    """Assert one series row is non-negative, non-increasing, and convex.

    Convexity is checked up to -tol_scale * scale where scale tracks the row
    magnitude; exact summation noise never exceeds that.
    """
    row = np.asarray(row, dtype=float)
    scale = max(1.0, float(np.max(np.abs(row))) if row.size else 1.0)
    slack = tol_scale * scale
    if np.any(row < -slack):
        raise ValidationError("series row has a negative entry")
    d = np.diff(row)
    if np.any(d > slack):
        raise ValidationError("series row is not non-increasing")
    if d.size >= 2 and np.any(np.diff(d) < -slack):
        raise ValidationError("series row is not convex")


def check_series(series: ArrivalVectorSeries, tol_scale: float = 1e-9) -> None:
    for t in range(series.slot_count):
        check_series_row(series.matrix[t], tol_scale)


@dataclass(frozen=True)
class BudgetPlan:
    """Per-slot budget split of a day-level total. source records provenance."""

    slot_budgets: tuple[float, ...]
    total: float
    source: str = "uniform"

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "slot_budgets", tuple(float(b) for b in self.slot_budgets)
        )

    @property
    def slot_count(self) -> int:
        return len(self.slot_budgets)


def check_plan(plan: BudgetPlan) -> None:
    """Invariants for a freshly built plan: non-negative slots, sum <= total."""
    if plan.total < 0 or not math.isfinite(plan.total):
        raise NegativeBudget(f"plan total must be finite and >= 0, got {plan.total}")
    for t, b in enumerate(plan.slot_budgets):
        if not math.isfinite(b):
            raise NonFiniteValue(f"slot {t}: non-finite budget")
        if b < 0:
            raise NegativeBudget(f"slot {t}: negative budget {b}")
    if sum(plan.slot_budgets) > plan.total + 1e-9 * max(1.0, plan.total):
        raise ValidationError("slot budgets exceed the plan total")


# --- instance file format (JSON lines) -------------------------------------
#
# Line 1 (header):  {"budget": <float>, "treatments": <int>, "includes_null": <bool>}
# Lines 2..n+1:     {"user_id": <int>, "arrival_time": <float>,
#                    "rewards": [<float>...], "costs": [<float>...]}
#
# Floats are written with 17 significant decimal digits, so write/read/write
# is byte-identical.

_HEADER_KEYS = {"budget", "treatments", "includes_null"}
_USER_KEYS = {"user_id", "arrival_time", "rewards", "costs"}


def write_instance(instance: AllocationInstance, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "budget": float(instance.budget),
            "treatments": instance.catalog.count,
            "includes_null": instance.catalog.includes_null,
        }
        fh.write(serialize.dumps(header))
        fh.write("\n")
        for user in instance.users:
            record = {
                "user_id": user.user_id,
                "arrival_time": float(user.arrival_time),
                "rewards": list(user.rewards),
                "costs": list(user.costs),
            }
            fh.write(serialize.dumps(record))
            fh.write("\n")


def read_instance(path: str) -> AllocationInstance:
    """Parse an instance file. Raises ParseError on malformed content.

    Does not validate domain invariants; run validate_instance on the result.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line for line in fh.read().splitlines() if line.strip()]
    if not lines:
        raise ParseError(f"{path}: empty instance file")

    header = serialize.loads(lines[0])
    if not isinstance(header, dict) or set(header) != _HEADER_KEYS:
        raise ParseError(f"{path}: bad header record")
    try:
        budget = float(header["budget"])
        count = int(header["treatments"])
        includes_null = bool(header["includes_null"])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad header field types") from exc

    users = []
    for lineno, line in enumerate(lines[1:], start=2):
        rec = serialize.loads(line)
        if not isinstance(rec, dict) or set(rec) != _USER_KEYS:
            raise ParseError(f"{path}:{lineno}: bad user record")
        try:
            users.append(
                UserResponse(
                    user_id=int(rec["user_id"]),
                    arrival_time=float(rec["arrival_time"]),
                    rewards=tuple(float(r) for r in rec["rewards"]),
                    costs=tuple(float(c) for c in rec["costs"]),
                )
            )
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: bad user field types") from exc

    return AllocationInstance(
        users=tuple(users),
        catalog=TreatmentCatalog(count=count, includes_null=includes_null),
        budget=budget,
    )
