"""Shared test helpers (kept out of conftest so other suites can coexist)."""
import numpy as np

from dualpace.model import AllocationInstance, TreatmentCatalog, UserResponse


def uniform_instance(
    seed: int, max_users: int = 10, max_treatments: int = 3
) -> AllocationInstance:
    """Seeded instance with uniform [0,1] rewards/costs and a uniform budget.

    Catalog does not include the null slot; validate_instance injects it.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_users + 1))
    t = int(rng.integers(1, max_treatments + 1))
    users = []
    total_cost = 0.0
    for i in range(n):
        rewards = rng.uniform(0.0, 1.0, size=t)
        costs = rng.uniform(0.0, 1.0, size=t)
        total_cost += float(np.sum(costs))
        users.append(
            UserResponse(
                user_id=i,
                arrival_time=float(i),
                rewards=tuple(rewards),
                costs=tuple(costs),
            )
        )
    budget = float(rng.uniform(0.0, total_cost))
    return AllocationInstance(
        users=tuple(users),
        catalog=TreatmentCatalog(count=t, includes_null=False),
        budget=budget,
    )
