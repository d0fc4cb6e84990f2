"""Budget pacing: split a day budget across slots.

uniform_plan spreads the total evenly. temporal_plan shapes the split after a
consumption history: average the days into one per-slot profile, smooth it by
keeping only the strong spectral lines, then mix with a uniform floor so no
slot starves. replan_remaining rescales the not-yet-started slots so the rest
of the day commits exactly the budget still unspent.

Every plan built here sums to its target exactly (a residue-absorption pass
pins the float sum), which is what makes replanning idempotent: rescaling a
plan that already sums to the remaining budget is the identity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NegativeBudget, NonFiniteValue, TooShort, ValidationError
from .model import BudgetPlan


@dataclass(frozen=True)
class ConsumptionHistory:
    """Historical spend or traffic per slot, whole days only."""

    slot_rates: tuple[float, ...]
    slots_per_day: int

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "slot_rates", tuple(float(r) for r in self.slot_rates)
        )
        if self.slots_per_day < 1:
            raise ValidationError("slots_per_day must be >= 1")
        if len(self.slot_rates) == 0:
            raise ValidationError("history must not be empty")
        if len(self.slot_rates) % self.slots_per_day != 0:
            raise ValidationError(
                f"history length {len(self.slot_rates)} is not a multiple of "
                f"slots_per_day {self.slots_per_day}"
            )
        for r in self.slot_rates:
            if not math.isfinite(r):
                raise NonFiniteValue("history contains a non-finite rate")
            if r < 0:
                raise ValidationError("history rates must be non-negative")

    @property
    def days(self) -> int:
        return len(self.slot_rates) // self.slots_per_day


@dataclass(frozen=True)
class SpectrumReport:
    dominant_period: int
    power_fraction: float


def _absorb_residue(values: list[float], target: float, idx: int) -> list[float]:
    """Adjust values[idx] so that sum(values) == target, bit for bit.

    The sum as a function of values[idx] is a monotone step function whose
    steps are at most one ulp of the result whenever values[idx] is no larger
    than the target, so walking the candidate by ulps finds an exact hit.
    Falls back to the feasible side (sum < target) if rounding ever skips it.
    """
    x = values[idx] + (target - sum(values))
    if not math.isfinite(x):
        x = values[idx]
    x = max(0.0, x)
    best_below = None
    for _ in range(64):
        values[idx] = x
        s = sum(values)
        if s == target:
            return values
        if s < target:
            best_below = x
            x = math.nextafter(x, math.inf)
        else:
            if best_below is not None:
                break
            if x <= 0.0:
                break
            x = max(0.0, math.nextafter(x, -math.inf))
    values[idx] = best_below if best_below is not None else max(0.0, x)
    return values


def uniform_plan(total: float, slot_count: int) -> BudgetPlan:
    """Even split; the last slot absorbs the rounding residue exactly."""
    if not math.isfinite(total) or total < 0:
        raise NegativeBudget(f"total must be finite and >= 0, got {total}")
    if slot_count < 1:
        raise ValidationError(f"slot_count must be >= 1, got {slot_count}")
    q = total / slot_count
    values = [q] * slot_count
    values = _absorb_residue(values, total, slot_count - 1)
    return BudgetPlan(slot_budgets=tuple(values), total=total, source="uniform")


def periodogram(history: ConsumptionHistory) -> SpectrumReport:
    """Dominant cycle of the mean-removed history.

    dominant_period = round(N / k*) for the strongest non-DC bin k*; ties go
    to the smaller bin, i.e. the longer period. A (near-)constant history has
    no cycle: power_fraction is reported as 0 and the period defaults to the
    history length. Raises TooShort for histories under 4 slots.
    """
    x = np.asarray(history.slot_rates, dtype=float)
    n = x.size
    if n < 4:
        raise TooShort(f"periodogram needs at least 4 slots, got {n}")
    centered = x - x.mean()
    power = np.abs(np.fft.rfft(centered)) ** 2
    bins = power[1:]  # index i corresponds to frequency bin k = i + 1
    total = float(np.sum(bins))
    energy = float(np.sum(x * x))
    if total <= 1e-20 * max(energy, 1e-300):
        return SpectrumReport(dominant_period=n, power_fraction=0.0)
    k = int(np.argmax(bins)) + 1  # argmax takes the first (longest period) tie
    period = int(round(n / k))
    period = max(2, min(n, period))
    return SpectrumReport(
        dominant_period=period, power_fraction=float(bins[k - 1] / total)
    )


SMOOTHING_POWER_FRACTION = 0.05


def _smoothed_profile(profile: np.ndarray) -> np.ndarray:
    """Keep DC plus spectral lines holding >= 5% of the non-DC power."""
    spectrum = np.fft.rfft(profile)
    power = np.abs(spectrum[1:]) ** 2
    total = float(np.sum(power))
    if total > 0.0:
        weak = np.flatnonzero(power < SMOOTHING_POWER_FRACTION * total) + 1
        spectrum[weak] = 0.0
    smoothed = np.fft.irfft(spectrum, n=profile.size)
    return np.maximum(smoothed, 0.0)


def temporal_plan(
    total: float, history: ConsumptionHistory, floor_fraction: float = 0.1
) -> BudgetPlan:
    """Shape slot budgets after the history's per-day profile.

    Days are averaged into one slots_per_day profile, smoothed spectrally,
    clipped at zero, normalized to shares, then mixed with the uniform share:
    share_t = (1 - floor) * profile_t / sum(profile) + floor / T. This keeps
    min_t budget >= floor_fraction * total / T while following the history's
    rhythm. An all-zero history cannot be shaped; the plan falls back to
    uniform and says so in its source metadata.
    """
    if not math.isfinite(total) or total < 0:
        raise NegativeBudget(f"total must be finite and >= 0, got {total}")
    if not 0.0 <= floor_fraction <= 1.0:
        raise ValidationError(
            f"floor_fraction must be in [0, 1], got {floor_fraction}"
        )
    T = history.slots_per_day
    x = np.asarray(history.slot_rates, dtype=float)
    profile = x.reshape(history.days, T).mean(axis=0)

    if float(np.sum(profile)) <= 0.0:
        base = uniform_plan(total, T)
        return BudgetPlan(
            slot_budgets=base.slot_budgets, total=total, source="temporal-degenerate"
        )

    if float(np.ptp(profile)) == 0.0:
        # flat profile: skip the transform so the result is the exact
        # uniform split, not uniform plus FFT round-off
        base = uniform_plan(total, T)
        return BudgetPlan(
            slot_budgets=base.slot_budgets, total=total, source="temporal"
        )

    smoothed = _smoothed_profile(profile)
    ssum = float(np.sum(smoothed))
    if ssum <= 0.0:
        base = uniform_plan(total, T)
        return BudgetPlan(
            slot_budgets=base.slot_budgets, total=total, source="temporal-degenerate"
        )

    shares = [
        (1.0 - floor_fraction) * (float(s) / ssum) + floor_fraction / T
        for s in smoothed
    ]
    if max(shares) == min(shares):
        # flat shares: emit the exact uniform split so the two strategies
        # agree bit for bit in the degenerate case
        base = uniform_plan(total, T)
        return BudgetPlan(
            slot_budgets=base.slot_budgets, total=total, source="temporal"
        )
    values = [total * s for s in shares]
    # absorb at the last slot: the ulp walk is exact there, and the shift is
    # a few ulps of the total, far below the floor slack
    values = _absorb_residue(values, total, T - 1)
    return BudgetPlan(slot_budgets=tuple(values), total=total, source="temporal")


def replan_remaining(
    plan: BudgetPlan, spent_so_far: float, current_slot: int
) -> BudgetPlan:
    """Rescale the remaining slots to the budget actually left.

    Slots before current_slot keep their planned values (they are history);
    slots from current_slot on are scaled proportionally so their sum equals
    max(0, total - spent_so_far) exactly. Overspend zeroes the future. When
    the future slots are all zero but budget remains, it is split evenly.
    Idempotent at fixed (spent_so_far, current_slot).
    """
    if not math.isfinite(spent_so_far) or spent_so_far < 0:
        raise ValidationError(f"spent_so_far must be >= 0, got {spent_so_far}")
    T = plan.slot_count
    if not 0 <= current_slot < T:
        raise ValidationError(f"current_slot {current_slot} outside [0, {T})")

    remaining = max(0.0, plan.total - spent_so_far)
    future = list(plan.slot_budgets[current_slot:])
    future_sum = sum(future)
    if future_sum == remaining:
        return plan
    if future_sum > 0.0:
        scale = remaining / future_sum
        future = [b * scale for b in future]
    elif remaining > 0.0:
        future = [remaining / len(future)] * len(future)
    future = _absorb_residue(future, remaining, len(future) - 1)
    values = list(plan.slot_budgets[:current_slot]) + future
    return BudgetPlan(slot_budgets=tuple(values), total=plan.total, source="replan")


# --- plan files --------------------------------------------------------------

def write_plan_csv(plan: BudgetPlan, path: str) -> None:
    from . import serialize

    rows = [[t, b] for t, b in enumerate(plan.slot_budgets)]
    serialize.write_csv(path, ["slot_index", "budget"], rows)


def read_history_csv(path: str, slots_per_day: int) -> ConsumptionHistory:
    """Parse 'slot_index,rate' CSV lines into a ConsumptionHistory."""
    from .errors import ParseError

    rates: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty history file")
    header = lines[0].lower().replace(" ", "")
    start = 1 if header in ("slot_index,rate", "slot_index,budget") else 0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        parts = line.split(",")
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'slot_index,rate'")
        try:
            idx = int(parts[0])
            rate = float(parts[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: bad field types") from exc
        if idx != len(rates):
            raise ParseError(f"{path}:{lineno}: slot_index out of order")
        rates.append(rate)
    return ConsumptionHistory(slot_rates=tuple(rates), slots_per_day=slots_per_day)
