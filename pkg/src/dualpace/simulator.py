"""Seeded closed-loop simulator for budget-paced allocation policies.

A stream is one day of synthetic traffic: per slot, a Poisson number of users
drawn from a mixture of archetypes, with multiplicative log-normal noise on
each user's reward and cost vectors. Four regimes shape the day: stationary
traffic, a linear drift in volume and mix, an abrupt mid-day shift, and
diurnal peaks with a rotating mixture.

`run_episode` plays a policy against a stream under a hard budget: every
acceptance is checked against the remaining budget in float arithmetic, so
realized spend never exceeds the budget, bit for bit. Three policy kinds are
provided: per-user online gradient steps on the dual price ("ogd"), re-solving
yesterday's slot at the paced budget ("obs"), and forecast-driven grid pricing
with budget replanning ("predictive").

All randomness flows through numpy Generators seeded from (seed, day_index),
so streams, episodes, and comparisons are reproducible bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    InsufficientHistory,
    InvalidRegimeParams,
    LengthMismatch,
    ValidationError,
)
from .forecasting import BuiltinForecaster, ForecastResult, SlidingWindow, window_push
from .model import (
    DEFAULT_EPSILON,
    DEFAULT_K_COUNT,
    UserResponse,
    build_grid,
)
from .pacing import (
    ConsumptionHistory,
    replan_remaining,
    temporal_plan,
    uniform_plan,
)
from .solver import (
    arrival_series,
    best_response,
    ogd_step,
    selected_cost,
    solve_bisect,
    solve_grid,
)

REGIMES = ("stationary", "linear_drift", "abrupt_shift", "diurnal_peaks")
POLICY_KINDS = ("ogd", "obs", "predictive")
PACING_KINDS = ("uniform", "temporal")


# --- stream generation --------------------------------------------------------

@dataclass(frozen=True)
class Archetype:
    """Reward and cost template for the non-null treatments of one segment."""

    rewards: tuple[float, ...]
    costs: tuple[float, ...]
    noise_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        object.__setattr__(self, "costs", tuple(float(c) for c in self.costs))
        if not self.rewards:
            raise ValidationError("archetype needs at least one treatment")
        if len(self.rewards) != len(self.costs):
            raise ValidationError(
                f"rewards ({len(self.rewards)}) and costs ({len(self.costs)}) "
                "must have equal length"
            )
        if not all(math.isfinite(v) for v in self.rewards + self.costs):
            raise ValidationError("archetype vectors must be finite")
        if any(c < 0 for c in self.costs):
            raise ValidationError("archetype costs must be >= 0")
        if not (math.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ValidationError(f"noise_scale must be >= 0, got {self.noise_scale}")


@dataclass(frozen=True)
class StreamConfig:
    """One day of traffic: volume schedule, mixture schedule, and noise."""

    seed: int
    slots_per_day: int
    archetypes: tuple[Archetype, ...]
    regime: str = "stationary"
    base_rate: float = 10.0
    drift_start: float | None = None
    drift_end: float | None = None
    shift_slot: int | None = None
    shift_rate_factor: float = 1.0
    peak_slots: tuple[int, ...] = ()
    peak_amplitudes: tuple[float, ...] = ()
    peak_width: float = 1.5
    sine_amplitude: float = 0.0
    mixture_amplitude: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "archetypes", tuple(self.archetypes))
        object.__setattr__(self, "peak_slots", tuple(int(s) for s in self.peak_slots))
        object.__setattr__(
            self, "peak_amplitudes", tuple(float(a) for a in self.peak_amplitudes)
        )
        if self.slots_per_day < 1:
            raise ValidationError(
                f"slots_per_day must be >= 1, got {self.slots_per_day}"
            )
        if not self.archetypes:
            raise ValidationError("need at least one archetype")
        widths = {len(a.rewards) for a in self.archetypes}
        if len(widths) > 1:
            raise ValidationError(f"archetypes have mixed widths {sorted(widths)}")
        if not (math.isfinite(self.base_rate) and self.base_rate >= 0):
            raise ValidationError(f"base_rate must be >= 0, got {self.base_rate}")
        if self.regime not in REGIMES:
            raise InvalidRegimeParams(
                f"unknown regime {self.regime!r}; pick one of {REGIMES}"
            )
        T = self.slots_per_day
        if self.regime == "linear_drift":
            for label, v in (("drift_start", self.drift_start),
                             ("drift_end", self.drift_end)):
                if v is None or not math.isfinite(v) or v < 0:
                    raise InvalidRegimeParams(
                        f"linear_drift needs {label} >= 0, got {v}"
                    )
        if self.regime == "abrupt_shift":
            if self.shift_slot is None or not 0 <= self.shift_slot < T:
                raise InvalidRegimeParams(
                    f"abrupt_shift needs shift_slot in [0, {T}), got {self.shift_slot}"
                )
            f = self.shift_rate_factor
            if not (math.isfinite(f) and f >= 0):
                raise InvalidRegimeParams(
                    f"shift_rate_factor must be >= 0, got {f}"
                )
        if self.regime == "diurnal_peaks":
            if len(self.peak_slots) != len(self.peak_amplitudes):
                raise InvalidRegimeParams(
                    "peak_slots and peak_amplitudes must have equal length"
                )
            if any(not 0 <= s < T for s in self.peak_slots):
                raise InvalidRegimeParams(f"peak slots must lie in [0, {T})")
            if not (math.isfinite(self.peak_width) and self.peak_width > 0):
                raise InvalidRegimeParams(
                    f"peak_width must be > 0, got {self.peak_width}"
                )
            if not 0.0 <= self.sine_amplitude <= 1.0:
                raise InvalidRegimeParams(
                    f"sine_amplitude must be in [0, 1], got {self.sine_amplitude}"
                )
            if not 0.0 <= self.mixture_amplitude <= 1.0:
                raise InvalidRegimeParams(
                    f"mixture_amplitude must be in [0, 1], got {self.mixture_amplitude}"
                )


def _slot_rate(config: StreamConfig, t: int) -> float:
    T = config.slots_per_day
    if config.regime == "stationary":
        return config.base_rate
    if config.regime == "linear_drift":
        u = t / max(1, T - 1)
        return config.drift_start + (config.drift_end - config.drift_start) * u
    if config.regime == "abrupt_shift":
        if t < config.shift_slot:
            return config.base_rate
        return config.base_rate * config.shift_rate_factor
    level = 1.0 - config.sine_amplitude * math.cos(2.0 * math.pi * t / T)
    for s, a in zip(config.peak_slots, config.peak_amplitudes):
        level += a * math.exp(-((t - s) ** 2) / (2.0 * config.peak_width ** 2))
    return config.base_rate * max(0.0, level)


def _slot_mixture(config: StreamConfig, t: int) -> np.ndarray:
    m = len(config.archetypes)
    T = config.slots_per_day
    if config.regime == "stationary":
        w = np.full(m, 1.0)
    elif config.regime == "linear_drift":
        # tilt from the first archetypes toward the last over the day
        u = t / max(1, T - 1)
        w = (1.0 - u) * np.arange(m, 0, -1) + u * np.arange(1, m + 1)
    elif config.regime == "abrupt_shift":
        split = max(1, m // 2)
        w = np.zeros(m)
        if t < config.shift_slot or split >= m:
            w[:split] = 1.0
        else:
            w[split:] = 1.0
    else:
        phases = 2.0 * np.pi * np.arange(m) / m
        w = np.maximum(
            1e-9,
            1.0 + config.mixture_amplitude * np.sin(2.0 * np.pi * t / T + phases),
        )
    return w / float(np.sum(w))


def generate_stream(
    config: StreamConfig, day_index: int = 0
) -> list[list[UserResponse]]:
    """Generate one day of users, slot by slot.

    Every user carries a zero-reward, zero-cost null slot at index 0 ahead of
    the archetype treatments. The generator for (seed, day_index) is consumed
    in a fixed order (count, offsets, then per user: archetype, reward noise,
    cost noise), so the stream is a pure function of the config and day.
    """
    rng = np.random.default_rng([config.seed, day_index])
    k = len(config.archetypes[0].rewards)
    slots: list[list[UserResponse]] = []
    uid = 0
    for t in range(config.slots_per_day):
        rate = _slot_rate(config, t)
        weights = _slot_mixture(config, t)
        count = int(rng.poisson(rate))
        offsets = np.sort(rng.random(count))
        users: list[UserResponse] = []
        for off in offsets:
            arch = config.archetypes[int(rng.choice(len(config.archetypes), p=weights))]
            if arch.noise_scale > 0.0:
                sig = arch.noise_scale
                mu = -0.5 * sig * sig  # mean-one multiplicative noise
                fr = rng.lognormal(mean=mu, sigma=sig, size=k)
                fc = rng.lognormal(mean=mu, sigma=sig, size=k)
            else:
                fr = np.ones(k)
                fc = np.ones(k)
            rewards = (0.0,) + tuple(float(r * f) for r, f in zip(arch.rewards, fr))
            costs = (0.0,) + tuple(
                float(max(0.0, c * f)) for c, f in zip(arch.costs, fc)
            )
            users.append(
                UserResponse(
                    user_id=uid,
                    arrival_time=float(t + off),
                    rewards=rewards,
                    costs=costs,
                )
            )
            uid += 1
        slots.append(users)
    return slots


# --- policies -----------------------------------------------------------------

@dataclass(frozen=True)
class PolicySpec:
    """How a policy prices users and paces the budget.

    forecaster (predictive only): None for a naive builtin, a builtin method
    name, "oracle" to replay the true rows, an object with a
    predict(window, horizon) -> ForecastResult method, or a callable
    grid -> forecaster for clients that need the episode's grid.

    horizon (predictive only): slots of lookahead per replan. The predicted
    curves are summed and priced against their summed slot budgets, so
    horizon=1 prices each slot on its own and horizon=slots_per_day prices
    the whole remaining day at the remaining budget.
    """

    kind: str
    name: str | None = None
    pacing: str = "uniform"
    floor_fraction: float = 0.1
    grid_epsilon: float = DEFAULT_EPSILON
    grid_k: int = DEFAULT_K_COUNT
    solver_tolerance: float = 1e-6
    ogd_step_size: float = 0.05
    horizon: int = 1
    rollover: bool = True
    backcast_length: int | None = None
    forecaster: object = None
    forecaster_params: dict | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValidationError(
                f"unknown policy kind {self.kind!r}; pick one of {POLICY_KINDS}"
            )
        if self.pacing not in PACING_KINDS:
            raise ValidationError(
                f"unknown pacing {self.pacing!r}; pick one of {PACING_KINDS}"
            )
        if not 0.0 <= self.floor_fraction <= 1.0:
            raise ValidationError(
                f"floor_fraction must be in [0, 1], got {self.floor_fraction}"
            )
        if not (math.isfinite(self.grid_epsilon) and self.grid_epsilon > 0):
            raise ValidationError(f"grid_epsilon must be > 0, got {self.grid_epsilon}")
        if self.grid_k < 1:
            raise ValidationError(f"grid_k must be >= 1, got {self.grid_k}")
        if not (math.isfinite(self.solver_tolerance) and self.solver_tolerance > 0):
            raise ValidationError(
                f"solver_tolerance must be > 0, got {self.solver_tolerance}"
            )
        if not (math.isfinite(self.ogd_step_size) and self.ogd_step_size > 0):
            raise ValidationError(
                f"ogd_step_size must be > 0, got {self.ogd_step_size}"
            )
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}")
        if self.backcast_length is not None and self.backcast_length < 1:
            raise ValidationError(
                f"backcast_length must be >= 1, got {self.backcast_length}"
            )

    @property
    def label(self) -> str:
        return self.name or self.kind


class OracleForecaster:
    """Replays precomputed true rows, addressed by the window's slot counter.

    Prime the window so that current_slot equals the absolute index of the
    next row to predict; out-of-range horizons repeat the last row.
    """

    def __init__(self, rows):
        self.rows = [tuple(float(v) for v in r) for r in rows]
        if not self.rows:
            raise ValidationError("oracle needs at least one row")

    def predict(self, window: SlidingWindow, horizon: int) -> ForecastResult:
        i = window.current_slot
        out = tuple(
            self.rows[min(i + h, len(self.rows) - 1)] for h in range(horizon)
        )
        return ForecastResult(horizon=horizon, rows=out, source="oracle")


@dataclass(frozen=True)
class EpisodeMetrics:
    policy: str
    budget: float
    total_reward: float
    total_spend: float
    violation: float
    per_slot_lambda: tuple[float, ...]
    per_slot_spend: tuple[float, ...]
    per_slot_reward: tuple[float, ...]
    per_slot_users: tuple[int, ...]
    per_slot_decisions: tuple[int, ...]
    dual_bound: float | None = None

    @property
    def profit(self) -> float:
        return self.total_reward - self.total_spend


def consumption_from_history(
    history_days, budget: float, tolerance: float = 1e-6
) -> ConsumptionHistory:
    """Per-slot spend that the offline-optimal price would have realized.

    Each history day is solved as one pooled problem at the full budget; the
    day's clearing price then attributes spend to slots. The profile is
    policy-independent and carries the day's value and volume timing.
    """
    days = list(history_days)
    if not days:
        raise InsufficientHistory("need at least one history day")
    T = len(days[0])
    rates: list[float] = []
    for day in days:
        if len(day) != T:
            raise LengthMismatch(
                f"history days have mixed slot counts ({len(day)} vs {T})"
            )
        pooled = [u for slot in day for u in slot]
        lam = solve_bisect(pooled, budget, tolerance).lambda_star if pooled else 0.0
        for slot in day:
            rates.append(selected_cost(list(slot), lam))
    return ConsumptionHistory(slot_rates=tuple(rates), slots_per_day=T)


def _affordable_choice(
    user: UserResponse, lam: float, budget: float, spent: float
) -> tuple[int | None, float]:
    """Best response at lam, demoted to the affordable set near exhaustion.

    Acceptance is gated on spent + cost <= budget in float arithmetic, which
    makes the running spend invariant exact. Returns (None, 0.0) when not
    even a free slot exists."""
    br = best_response(user, lam)
    if spent + br.cost <= budget:
        return br.treatment_index, br.cost
    best_j = None
    best_s = -math.inf
    best_c = math.inf
    for j in range(len(user.rewards)):
        c = user.costs[j]
        if spent + c > budget:
            continue
        s = user.rewards[j] - lam * c
        if best_j is None or s > best_s or (s == best_s and c < best_c):
            best_j, best_s, best_c = j, s, c
    if best_j is None:
        return None, 0.0
    return best_j, user.costs[best_j]


def _resolve_forecaster(policy: PolicySpec, grid, history_days, stream):
    fc = policy.forecaster
    if fc is None:
        return BuiltinForecaster("naive", policy.forecaster_params)
    if isinstance(fc, str):
        if fc == "oracle":
            rows: list[tuple[float, ...]] = []
            for day in list(history_days) + [stream]:
                for row in arrival_series(day, grid).matrix:
                    rows.append(tuple(float(v) for v in row))
            return OracleForecaster(rows)
        return BuiltinForecaster(fc, policy.forecaster_params)
    if not hasattr(fc, "predict") and callable(fc):
        fc = fc(grid)  # factory taking the episode grid, e.g. remote clients
    if not hasattr(fc, "predict"):
        raise ValidationError("forecaster must expose predict(window, horizon)")
    return fc


def run_episode(
    stream,
    budget: float,
    policy: PolicySpec,
    history_days=(),
    compute_dual_bound: bool = False,
) -> EpisodeMetrics:
    """Play one policy against one day under a hard budget.

    The stream is a list of slots, each a list of users whose vectors carry a
    null slot at index 0 (generate_stream emits this shape). history_days are
    full prior days used for warm starts, pacing, and window priming; they
    must have the same slot count as the stream. Deterministic: no randomness
    is consumed here.
    """
    if not (math.isfinite(budget) and budget >= 0):
        raise ValidationError(f"budget must be >= 0, got {budget}")
    T = len(stream)
    if T == 0:
        raise ValidationError("stream has no slots")
    history_days = list(history_days)
    for day in history_days:
        if len(day) != T:
            raise LengthMismatch(
                f"history day has {len(day)} slots, stream has {T}"
            )

    lambda_warm = 0.0
    if history_days:
        pooled = [u for slot in history_days[-1] for u in slot]
        if pooled:
            lambda_warm = solve_bisect(
                pooled, budget, policy.solver_tolerance
            ).lambda_star

    grid = build_grid(lambda_warm, policy.grid_epsilon, policy.grid_k)

    if policy.pacing == "temporal" and history_days:
        profile = consumption_from_history(
            history_days, budget, policy.solver_tolerance
        )
        plan = temporal_plan(budget, profile, policy.floor_fraction)
    else:
        plan = uniform_plan(budget, T)

    window = SlidingWindow(
        backcast_length=policy.backcast_length or max(8, 4 * T)
    )
    forecaster = None
    if policy.kind == "predictive":
        forecaster = _resolve_forecaster(policy, grid, history_days, stream)
        for day in history_days:
            for row in arrival_series(day, grid).matrix:
                window = window_push(window, row)

    prev_users = list(history_days[-1][-1]) if history_days else []
    hist_day_counts = [sum(len(s) for s in day) for day in history_days]

    spent = 0.0
    total_reward = 0.0
    lam = lambda_warm
    seen = 0
    processed = 0
    current_plan = plan
    slot_lambda: list[float] = []
    slot_spend: list[float] = []
    slot_reward: list[float] = []
    slot_users: list[int] = []
    slot_decisions: list[int] = []

    for t, users in enumerate(stream):
        users = list(users)
        seen += len(users)

        if policy.kind == "predictive":
            if policy.rollover:
                current_plan = replan_remaining(current_plan, spent, t)
            h = min(policy.horizon, T - t)
            try:
                pred = forecaster.predict(window, h)
                # price the whole lookahead jointly: one lam for the summed
                # curves at the summed slot budgets, applied to this slot
                rows = pred.rows[:h]
                agg = rows[0] if len(rows) == 1 else tuple(
                    map(sum, zip(*rows))
                )
                target = sum(current_plan.slot_budgets[t : t + len(rows)])
                lam = solve_grid(agg, grid, target).lambda_star
            except InsufficientHistory:
                lam = lambda_warm
        elif policy.kind == "obs":
            slot_budget = plan.slot_budgets[t]
            if prev_users:
                lam = solve_bisect(
                    prev_users, slot_budget, policy.solver_tolerance
                ).lambda_star
            else:
                lam = 0.0

        s_spend = 0.0
        s_reward = 0.0
        s_decisions = 0
        if policy.kind == "ogd":
            if hist_day_counts:
                n_hat = float(np.mean(hist_day_counts))
            else:
                n_hat = seen / (t + 1) * T
            for user in users:
                j, cost = _affordable_choice(user, lam, budget, spent)
                reward = user.rewards[j] if j is not None else 0.0
                spent = spent + cost
                s_spend += cost
                s_reward += reward
                if j is not None and j != 0:
                    s_decisions += 1
                processed += 1
                target = max(0.0, budget - spent) / max(1.0, n_hat - processed)
                lam = ogd_step(lam, cost, target, policy.ogd_step_size)
        else:
            for user in users:
                j, cost = _affordable_choice(user, lam, budget, spent)
                reward = user.rewards[j] if j is not None else 0.0
                spent = spent + cost
                s_spend += cost
                s_reward += reward
                if j is not None and j != 0:
                    s_decisions += 1

        total_reward += s_reward
        slot_lambda.append(lam)
        slot_spend.append(s_spend)
        slot_reward.append(s_reward)
        slot_users.append(len(users))
        slot_decisions.append(s_decisions)

        if policy.kind == "predictive":
            realized = arrival_series([users], grid).matrix[0]
            window = window_push(window, realized)
        prev_users = users

    dual_bound = None
    if compute_dual_bound:
        pooled = [u for slot in stream for u in slot]
        # weak duality: L(lam) bounds the offline optimum for any lam >= 0
        dual_bound = solve_bisect(
            pooled, budget, policy.solver_tolerance
        ).objective if pooled else 0.0

    return EpisodeMetrics(
        policy=policy.label,
        budget=budget,
        total_reward=total_reward,
        total_spend=spent,
        violation=max(0.0, spent - budget),
        per_slot_lambda=tuple(slot_lambda),
        per_slot_spend=tuple(slot_spend),
        per_slot_reward=tuple(slot_reward),
        per_slot_users=tuple(slot_users),
        per_slot_decisions=tuple(slot_decisions),
        dual_bound=dual_bound,
    )


# --- policy comparison --------------------------------------------------------

@dataclass(frozen=True)
class ComparisonResult:
    policy_names: tuple[str, ...]
    seeds: tuple[int, ...]
    mean_reward: tuple[float, ...]
    std_reward: tuple[float, ...]
    mean_spend: tuple[float, ...]
    mean_profit: tuple[float, ...]
    mean_decisions: tuple[float, ...]
    win_rate: tuple[tuple[float, ...], ...]
    episodes: tuple[tuple[EpisodeMetrics, ...], ...]


def compare_policies(
    config: StreamConfig,
    budget: float,
    policies,
    seeds,
    history_day_count: int = 1,
    compute_dual_bound: bool = False,
) -> ComparisonResult:
    """Run every policy on the same streams and aggregate head-to-head.

    Per seed, history days are day_index 0..history_day_count-1 and the
    scored episode is the following day; all policies see identical data.
    win_rate[i][j] is the fraction of seeds where policy i out-rewards j
    (ties and the diagonal count one half).
    """
    policies = list(policies)
    if not policies:
        raise ValidationError("need at least one policy")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValidationError("need at least one seed")
    if history_day_count < 0:
        raise ValidationError(
            f"history_day_count must be >= 0, got {history_day_count}"
        )
    names = [p.label for p in policies]
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate policy names {names}")

    episodes: list[list[EpisodeMetrics]] = [[] for _ in policies]
    for seed in seeds:
        cfg = replace(config, seed=seed)
        history = [generate_stream(cfg, d) for d in range(history_day_count)]
        stream = generate_stream(cfg, history_day_count)
        for i, pol in enumerate(policies):
            episodes[i].append(
                run_episode(stream, budget, pol, history, compute_dual_bound)
            )

    rewards = np.array([[e.total_reward for e in eps] for eps in episodes])
    spends = np.array([[e.total_spend for e in eps] for eps in episodes])
    decisions = np.array(
        [[e.per_slot_decisions for e in eps] for eps in episodes]
    ).sum(axis=2)
    m = len(policies)
    win = np.full((m, m), 0.5)
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            w = np.where(
                rewards[i] > rewards[j], 1.0,
                np.where(rewards[i] == rewards[j], 0.5, 0.0),
            )
            win[i, j] = float(np.mean(w))

    return ComparisonResult(
        policy_names=tuple(names),
        seeds=tuple(seeds),
        mean_reward=tuple(float(v) for v in rewards.mean(axis=1)),
        std_reward=tuple(float(v) for v in rewards.std(axis=1)),
        mean_spend=tuple(float(v) for v in spends.mean(axis=1)),
        mean_profit=tuple(
            float(v) for v in (rewards - spends).mean(axis=1)
        ),
        mean_decisions=tuple(float(v) for v in decisions.mean(axis=1)),
        win_rate=tuple(tuple(float(v) for v in row) for row in win),
        episodes=tuple(tuple(eps) for eps in episodes),
    )
