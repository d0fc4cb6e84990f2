"""Command line interface.

Subcommands:
  solve          price one instance file and dump the solution
  simulate       run a policy comparison from a JSON config
  forecast-eval  score forecasting methods on generated streams
  pace           turn a consumption history CSV into a budget plan

Exit codes: 0 success, 2 usage or I/O error, 3 parse error, 4 validation or
other domain error. Outputs are deterministic; wall-clock timestamps go only
to the run_meta.json sidecar, never into result files. Environment overrides:
DUALPACE_OUTPUT_DIR (default output directory) and DUALPACE_ENDPOINT
(forecast service endpoint when a policy or config does not name one).
"""
from __future__ import annotations

import argparse
import datetime
import os
import sys
import time

import numpy as np

from . import serialize
from .errors import DualpaceError, ParseError, ValidationError
from .forecasting import (
    METHODS,
    RemoteForecaster,
    SlidingWindow,
    forecast,
    mae,
    mse,
)
from .model import (
    DEFAULT_EPSILON,
    DEFAULT_K_COUNT,
    build_grid,
    read_instance,
    validate_instance,
)
from .oracle import certify
from .pacing import (
    periodogram,
    read_history_csv,
    temporal_plan,
    uniform_plan,
    write_plan_csv,
)
from .simulator import (
    Archetype,
    PolicySpec,
    StreamConfig,
    compare_policies,
    generate_stream,
)
from .solver import arrival_series, best_response, solve_bisect


# --- shared plumbing ----------------------------------------------------------

def _output_dir(args) -> str:
    out = args.output_dir or os.environ.get("DUALPACE_OUTPUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    obj = serialize.loads(text)
    if not isinstance(obj, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    return obj


def _check_keys(obj: dict, allowed, required, ctx: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ValidationError(f"{ctx}: unknown keys {unknown}")
    missing = sorted(set(required) - set(obj))
    if missing:
        raise ValidationError(f"{ctx}: missing keys {missing}")


def _write_json(path: str, obj) -> None:
    serialize.dump_json(path, obj)


def _write_meta(out_dir: str, command: str, argv, started: float) -> None:
    def iso(t: float) -> str:
        dt = datetime.datetime.fromtimestamp(t, tz=datetime.timezone.utc)
        return dt.isoformat()

    finished = time.time()
    meta = {
        "command": command,
        "argv": list(argv),
        "started_at": iso(started),
        "finished_at": iso(finished),
        "duration_seconds": finished - started,
    }
    _write_json(os.path.join(out_dir, "run_meta.json"), meta)


def _sanitize(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "-" for c in name)


# --- solve --------------------------------------------------------------------

def _cmd_solve(args) -> int:
    out_dir = _output_dir(args)
    inst = validate_instance(read_instance(args.instance))
    sol = solve_bisect(inst.users, inst.budget, args.tolerance)
    assignments = []
    chosen_reward = 0.0
    chosen_cost = 0.0
    for u in inst.users:
        br = best_response(u, sol.lambda_star)
        assignments.append(
            {
                "user_id": u.user_id,
                "treatment_index": br.treatment_index,
                "score": br.score,
                "cost": br.cost,
                "reward": u.rewards[br.treatment_index],
            }
        )
        chosen_reward += u.rewards[br.treatment_index]
        chosen_cost += br.cost
    result = {
        "budget": inst.budget,
        "users": len(inst.users),
        "lambda_star": sol.lambda_star,
        "objective": sol.objective,
        "iterations": sol.iterations,
        "subgradient_at_solution": sol.subgradient_at_solution,
        "selected_reward": chosen_reward,
        "selected_cost": chosen_cost,
        "assignments": assignments,
    }
    if args.certify:
        cert = certify(inst, step=args.dense_step)
        result["certificate"] = {
            "best_value": cert.best_value,
            "best_assignment": list(cert.best_assignment),
            "dual_bound": cert.dual_bound,
            "gap": cert.gap,
        }
    _write_json(os.path.join(out_dir, "solution.json"), result)
    resolved = {
        "command": "solve",
        "instance": os.path.abspath(args.instance),
        "tolerance": args.tolerance,
        "certify": bool(args.certify),
        "dense_step": args.dense_step,
    }
    _write_json(os.path.join(out_dir, "config.resolved.json"), resolved)
    print(
        f"solved {len(inst.users)} users at budget {inst.budget}: "
        f"lambda*={sol.lambda_star:.6g} objective={sol.objective:.6g} "
        f"spend={chosen_cost:.6g}"
    )
    print(f"wrote {os.path.join(out_dir, 'solution.json')}")
    return 0


# --- simulate -----------------------------------------------------------------

_STREAM_KEYS = (
    "slots_per_day", "regime", "base_rate", "archetypes",
    "drift_start", "drift_end", "shift_slot", "shift_rate_factor",
    "peak_slots", "peak_amplitudes", "peak_width",
    "sine_amplitude", "mixture_amplitude",
)
_ARCH_KEYS = ("rewards", "costs", "noise_scale")
_POLICY_KEYS = (
    "kind", "name", "pacing", "floor_fraction", "grid_epsilon", "grid_k",
    "solver_tolerance", "ogd_step_size", "horizon", "rollover",
    "backcast_length", "forecaster", "forecaster_params",
    "endpoint", "scene_id", "fallback", "timeout",
)


def _build_stream_config(obj: dict, seed: int = 0) -> StreamConfig:
    _check_keys(obj, _STREAM_KEYS, ("slots_per_day", "archetypes"), "stream")
    arches = []
    for i, a in enumerate(obj["archetypes"]):
        if not isinstance(a, dict):
            raise ValidationError(f"stream.archetypes[{i}] must be an object")
        _check_keys(a, _ARCH_KEYS, ("rewards", "costs"), f"stream.archetypes[{i}]")
        arches.append(
            Archetype(
                rewards=tuple(a["rewards"]),
                costs=tuple(a["costs"]),
                noise_scale=float(a.get("noise_scale", 0.0)),
            )
        )
    kwargs = {k: v for k, v in obj.items() if k != "archetypes"}
    for key in ("peak_slots", "peak_amplitudes"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return StreamConfig(seed=seed, archetypes=tuple(arches), **kwargs)


def _stream_config_resolved(cfg: StreamConfig) -> dict:
    return {
        "slots_per_day": cfg.slots_per_day,
        "regime": cfg.regime,
        "base_rate": cfg.base_rate,
        "archetypes": [
            {
                "rewards": list(a.rewards),
                "costs": list(a.costs),
                "noise_scale": a.noise_scale,
            }
            for a in cfg.archetypes
        ],
        "drift_start": cfg.drift_start,
        "drift_end": cfg.drift_end,
        "shift_slot": cfg.shift_slot,
        "shift_rate_factor": cfg.shift_rate_factor,
        "peak_slots": list(cfg.peak_slots),
        "peak_amplitudes": list(cfg.peak_amplitudes),
        "peak_width": cfg.peak_width,
        "sine_amplitude": cfg.sine_amplitude,
        "mixture_amplitude": cfg.mixture_amplitude,
    }


def _build_policy(obj: dict, index: int) -> tuple[PolicySpec, dict]:
    ctx = f"policies[{index}]"
    if not isinstance(obj, dict):
        raise ValidationError(f"{ctx} must be an object")
    _check_keys(obj, _POLICY_KEYS, ("kind",), ctx)
    fields = {
        k: obj[k]
        for k in (
            "kind", "name", "pacing", "floor_fraction", "grid_epsilon",
            "grid_k", "solver_tolerance", "ogd_step_size", "horizon",
            "rollover", "backcast_length", "forecaster", "forecaster_params",
        )
        if k in obj
    }
    if obj.get("forecaster") == "remote":
        endpoint = obj.get("endpoint") or os.environ.get("DUALPACE_ENDPOINT")
        if not endpoint:
            raise ValidationError(
                f"{ctx}: remote forecaster needs an endpoint "
                "(policy key or DUALPACE_ENDPOINT)"
            )
        scene = obj.get("scene_id", "default")
        fallback = obj.get("fallback", "naive")
        timeout = float(obj.get("timeout", 5.0))

        def factory(grid, _ep=endpoint, _sc=scene, _fb=fallback, _to=timeout):
            return RemoteForecaster(
                endpoint=_ep,
                scene_id=_sc,
                grid_values=grid.values,
                fallback_method=_fb,
                timeout=_to,
            )

        fields["forecaster"] = factory
    spec = PolicySpec(**fields)
    resolved = {
        "kind": spec.kind,
        "name": spec.label,
        "pacing": spec.pacing,
        "floor_fraction": spec.floor_fraction,
        "grid_epsilon": spec.grid_epsilon,
        "grid_k": spec.grid_k,
        "solver_tolerance": spec.solver_tolerance,
        "ogd_step_size": spec.ogd_step_size,
        "horizon": spec.horizon,
        "rollover": spec.rollover,
        "backcast_length": spec.backcast_length,
        "forecaster": obj.get("forecaster"),
        "forecaster_params": spec.forecaster_params,
    }
    if obj.get("forecaster") == "remote":
        resolved["endpoint"] = obj.get("endpoint") or "$DUALPACE_ENDPOINT"
        resolved["scene_id"] = obj.get("scene_id", "default")
        resolved["fallback"] = obj.get("fallback", "naive")
        resolved["timeout"] = float(obj.get("timeout", 5.0))
    return spec, resolved


def _parse_seeds(obj) -> list[int]:
    if isinstance(obj, list):
        return [int(s) for s in obj]
    if isinstance(obj, dict):
        _check_keys(obj, ("start", "count"), ("count",), "seeds")
        start = int(obj.get("start", 0))
        count = int(obj["count"])
        if count < 1:
            raise ValidationError(f"seeds.count must be >= 1, got {count}")
        return list(range(start, start + count))
    raise ValidationError("seeds must be a list or {start, count}")


_SIMULATE_KEYS = (
    "stream", "budget", "seeds", "history_days", "compute_dual_bound",
    "policies",
)


def _cmd_simulate(args) -> int:
    out_dir = _output_dir(args)
    cfg = _load_config(args.config)
    _check_keys(cfg, _SIMULATE_KEYS, ("stream", "budget", "seeds", "policies"),
                "config")
    stream_cfg = _build_stream_config(cfg["stream"])
    budget = float(cfg["budget"])
    seeds = _parse_seeds(cfg["seeds"])
    history_days = int(cfg.get("history_days", 1))
    dual_bound = bool(cfg.get("compute_dual_bound", False))
    if not isinstance(cfg["policies"], list) or not cfg["policies"]:
        raise ValidationError("config: policies must be a non-empty list")
    built = [_build_policy(p, i) for i, p in enumerate(cfg["policies"])]
    policies = [b[0] for b in built]

    result = compare_policies(
        stream_cfg, budget, policies, seeds,
        history_day_count=history_days, compute_dual_bound=dual_bound,
    )

    resolved = {
        "command": "simulate",
        "stream": _stream_config_resolved(stream_cfg),
        "budget": budget,
        "seeds": seeds,
        "history_days": history_days,
        "compute_dual_bound": dual_bound,
        "policies": [b[1] for b in built],
    }
    _write_json(os.path.join(out_dir, "config.resolved.json"), resolved)

    aggregates = {}
    for i, name in enumerate(result.policy_names):
        aggregates[name] = {
            "mean_reward": result.mean_reward[i],
            "std_reward": result.std_reward[i],
            "mean_spend": result.mean_spend[i],
            "mean_profit": result.mean_profit[i],
            "mean_decisions": result.mean_decisions[i],
        }
    episodes = {}
    for i, name in enumerate(result.policy_names):
        episodes[name] = [
            {
                "seed": result.seeds[s],
                "total_reward": e.total_reward,
                "total_spend": e.total_spend,
                "violation": e.violation,
                "decisions": sum(e.per_slot_decisions),
                "dual_bound": e.dual_bound,
            }
            for s, e in enumerate(result.episodes[i])
        ]
    report = {
        "budget": budget,
        "seeds": list(result.seeds),
        "history_days": history_days,
        "policies": list(result.policy_names),
        "aggregates": aggregates,
        "win_rate": [list(row) for row in result.win_rate],
        "episodes": episodes,
    }
    _write_json(os.path.join(out_dir, "report.json"), report)

    for i, name in enumerate(result.policy_names):
        for s, e in enumerate(result.episodes[i]):
            rows = [
                [t, e.per_slot_lambda[t], e.per_slot_spend[t],
                 e.per_slot_reward[t], e.per_slot_users[t],
                 e.per_slot_decisions[t]]
                for t in range(len(e.per_slot_lambda))
            ]
            path = os.path.join(
                out_dir, f"episode_{_sanitize(name)}_{result.seeds[s]}.csv"
            )
            serialize.write_csv(
                path,
                ["slot", "lambda", "spend", "reward", "users", "decisions"],
                rows,
            )

    width = max(len(n) for n in result.policy_names) + 2
    print(f"{'policy':<{width}}{'mean_reward':>14}{'mean_spend':>14}"
          f"{'mean_profit':>14}{'violations':>12}")
    for i, name in enumerate(result.policy_names):
        violations = sum(
            1 for e in result.episodes[i] if e.violation > 0
        )
        print(
            f"{name:<{width}}{result.mean_reward[i]:>14.4f}"
            f"{result.mean_spend[i]:>14.4f}{result.mean_profit[i]:>14.4f}"
            f"{violations:>12d}"
        )
    print(f"wrote {os.path.join(out_dir, 'report.json')}")
    return 0


# --- forecast-eval ------------------------------------------------------------

_EVAL_KEYS = (
    "stream", "days", "methods", "horizons", "backcast",
    "lambda_warm", "grid_epsilon", "grid_k", "seed",
)


def _cmd_forecast_eval(args) -> int:
    out_dir = _output_dir(args)
    cfg = _load_config(args.config)
    _check_keys(cfg, _EVAL_KEYS, ("stream",), "config")
    stream_cfg = _build_stream_config(cfg["stream"], seed=int(cfg.get("seed", 0)))
    days = int(cfg.get("days", 6))
    if days < 2:
        raise ValidationError(f"days must be >= 2, got {days}")
    T = stream_cfg.slots_per_day
    methods = list(cfg.get("methods", list(METHODS)))
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}; pick from {METHODS}")
    horizons = [int(h) for h in cfg.get("horizons", [1, max(2, T // 2), T])]
    if any(h < 1 for h in horizons):
        raise ValidationError("horizons must be >= 1")
    backcast = int(cfg.get("backcast", 2 * T))
    grid = build_grid(
        float(cfg.get("lambda_warm", 0.5)),
        float(cfg.get("grid_epsilon", DEFAULT_EPSILON)),
        int(cfg.get("grid_k", DEFAULT_K_COUNT)),
    )

    rows: list[tuple[float, ...]] = []
    for d in range(days):
        day = generate_stream(stream_cfg, d)
        for row in arrival_series(day, grid).matrix:
            rows.append(tuple(float(v) for v in row))
    N = len(rows)
    if N - max(horizons) <= backcast:
        raise ValidationError(
            f"series too short: {N} rows, backcast {backcast}, "
            f"max horizon {max(horizons)}"
        )

    out_rows = []
    for method in methods:
        params = {"season_length": T} if method == "seasonal_naive" else {}
        for h in sorted(horizons):
            sq, ab = [], []
            for origin in range(backcast, N - h + 1):
                window = SlidingWindow(
                    backcast_length=backcast,
                    rows=tuple(rows[origin - backcast:origin]),
                    current_slot=origin,
                )
                pred = forecast(window, h, method, params)
                actual = rows[origin:origin + h]
                sq.append(mse(pred.rows, actual))
                ab.append(mae(pred.rows, actual))
            out_rows.append([method, h, float(np.mean(sq)), float(np.mean(ab))])

    serialize.write_csv(
        os.path.join(out_dir, "forecast_eval.csv"),
        ["method", "horizon", "mse", "mae"],
        out_rows,
    )
    resolved = {
        "command": "forecast-eval",
        "stream": _stream_config_resolved(stream_cfg),
        "seed": stream_cfg.seed,
        "days": days,
        "methods": methods,
        "horizons": sorted(horizons),
        "backcast": backcast,
        "lambda_warm": float(cfg.get("lambda_warm", 0.5)),
        "grid_epsilon": float(cfg.get("grid_epsilon", DEFAULT_EPSILON)),
        "grid_k": int(cfg.get("grid_k", DEFAULT_K_COUNT)),
    }
    _write_json(os.path.join(out_dir, "config.resolved.json"), resolved)

    print(f"{'method':<18}{'horizon':>8}{'mse':>16}{'mae':>16}")
    for method, h, s, a in out_rows:
        print(f"{method:<18}{h:>8d}{s:>16.6g}{a:>16.6g}")
    print(f"wrote {os.path.join(out_dir, 'forecast_eval.csv')}")
    return 0


# --- pace ---------------------------------------------------------------------

def _cmd_pace(args) -> int:
    out_dir = _output_dir(args)
    if args.strategy == "temporal" and not args.history:
        raise ValidationError("temporal pacing needs --history")
    if args.strategy == "uniform" and not args.slots_per_day and not args.history:
        raise ValidationError("uniform pacing needs --slots-per-day or --history")

    history = None
    if args.history:
        if not args.slots_per_day:
            raise ValidationError("--history needs --slots-per-day")
        history = read_history_csv(args.history, args.slots_per_day)
    T = args.slots_per_day or (history.slots_per_day if history else 0)

    if args.strategy == "temporal":
        plan = temporal_plan(args.budget, history, args.floor)
    else:
        plan = uniform_plan(args.budget, T)

    write_plan_csv(plan, os.path.join(out_dir, "plan.csv"))
    spectrum = None
    if history is not None and len(history.slot_rates) >= 4:
        rep = periodogram(history)
        spectrum = {
            "dominant_period": rep.dominant_period,
            "power_fraction": rep.power_fraction,
        }
        _write_json(os.path.join(out_dir, "spectrum.json"), spectrum)
    resolved = {
        "command": "pace",
        "history": os.path.abspath(args.history) if args.history else None,
        "slots_per_day": T,
        "budget": args.budget,
        "strategy": args.strategy,
        "floor": args.floor,
    }
    _write_json(os.path.join(out_dir, "config.resolved.json"), resolved)

    print(f"plan ({plan.source}): total={plan.total} slots={plan.slot_count}")
    if spectrum:
        print(
            f"spectrum: dominant_period={spectrum['dominant_period']} "
            f"power_fraction={spectrum['power_fraction']:.4f}"
        )
    print(f"wrote {os.path.join(out_dir, 'plan.csv')}")
    return 0


# --- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualpace",
        description="Budget-constrained allocation: solve, simulate, "
                    "forecast, pace.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="price one instance file")
    p.add_argument("--instance", required=True, help="instance JSONL path")
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--certify", action="store_true",
                   help="add brute-force value and dense dual bound")
    p.add_argument("--dense-step", type=float, default=1e-4)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("simulate", help="compare policies from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("forecast-eval",
                       help="rolling-origin forecast accuracy table")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_forecast_eval)

    p = sub.add_parser("pace", help="budget plan from a consumption history")
    p.add_argument("--history", default=None, help="slot_index,rate CSV")
    p.add_argument("--slots-per-day", type=int, default=None)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--strategy", choices=("uniform", "temporal"),
                   default="temporal")
    p.add_argument("--floor", type=float, default=0.1,
                   help="uniform floor fraction for temporal plans")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_pace)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.time()
    try:
        code = args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 4
    except DualpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    out = args.output_dir or os.environ.get("DUALPACE_OUTPUT_DIR") or "."
    if os.path.isdir(out):
        _write_meta(out, args.command, argv, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
