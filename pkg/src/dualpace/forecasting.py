"""Forecasting of arrival-value rows over a lambda grid.

A forecaster consumes a sliding window of realized rows (one per slot, each
row holding the slot's aggregate arrival value at every grid point) and emits
rows for the next `horizon` slots. Built-in methods cover the usual
baselines; `remote_forecast` talks to an external service over a small JSON
protocol and falls back to a built-in method when the service is down.

Every emitted row is passed through `repair_row`, so forecasts always satisfy
the same shape invariants as realized rows: non-negative, non-increasing,
convex. Repair is the identity on rows that already qualify.
"""
from __future__ import annotations

import math
import shlex
import socket
import subprocess
import urllib.error
import urllib.request
from dataclasses import dataclass, replace

import numpy as np

from . import serialize
from .errors import (
    InsufficientHistory,
    LengthMismatch,
    ParseError,
    ProtocolError,
    ServiceUnavailable,
    ShapeMismatch,
    ValidationError,
)

METHODS = ("naive", "seasonal_naive", "exp_smoothing", "auto_regressive")

DEFAULT_ALPHA = 0.3
DEFAULT_LAGS = 4
DEFAULT_RIDGE = 1e-3
ROW_SLACK = 1e-9  # relative tolerance for the convexity check


@dataclass(frozen=True)
class SlidingWindow:
    """Fixed-capacity backcast buffer of realized rows, oldest first."""

    backcast_length: int
    rows: tuple[tuple[float, ...], ...] = ()
    current_slot: int = 0

    def __post_init__(self):
        if self.backcast_length < 1:
            raise ValidationError(
                f"backcast_length must be >= 1, got {self.backcast_length}"
            )
        if len(self.rows) > self.backcast_length:
            raise ValidationError("window holds more rows than backcast_length")
        widths = {len(r) for r in self.rows}
        if len(widths) > 1:
            raise LengthMismatch(f"window rows have mixed widths {sorted(widths)}")

    @property
    def width(self) -> int | None:
        return len(self.rows[0]) if self.rows else None


def window_push(window: SlidingWindow, row) -> SlidingWindow:
    """Return a new window with `row` appended, evicting the oldest row
    once the buffer is full."""
    vals = tuple(float(v) for v in row)
    if window.width is not None and len(vals) != window.width:
        raise LengthMismatch(
            f"row width {len(vals)} != window width {window.width}"
        )
    rows = window.rows + (vals,)
    if len(rows) > window.backcast_length:
        rows = rows[len(rows) - window.backcast_length:]
    return replace(window, rows=rows, current_slot=window.current_slot + 1)


@dataclass(frozen=True)
class ForecastResult:
    horizon: int
    rows: tuple[tuple[float, ...], ...]
    source: str


# --- row repair ---------------------------------------------------------------

def _row_is_valid(vals: tuple[float, ...]) -> bool:
    n = len(vals)
    scale = max(1.0, max((abs(v) for v in vals), default=0.0))
    if not all(math.isfinite(v) for v in vals):
        return False
    if any(v < 0.0 for v in vals):
        return False
    for i in range(n - 1):
        if vals[i + 1] > vals[i]:
            return False
    slack = ROW_SLACK * scale
    for i in range(n - 2):
        if (vals[i + 2] - vals[i + 1]) - (vals[i + 1] - vals[i]) < -slack:
            return False
    return True


def _pav_nondecreasing(d: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators fit of a non-decreasing sequence to d."""
    means: list[float] = []
    weights: list[int] = []
    for v in d:
        means.append(float(v))
        weights.append(1)
        while len(means) >= 2 and means[-2] > means[-1]:
            w = weights[-2] + weights[-1]
            m = (weights[-2] * means[-2] + weights[-1] * means[-1]) / w
            means[-2:] = [m]
            weights[-2:] = [w]
    out: list[float] = []
    for m, w in zip(means, weights):
        out.extend([m] * w)
    return np.asarray(out, dtype=float)


def repair_row(row) -> tuple[float, ...]:
    """Project a row onto the valid set: non-negative, non-increasing,
    convex. Valid rows pass through unchanged.

    Works on first differences: an isotonic (non-decreasing) fit restores
    convexity, capping at zero restores monotonicity, and the level is
    re-fit by the mean offset before clipping at zero. Pointwise max with
    zero keeps both properties, so the output always validates.
    """
    if isinstance(row, tuple) and row and _row_is_valid(row):
        return row
    vals = tuple(float(v) for v in row)
    if not vals:
        return vals
    if _row_is_valid(vals):
        return vals
    arr = np.asarray(vals, dtype=float)
    arr = np.where(np.isfinite(arr), arr, 0.0)
    if arr.size == 1:
        return (float(max(arr[0], 0.0)),)
    d = np.diff(arr)
    d = np.minimum(_pav_nondecreasing(d), 0.0)
    base = np.concatenate(([0.0], np.cumsum(d)))
    shift = float(np.mean(arr - base))
    out = np.maximum(base + shift, 0.0)
    return tuple(float(x) for x in out)


# --- built-in methods ---------------------------------------------------------

def _ar_column(series: list[float], horizon: int, lags: int, ridge: float) -> list[float]:
    L = len(series)
    p = lags
    if float(np.ptp(series)) == 0.0:
        return [series[-1]] * horizon  # constant series is a fixed point
    X = np.empty((L - p, p))
    y = np.empty(L - p)
    for t in range(p, L):
        X[t - p] = [series[t - 1 - j] for j in range(p)]  # most recent first
        y[t - p] = series[t]
    n = L - p
    G = X.T @ X + ridge * np.eye(p)
    col = X.sum(axis=0)
    A = np.zeros((p + 1, p + 1))
    A[:p, :p] = G
    A[:p, p] = col
    A[p, :p] = col
    A[p, p] = n
    rhs = np.concatenate([X.T @ y, [float(y.sum())]])
    try:
        sol = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    w, b = sol[:p], float(sol[p])
    hist = list(series)
    out = []
    for _ in range(horizon):
        feats = np.array([hist[-1 - j] for j in range(p)])
        nxt = float(feats @ w + b)
        if not math.isfinite(nxt):
            nxt = hist[-1]
        hist.append(nxt)
        out.append(nxt)
    return out


def forecast(
    window: SlidingWindow,
    horizon: int,
    method: str = "naive",
    params: dict | None = None,
) -> ForecastResult:
    """Forecast the next `horizon` rows from the window with a built-in method.

    Raises InsufficientHistory when the window holds too few rows for the
    method, ValidationError on unknown methods or bad parameters.
    """
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    if method not in METHODS:
        raise ValidationError(f"unknown method {method!r}; pick one of {METHODS}")
    params = dict(params or {})
    rows = window.rows
    L = len(rows)
    if L == 0:
        raise InsufficientHistory("window is empty")

    if method == "naive":
        preds = [rows[-1]] * horizon
    elif method == "seasonal_naive":
        season = int(params.get("season_length", 0))
        if season < 1:
            raise ValidationError("seasonal_naive needs season_length >= 1")
        if L < season:
            raise InsufficientHistory(
                f"seasonal_naive needs {season} rows, window has {L}"
            )
        preds = [rows[L - season + (h % season)] for h in range(horizon)]
    elif method == "exp_smoothing":
        alpha = float(params.get("alpha", DEFAULT_ALPHA))
        if not 0.0 < alpha <= 1.0:
            raise ValidationError(f"alpha must be in (0, 1], got {alpha}")
        level = np.asarray(rows[0], dtype=float)
        for r in rows[1:]:
            level = alpha * np.asarray(r, dtype=float) + (1.0 - alpha) * level
        preds = [tuple(float(v) for v in level)] * horizon
    else:  # auto_regressive
        lags = int(params.get("lags", DEFAULT_LAGS))
        ridge = float(params.get("ridge", DEFAULT_RIDGE))
        if lags < 1:
            raise ValidationError(f"lags must be >= 1, got {lags}")
        if ridge < 0.0:
            raise ValidationError(f"ridge must be >= 0, got {ridge}")
        if L < lags + 1:
            raise InsufficientHistory(
                f"auto_regressive needs {lags + 1} rows, window has {L}"
            )
        width = window.width or 0
        cols = [
            _ar_column([r[c] for r in rows], horizon, lags, ridge)
            for c in range(width)
        ]
        preds = [tuple(cols[c][h] for c in range(width)) for h in range(horizon)]

    repaired = tuple(repair_row(p) for p in preds)
    return ForecastResult(horizon=horizon, rows=repaired, source=method)


# --- accuracy metrics ---------------------------------------------------------

def _check_shapes(predicted, actual) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise ShapeMismatch(f"predicted shape {p.shape} != actual shape {a.shape}")
    if p.size == 0:
        raise ShapeMismatch("cannot score empty forecasts")
    return p, a


def mse(predicted, actual) -> float:
    p, a = _check_shapes(predicted, actual)
    return float(np.mean((p - a) ** 2))


def mae(predicted, actual) -> float:
    p, a = _check_shapes(predicted, actual)
    return float(np.mean(np.abs(p - a)))


# --- remote protocol ----------------------------------------------------------

PROTOCOL_VERSION = 1


def _http_call(url: str, body: bytes, timeout: float) -> bytes:
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code >= 500:
            raise ServiceUnavailable(f"{url}: HTTP {exc.code}") from exc
        detail = b""
        try:
            detail = exc.read()
        except OSError:
            pass
        raise ProtocolError(
            f"{url}: HTTP {exc.code} {detail[:200]!r}"
        ) from exc
    except (urllib.error.URLError, socket.timeout, ConnectionError, OSError) as exc:
        raise ServiceUnavailable(f"{url}: {exc}") from exc


def _stdio_call(command: str, body: bytes, timeout: float) -> bytes:
    try:
        proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
    except OSError as exc:
        raise ServiceUnavailable(f"stdio:{command}: {exc}") from exc
    try:
        out, _ = proc.communicate(body + b"\n", timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        proc.kill()
        proc.communicate()
        raise ServiceUnavailable(f"stdio:{command}: timeout") from exc
    line = out.split(b"\n", 1)[0] if out else b""
    if not line:
        raise ServiceUnavailable(f"stdio:{command}: no reply (exit {proc.returncode})")
    return line


def remote_forecast(
    window: SlidingWindow,
    horizon: int,
    scene_id: str,
    endpoint: str,
    grid_values,
    timeout: float = 5.0,
) -> ForecastResult:
    """Ask an external service for the next `horizon` rows.

    The endpoint is either an HTTP base URL (the request goes to
    <endpoint>/v1/forecast) or "stdio:<command>" for a line-delimited
    subprocess. Connection failures and 5xx responses raise
    ServiceUnavailable; malformed or incompatible replies raise
    ProtocolError. Reply rows are repaired before use.
    """
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    grid = [float(g) for g in grid_values]
    if window.width is not None and window.width != len(grid):
        raise LengthMismatch(
            f"window width {window.width} != grid size {len(grid)}"
        )
    payload = {
        "version": PROTOCOL_VERSION,
        "scene_id": str(scene_id),
        "grid": grid,
        "window": [list(r) for r in window.rows],
        "horizon": horizon,
    }
    body = serialize.dumps(payload).encode("utf-8")
    if endpoint.startswith("stdio:"):
        raw = _stdio_call(endpoint[len("stdio:"):], body, timeout)
    else:
        raw = _http_call(endpoint.rstrip("/") + "/v1/forecast", body, timeout)

    try:
        reply = serialize.loads(raw.decode("utf-8"))
    except (ParseError, UnicodeDecodeError) as exc:
        raise ProtocolError(f"unparseable reply: {exc}") from exc
    if not isinstance(reply, dict):
        raise ProtocolError(f"reply must be an object, got {type(reply).__name__}")
    if reply.get("version") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported reply version {reply.get('version')!r}")
    if "error" in reply:
        err = reply["error"]
        if isinstance(err, dict):
            raise ProtocolError(
                f"service error {err.get('code', '?')}: {err.get('message', '')}"
            )
        raise ProtocolError(f"service error: {err}")
    rows = reply.get("rows")
    if not isinstance(rows, list) or len(rows) != horizon:
        raise ProtocolError(f"reply must carry {horizon} rows")
    for r in rows:
        if not isinstance(r, list) or len(r) != len(grid):
            raise ProtocolError("reply row width does not match the grid")
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in r):
            raise ProtocolError("reply rows must be finite numbers")
    repaired = tuple(repair_row(r) for r in rows)
    return ForecastResult(horizon=horizon, rows=repaired, source="external")


# --- forecaster objects -------------------------------------------------------

class BuiltinForecaster:
    """Callable wrapper around `forecast` with a fixed method."""

    def __init__(self, method: str = "naive", params: dict | None = None):
        if method not in METHODS:
            raise ValidationError(f"unknown method {method!r}")
        self.method = method
        self.params = dict(params or {})

    def predict(self, window: SlidingWindow, horizon: int) -> ForecastResult:
        return forecast(window, horizon, self.method, self.params)


class RemoteForecaster:
    """Remote forecaster with a built-in fallback when the service is down.

    ProtocolError is not swallowed: a reachable but incompatible service is
    a configuration bug, not an outage.
    """

    def __init__(
        self,
        endpoint: str,
        scene_id: str,
        grid_values,
        fallback_method: str = "naive",
        fallback_params: dict | None = None,
        timeout: float = 5.0,
    ):
        self.endpoint = endpoint
        self.scene_id = scene_id
        self.grid_values = tuple(float(g) for g in grid_values)
        self.fallback_method = fallback_method
        self.fallback_params = dict(fallback_params or {})
        self.timeout = timeout
        self.fell_back = False

    def predict(self, window: SlidingWindow, horizon: int) -> ForecastResult:
        try:
            result = remote_forecast(
                window,
                horizon,
                self.scene_id,
                self.endpoint,
                self.grid_values,
                timeout=self.timeout,
            )
            self.fell_back = False
            return result
        except ServiceUnavailable:
            self.fell_back = True
            return forecast(
                window, horizon, self.fallback_method, self.fallback_params
            )
