"""The forecast protocol endpoint: HTTP POST /v1/forecast or stdio lines.

Requests and replies are single JSON objects. A request carries
{version, scene_id, grid, window, horizon}; a good reply carries
{version, rows, echo} where echo repeats the parsed request values
verbatim (the round-trip debugging hook), and a bad request gets
{version, error: {code, message}} with HTTP status 200, so the error
document itself is the contract on every transport.

Replies are deterministic for a fixed checkpoint and request: inference
runs under no_grad on an eval-mode model with no dropout anywhere.
"""
from __future__ import annotations

import json
import math
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import torch

from .model import DEFAULT_SCENE
from .train import load_checkpoint

PROTOCOL_VERSION = 1
ENDPOINT_PATH = "/v1/forecast"


class ModelBundle:
    """A loaded checkpoint plus the lookup state requests need."""

    def __init__(self, model, manifest):
        self.model = model
        self.vocab = manifest["vocab"]
        self.grid = manifest["grid"]
        self.horizon = manifest["hyperparams"].horizon
        self.window_length = manifest["hyperparams"].window_length

    @staticmethod
    def from_checkpoint(path) -> "ModelBundle":
        model, manifest = load_checkpoint(path)
        return ModelBundle(model, manifest)


def _error(code: str, message: str) -> dict:
    return {
        "version": PROTOCOL_VERSION,
        "error": {"code": code, "message": message},
    }


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _fit_window(window: list[list[float]], length: int) -> list[list[float]]:
    # tolerate backcasts longer or shorter than the trained window: keep the
    # most recent rows, pad missing history by repeating the oldest row
    if len(window) >= length:
        return window[len(window) - length:]
    return [window[0]] * (length - len(window)) + window


def handle_request(bundle: ModelBundle, payload) -> dict:
    """Turn one parsed request into one reply document (never raises on bad
    requests; internal faults are the caller's to map to internal_error)."""
    if not isinstance(payload, dict):
        return _error("bad_request", "request body must be a JSON object")
    if payload.get("version") != PROTOCOL_VERSION:
        return _error(
            "version_mismatch",
            f"unsupported version {payload.get('version')!r}; "
            f"this service speaks version {PROTOCOL_VERSION}",
        )

    scene_id = payload.get("scene_id", DEFAULT_SCENE)
    if not isinstance(scene_id, str):
        return _error("bad_request", "scene_id must be a string")

    grid = payload.get("grid")
    if not isinstance(grid, list) or not all(_is_number(g) for g in grid):
        return _error("bad_request", "grid must be a list of finite numbers")
    if len(grid) != len(bundle.grid):
        return _error(
            "shape_mismatch",
            f"grid has {len(grid)} points, this model was trained on "
            f"{len(bundle.grid)}",
        )

    window = payload.get("window")
    if not isinstance(window, list) or not window:
        return _error("bad_request", "window must be a non-empty list of rows")
    for row in window:
        if not isinstance(row, list) or len(row) != len(grid):
            return _error(
                "shape_mismatch",
                f"every window row must have {len(grid)} entries",
            )
        if not all(_is_number(v) for v in row):
            return _error("bad_request", "window rows must be finite numbers")

    horizon = payload.get("horizon")
    if not isinstance(horizon, int) or isinstance(horizon, bool) or horizon < 1:
        return _error("bad_request", "horizon must be an integer >= 1")
    if horizon > bundle.horizon:
        return _error(
            "horizon_exceeded",
            f"horizon {horizon} exceeds the trained horizon {bundle.horizon}",
        )

    fitted = _fit_window([[float(v) for v in row] for row in window],
                         bundle.window_length)
    tensor = torch.from_numpy(np.asarray(fitted, dtype=np.float32))[None, :, :]
    scene_index = torch.tensor([bundle.vocab.index(scene_id)], dtype=torch.long)
    bundle.model.eval()
    with torch.no_grad():
        pred = bundle.model(tensor, scene_index)[0, :horizon]
    rows = [[float(v) for v in row] for row in pred.numpy()]

    return {
        "version": PROTOCOL_VERSION,
        "rows": rows,
        "echo": {
            "scene_id": scene_id,
            "grid": grid,
            "window": window,
            "horizon": horizon,
        },
    }


# --- HTTP transport ------------------------------------------------------------

class _ForecastHandler(BaseHTTPRequestHandler):
    def log_message(self, fmt, *args):  # keep test output clean
        pass

    def _reply(self, status: int, document: dict) -> None:
        body = json.dumps(document, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self):
        if self.path != ENDPOINT_PATH:
            self._reply(404, _error("not_found", f"no endpoint {self.path}"))
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            try:
                payload = json.loads(raw.decode("utf-8"))
            except (ValueError, UnicodeDecodeError) as exc:
                self._reply(200, _error("parse_error", f"bad JSON: {exc}"))
                return
            self._reply(200, handle_request(self.server.bundle, payload))
        except Exception as exc:  # noqa: BLE001 - transport boundary
            self._reply(500, _error("internal_error", str(exc)))


def build_server(
    checkpoint_path, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    """HTTP server bound to (host, port); port 0 picks a free one.

    The caller drives it: serve_forever() or one handle_request() at a time,
    and shutdown()/server_close() when done.
    """
    server = ThreadingHTTPServer((host, port), _ForecastHandler)
    server.daemon_threads = True
    server.bundle = ModelBundle.from_checkpoint(checkpoint_path)
    return server


# --- stdio transport -------------------------------------------------------------

def serve_stdio(checkpoint_path, stdin=None, stdout=None) -> None:
    """Line-delimited mode: one JSON request per line, one reply per line."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    bundle = ModelBundle.from_checkpoint(checkpoint_path)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            try:
                payload = json.loads(line)
            except ValueError as exc:
                reply = _error("parse_error", f"bad JSON: {exc}")
            else:
                reply = handle_request(bundle, payload)
        except Exception as exc:  # noqa: BLE001 - transport boundary
            reply = _error("internal_error", str(exc))
        stdout.write(json.dumps(reply, sort_keys=True) + "\n")
        stdout.flush()
