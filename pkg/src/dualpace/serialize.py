"""Decimal-exact JSON and CSV helpers.

Floats cross every process boundary (instance files, plan CSVs, reports, the
forecast wire protocol) as decimal strings with up to 17 significant digits,
which round-trips IEEE-754 binary64 exactly. Serialized floats always carry a
'.' or an exponent so they parse back as floats, never as ints.

The writer is deliberately hand-rolled instead of json.dumps: the stdlib
encoder formats floats with repr (shortest form), and pinning the format here
keeps files byte-stable across Python versions.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np


def format_float(x: float) -> str:
    """IEEE-754 double as a decimal literal with 17 significant digits."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be serialized")
    s = format(x, ".17g")
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def dumps(obj: Any) -> str:
    """Serialize dicts/lists/scalars to JSON with pinned float formatting."""
    out: list[str] = []
    _write(obj, out)
    return "".join(out)


def dump_json(path: str, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))
        fh.write("\n")


def load_json(path: str) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return loads(text)


def loads(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        from .errors import ParseError

        raise ParseError(f"malformed JSON: {exc}") from exc


def _write(obj: Any, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(", ")
            if not isinstance(k, str):
                raise TypeError(f"JSON object keys must be str, got {type(k)}")
            out.append(json.dumps(k, ensure_ascii=False))
            out.append(": ")
            _write(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)) or (
        isinstance(obj, np.ndarray) and obj.ndim >= 1
    ):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(", ")
            _write(v, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj)}")


def write_csv(path: str, header: list[str], rows: list[list[Any]]) -> None:
    """CSV with the same pinned float format as the JSON writer."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header))
        fh.write("\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, bool):
                    cells.append("true" if cell else "false")
                elif isinstance(cell, (float, np.floating)):
                    cells.append(format_float(float(cell)))
                elif isinstance(cell, (int, np.integer)):
                    cells.append(str(int(cell)))
                else:
                    cells.append(str(cell))
            fh.write(",".join(cells))
            fh.write("\n")
