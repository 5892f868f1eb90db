"""Bit-stable JSON/CSV reports.

Rationals are written as ``"num/den"`` strings, floats as the shortest
round-trip decimal, non-finite floats as ``"inf"``, ``"-inf"`` or ``"nan"``.
Every report carries the full run configuration.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, is_dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__

FORMATS = ("json", "csv")


class ReportError(OSError):
    pass


def to_plain(obj):
    """Recursively convert results to JSON-ready values with the number conventions above."""
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [to_plain(v) for v in obj]
    if hasattr(obj, "as_dict"):
        return to_plain(obj.as_dict())
    if is_dataclass(obj):
        return to_plain(asdict(obj))
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, dict)):
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    return str(v)


def render_report(results, fmt: str = "json", config: dict | None = None) -> str:
    """Text of a report; identical inputs give identical bytes."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    rows = [to_plain(r) for r in results]
    if not rows:
        raise ValueError("a report needs at least one result")
    config = to_plain(dict(config or {}))
    if fmt == "json":
        doc = {"version": __version__, "config": config, "results": rows}
        return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    buf = io.StringIO()
    buf.write(f"# version={__version__}\n")
    for key in sorted(config):
        buf.write(f"# {key}={_cell(config[key])}\n")
    columns: list[str] = []
    for r in rows:
        for key in r:
            if key not in columns:
                columns.append(key)
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def emit_report(results, fmt: str = "json", out: str | Path | None = None, config: dict | None = None) -> str:
    """Render and, when ``out`` is given, write the report; returns the text."""
    text = render_report(results, fmt, config)
    if out is not None:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise ReportError(f"cannot write report to {out}: {exc}") from exc
    return text


def report_schema() -> dict:
    """The JSON schema shipped with the package."""
    return json.loads(resources.files("lacewalk").joinpath("report.schema.json").read_text())
