from __future__ import annotations

import math
from typing import Any, List, Literal, Mapping, Sequence

from .channel import clamp_db

SortMode = Literal["none", "method_value", "value_method", "nmse"]

_COLUMNS = [
    ("method", "method", "{}"),
    ("sweep_var", "sweep", "{}"),
    ("value", "value", "{:g}"),
    ("nmse_db", "NMSE[dB]", "{:.2f}"),
    ("cossim", "cossim", "{:.3f}"),
    ("se", "SE[b/s/Hz]", "{:.3f}"),
    ("n_samples", "n", "{}"),
    ("velocity_calls", "v-calls", "{}"),
]


def sort_rows(rows: Sequence[Mapping[str, Any]], mode: SortMode = "method_value") -> List[Mapping[str, Any]]:
    out = list(rows)
    if mode == "none":
        return out
    if mode == "method_value":
        out.sort(key=lambda r: (str(r["method"]), float(r["value"])))
    elif mode == "value_method":
        out.sort(key=lambda r: (float(r["value"]), str(r["method"])))
    elif mode == "nmse":
        out.sort(key=lambda r: (_nan_last(r.get("nmse_db")), str(r["method"])))
    else:
        raise ValueError(f"Unknown sort mode: {mode}")
    return out


def _nan_last(v: Any) -> float:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return math.inf
    return float(v)


def _fmt(key: str, fmt: str, v: Any) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    if key == "nmse_db":
        v = clamp_db(float(v))
    return fmt.format(v)


def format_table(rows: Sequence[Mapping[str, Any]], sort_mode: SortMode = "method_value") -> str:
    """Plain-text, column-aligned summary of report rows."""
    header = [title for _, title, _ in _COLUMNS]
    body = [[_fmt(k, f, r.get(k)) for k, _, f in _COLUMNS] for r in sort_rows(rows, sort_mode)]
    widths = [max(len(c) for c in col) for col in zip(header, *body)] if body else [len(h) for h in header]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.rjust(w) if i > 1 else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths))).rstrip())
    return "\n".join(lines)
