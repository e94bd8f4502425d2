from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, List, Mapping, Sequence

from .channel import clamp_db

if TYPE_CHECKING:
    from openpyxl import Workbook

RESULT_FIELDS = ["method", "sweep_var", "value", "nmse_db", "cossim", "se", "n_samples", "encoder_calls", "velocity_calls"]
SAMPLE_FIELDS = ["method", "sweep_var", "value", "user_id", "frame_index", "nmse_linear", "nmse_db",
                 "cossim", "se", "encoder_calls", "velocity_calls", "flags"]
TRACE_FIELDS = ["step", "t", "nmse_db", "cossim", "top5_energy"]
K_SWEEP_FIELDS = ["k", "nmse_db", "cossim", "n_samples", "velocity_calls"]


def _cell(key: str, v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, float):
        if key.endswith("_db") and not math.isnan(v):
            v = clamp_db(v)
        return repr(v) if math.isfinite(v) else str(v)
    return v


def _write_csv(rows: Sequence[Mapping[str, Any]], path: str | Path, fields: List[str]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_cell(k, r.get(k)) for k in fields])


def write_history_csv(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    from .training import HISTORY_FIELDS
    _write_csv(rows, path, list(HISTORY_FIELDS))


def write_results_csv(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    _write_csv(rows, path, RESULT_FIELDS)


def write_samples_csv(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    _write_csv(rows, path, SAMPLE_FIELDS)


def write_trace_csv(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    _write_csv(rows, path, TRACE_FIELDS)


def write_k_sweep_csv(rows: Sequence[Mapping[str, Any]], path: str | Path) -> None:
    out = [{"k": int(r["value"]), **r} for r in rows if r.get("method") == "flow"]
    _write_csv(out, path, K_SWEEP_FIELDS)


def _json_safe(obj: Any) -> Any:
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return -100.0 if obj < 0 else None
        return obj
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(payload: Mapping[str, Any], path: str | Path) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(_json_safe(dict(payload)), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")


def write_report_json(report, path: str | Path) -> None:
    write_json(report.to_dict(), path)


def write_manifest(path: str | Path, payload: Dict[str, Any]) -> None:
    """`path` may be the output directory; the file is always manifest.json."""
    p = Path(path)
    if p.suffix != ".json":
        p = p / "manifest.json"
    write_json(payload, p)


def _autosize(ws, max_width: int = 70) -> None:
    from openpyxl.utils import get_column_letter

    for col_idx in range(1, ws.max_column + 1):
        max_len = 0
        for row_idx in range(1, ws.max_row + 1):
            v = ws.cell(row=row_idx, column=col_idx).value
            if v is None:
                continue
            max_len = max(max_len, len(str(v)))
        ws.column_dimensions[get_column_letter(col_idx)].width = max(10, min(max_len + 2, max_width))


def _style_header(ws, header_row: int = 1) -> None:
    from openpyxl.styles import Alignment, Font, PatternFill

    header_font = Font(bold=True)
    header_fill = PatternFill(start_color="FFF2F2F2", end_color="FFF2F2F2", fill_type="solid")
    header_align = Alignment(vertical="top", wrap_text=True)

    for c in range(1, ws.max_column + 1):
        cell = ws.cell(row=header_row, column=c)
        cell.font = header_font
        cell.fill = header_fill
        cell.alignment = header_align

    ws.freeze_panes = "A2"


def _xlsx_value(key: str, v: Any) -> Any:
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if key.endswith("_db"):
            return clamp_db(v)
    return v


def _sheet(wb: Workbook, title: str, rows: Sequence[Mapping[str, Any]], fields: List[str], first: bool = False):
    ws = wb.active if first else wb.create_sheet(title)
    ws.title = title
    ws.append(fields)
    for r in rows:
        ws.append([_xlsx_value(k, r.get(k)) for k in fields])
    _style_header(ws)
    _autosize(ws)
    return ws


def write_report_xlsx(report, path: str | Path) -> None:
    # imported here so the CSV and JSON writers load without openpyxl
    from openpyxl import Workbook
    from openpyxl.styles import Alignment

    wb = Workbook()
    _sheet(wb, "results", report.rows, RESULT_FIELDS, first=True)
    _sheet(wb, "samples", report.samples, SAMPLE_FIELDS)

    ws = wb.create_sheet("issues")
    ws.append(["severity", "field", "subject", "message", "code"])
    for it in report.issues:
        ws.append([it.severity.value, it.field, it.subject or "", it.message, it.code or ""])
    for e in report.errors:
        ws.append(["error", "eval.methods", e["method"], e["error"], "method_skipped"])
    _style_header(ws)
    wrap = Alignment(vertical="top", wrap_text=True)
    for row in ws.iter_rows(min_row=2, max_row=ws.max_row, min_col=1, max_col=ws.max_column):
        for cell in row:
            cell.alignment = wrap
    _autosize(ws)

    Path(path).parent.mkdir(parents=True, exist_ok=True)
    wb.save(str(path))
