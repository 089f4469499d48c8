"""CSV and spreadsheet report writers."""

import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import numpy as np
import openpyxl
from openpyxl.styles import Alignment, Font, PatternFill
from openpyxl.utils import get_column_letter

from .fileio import atomic_write
from .models import RocCurve

ATTACK_COLUMNS = ["target_index", "canary_index", "score", "label", "fallback_flag"]
ROC_COLUMNS = ["threshold", "fpr", "tpr"]
COVSTUDY_COLUMNS = ["estimator", "pooling", "class", "shadow_count", "mean_error", "relative_error", "n_canaries"]
SWEEP_COLUMNS = ["variant", "shadow_count", "fpr", "tpr", "auc"]
COMPARE_COLUMNS = ["variant", "fpr", "tpr", "auc", "n_fallbacks"]
REDUCE_SWEEP_COLUMNS = ["variant", "reduction", "param", "fpr", "tpr", "auc"]

HEADER_FILL = PatternFill(start_color="366092", end_color="366092", fill_type="solid")
HEADER_FONT = Font(bold=True, color="FFFFFF")


def format_value(value: Any) -> str:
    """Integers as-is, floats in shortest round-trip form."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> None:
    with atomic_write(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_matrix_csv(path: Path, matrix: np.ndarray) -> None:
    with atomic_write(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in np.asarray(matrix):
            writer.writerow([format_value(v) for v in row])


def roc_rows(curve: RocCurve) -> List[Dict[str, Any]]:
    return [
        {"threshold": float(t), "fpr": float(f), "tpr": float(p)}
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr)
    ]


def metric_columns(fpr_targets: Sequence[float]) -> List[str]:
    """Column order of the eval report."""
    return ["scope", "n_pos", "n_neg", "auc"] + [f"tpr@{t!r}" for t in fpr_targets]


def _style_header(ws, headers: Sequence[str], row: int = 1, width: int = 18) -> None:
    for col_idx, header in enumerate(headers, start=1):
        cell = ws.cell(row=row, column=col_idx, value=header)
        cell.font = HEADER_FONT
        cell.fill = HEADER_FILL
        cell.alignment = Alignment(horizontal="center", vertical="center")
        ws.column_dimensions[get_column_letter(col_idx)].width = width


def _fpr_sheet_title(fpr: float) -> str:
    return f"TPR@{fpr * 100:g}% FPR"


class ReportWorkbook:
    """Spreadsheet version of the variant comparison table."""

    def __init__(self, title: str = "Membership inference audit"):
        self.title = title

    def build(self, rows: Sequence[Dict[str, Any]], fpr_targets: Sequence[float], context: Dict[str, Any]) -> openpyxl.Workbook:
        wb = openpyxl.Workbook()

        summary_ws = wb.active
        summary_ws.title = "Summary"
        summary_ws.cell(row=1, column=1, value=self.title).font = Font(bold=True, size=14)
        row_idx = 3
        for key, value in context.items():
            summary_ws.cell(row=row_idx, column=1, value=f"{key}:")
            summary_ws.cell(row=row_idx, column=2, value=str(value))
            row_idx += 1
        row_idx += 1
        _style_header(summary_ws, ["FPR target", "Best variant", "TPR"], row=row_idx, width=24)
        for fpr in fpr_targets:
            candidates = [r for r in rows if r["fpr"] == fpr]
            if not candidates:
                continue
            best = max(candidates, key=lambda r: (r["tpr"], r["auc"]))
            row_idx += 1
            summary_ws.cell(row=row_idx, column=1, value=fpr)
            summary_ws.cell(row=row_idx, column=2, value=best["variant"])
            summary_ws.cell(row=row_idx, column=3, value=best["tpr"])

        for fpr in fpr_targets:
            ws = wb.create_sheet(_fpr_sheet_title(fpr))
            self._write_rows_sheet(ws, [r for r in rows if r["fpr"] == fpr])
        return wb

    def write(self, rows: Sequence[Dict[str, Any]], fpr_targets: Sequence[float], context: Dict[str, Any], output_path: Path) -> None:
        wb = self.build(rows, fpr_targets, context)
        with atomic_write(Path(output_path), binary=True) as handle:
            wb.save(handle)

    def _write_rows_sheet(self, ws, rows: Sequence[Dict[str, Any]]) -> None:
        headers = ["Variant", "TPR", "AUC", "Fallbacks"]
        _style_header(ws, headers)
        for row_idx, row in enumerate(rows, start=2):
            ws.cell(row=row_idx, column=1, value=row["variant"])
            ws.cell(row=row_idx, column=2, value=row["tpr"])
            ws.cell(row=row_idx, column=3, value=row["auc"])
            ws.cell(row=row_idx, column=4, value=row.get("n_fallbacks", 0))
