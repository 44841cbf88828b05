"""Classification-degradation metrics and report tables.

For a set of prediction records sharing one (object, condition, split)
group this module computes:

* top1 / top5: fraction of records whose true label appears among the 1 / 5
  highest-probability classes,
* confidence1: mean probability assigned to the true class, averaged over
  ALL records in the group (a correct-only variant is also computed and
  emitted whenever the two differ by more than 0.001),
* confidence2: mean probability of the winning wrong prediction, averaged
  over misclassified records only and absent when there are none.

Aggregate rows are the unweighted mean of the per-object rows when every
object contributes the same record count, and record-weighted otherwise
(flagged in the output).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ParameterError
from .victim.base import topk

log = logging.getLogger(__name__)

REPORT_FORMATS = ("json", "csv", "markdown")

_SPLIT_ORDER = {"all": 0, "train": 1, "test": 2}
_DIVERGENCE_NOTE = 0.001  # emit the correct-only confidence when it strays this far


@dataclass
class PredictionRecord:
    """One victim prediction with its top-k summary."""

    image_id: str
    condition: str
    split: str
    true_label_id: int
    probs: list[float]
    top1_id: int
    top5_ids: list[int]

    @classmethod
    def from_probs(cls, image_id: str, condition: str, split: str,
                   true_label_id: int, probs) -> "PredictionRecord":
        probs = [float(p) for p in np.asarray(probs).reshape(-1)]
        k = min(5, len(probs))
        top5 = [i for i, _ in topk(np.asarray(probs), k)]
        return cls(image_id=image_id, condition=condition, split=split,
                   true_label_id=int(true_label_id), probs=probs,
                   top1_id=top5[0], top5_ids=top5)


@dataclass
class ReportRow:
    """Metrics for one (object, condition, split) group."""

    object_label: str
    condition: str
    split: str
    top1: float
    top5: float
    confidence1: float
    confidence2: float | None
    n: int
    n_wrong: int
    confidence1_correct_only: float | None = None
    weighted: bool = False

    def __post_init__(self):
        if self.top1 > self.top5 + 1e-12:
            raise ParameterError(
                f"top1 {self.top1} exceeds top5 {self.top5} for "
                f"{self.object_label}/{self.condition}/{self.split}"
            )


@dataclass
class EvaluationReport:
    """Per-object rows plus aggregate rows for one or two conditions."""

    rows: list[ReportRow]
    aggregates: list[ReportRow]
    conditions: list[str]
    metadata: dict = field(default_factory=dict)


def evaluate_set(records: list[PredictionRecord],
                 object_label: str | None = None) -> ReportRow:
    """Metrics over one homogeneous group of prediction records.

    The group must be non-empty and share (true label, condition, split).
    Means use exact summation, so the result is invariant under record
    permutation.
    """
    if not records:
        raise ParameterError("evaluate_set needs at least one record")
    first = records[0]
    for record in records:
        if (record.true_label_id, record.condition, record.split) != (
                first.true_label_id, first.condition, first.split):
            raise ParameterError(
                "evaluate_set needs a homogeneous (object, condition, split) group"
            )

    n = len(records)
    correct = [r for r in records if r.top1_id == r.true_label_id]
    wrong = [r for r in records if r.top1_id != r.true_label_id]
    top1 = len(correct) / n
    top5 = sum(1 for r in records if r.true_label_id in r.top5_ids) / n
    confidence1 = math.fsum(r.probs[r.true_label_id] for r in records) / n
    conf1_correct = (
        math.fsum(r.probs[r.true_label_id] for r in correct) / len(correct)
        if correct else None
    )
    confidence2 = (
        math.fsum(r.probs[r.top1_id] for r in wrong) / len(wrong)
        if wrong else None
    )
    label = object_label if object_label is not None else str(first.true_label_id)
    note_correct_only = (
        conf1_correct is not None
        and abs(conf1_correct - confidence1) > _DIVERGENCE_NOTE
    )
    return ReportRow(
        object_label=label,
        condition=first.condition,
        split=first.split,
        top1=top1,
        top5=top5,
        confidence1=confidence1,
        confidence2=confidence2,
        n=n,
        n_wrong=len(wrong),
        confidence1_correct_only=conf1_correct if note_correct_only else None,
    )


def _mean_or_none(pairs: list[tuple[float, float]]) -> float | None:
    """Weighted mean of (value, weight) pairs; None when nothing weighs in."""
    total = math.fsum(w for _, w in pairs)
    if total == 0:
        return None
    return math.fsum(v * w for v, w in pairs) / total


def aggregate_rows(rows: list[ReportRow], object_label: str = "Average") -> ReportRow:
    """Aggregate per-object rows sharing one (condition, split).

    Equal record counts give the unweighted mean of row values; unequal
    counts switch to the record-weighted mean and set the ``weighted`` flag.
    """
    if not rows:
        raise ParameterError("aggregate_rows needs at least one row")
    conditions = {(r.condition, r.split) for r in rows}
    if len(conditions) != 1:
        raise ParameterError(
            f"aggregate_rows needs rows from one (condition, split), got {sorted(conditions)}"
        )
    counts = {r.n for r in rows}
    weighted = len(counts) > 1

    def weight_of(row: ReportRow) -> float:
        return float(row.n) if weighted else 1.0

    def wrong_weight(row: ReportRow) -> float:
        return float(row.n_wrong) if weighted else (1.0 if row.confidence2 is not None else 0.0)

    top1 = _mean_or_none([(r.top1, weight_of(r)) for r in rows])
    top5 = _mean_or_none([(r.top5, weight_of(r)) for r in rows])
    confidence1 = _mean_or_none([(r.confidence1, weight_of(r)) for r in rows])
    confidence2 = _mean_or_none(
        [(r.confidence2, wrong_weight(r)) for r in rows if r.confidence2 is not None]
    )
    return ReportRow(
        object_label=object_label,
        condition=rows[0].condition,
        split=rows[0].split,
        top1=top1,
        top5=top5,
        confidence1=confidence1,
        confidence2=confidence2,
        n=sum(r.n for r in rows),
        n_wrong=sum(r.n_wrong for r in rows),
        weighted=weighted,
    )


def build_report(rows: list[ReportRow], conditions: list[str] | None = None,
                 metadata: dict | None = None) -> EvaluationReport:
    """Assemble rows into a report with one aggregate per (condition, split)."""
    if conditions is None:
        seen = []
        for row in rows:
            if row.condition not in seen:
                seen.append(row.condition)
        conditions = seen
    aggregates = []
    for condition in conditions:
        for split in sorted({r.split for r in rows if r.condition == condition},
                            key=lambda s: _SPLIT_ORDER.get(s, 99)):
            group = [r for r in rows if r.condition == condition and r.split == split]
            if group:
                aggregates.append(aggregate_rows(group))
    meta = {"confidence1_semantics": "mean true-class probability over all records"}
    meta.update(metadata or {})
    return EvaluationReport(rows=list(rows), aggregates=aggregates,
                            conditions=list(conditions), metadata=meta)


@dataclass
class ComparisonRow:
    object_label: str
    split: str
    delta_top1: float
    delta_top5: float
    delta_confidence1: float
    delta_confidence2: float | None


@dataclass
class ComparisonTable:
    condition_a: str
    condition_b: str
    rows: list[ComparisonRow]
    aggregates: list[ComparisonRow]


def _keyed(rows: list[ReportRow]) -> dict[tuple[str, str], ReportRow]:
    return {(r.object_label, r.split): r for r in rows}


def compare_conditions(report_a: EvaluationReport,
                       report_b: EvaluationReport) -> ComparisonTable:
    """Per-row metric deltas (b minus a) between two matching reports."""

    def diff(rows_a, rows_b):
        a, b = _keyed(rows_a), _keyed(rows_b)
        if set(a) != set(b):
            only_a = sorted(set(a) - set(b))
            only_b = sorted(set(b) - set(a))
            raise AlignmentError(
                f"report keys differ: only in first {only_a}, only in second {only_b}"
            )
        out = []
        for key in sorted(a, key=lambda k: (_SPLIT_ORDER.get(k[1], 99), k[0])):
            ra, rb = a[key], b[key]
            d_conf2 = (rb.confidence2 - ra.confidence2
                       if ra.confidence2 is not None and rb.confidence2 is not None
                       else None)
            out.append(ComparisonRow(
                object_label=key[0],
                split=key[1],
                delta_top1=rb.top1 - ra.top1,
                delta_top5=rb.top5 - ra.top5,
                delta_confidence1=rb.confidence1 - ra.confidence1,
                delta_confidence2=d_conf2,
            ))
        return out

    return ComparisonTable(
        condition_a=report_a.conditions[0] if report_a.conditions else "",
        condition_b=report_b.conditions[0] if report_b.conditions else "",
        rows=diff(report_a.rows, report_b.rows),
        aggregates=diff(report_a.aggregates, report_b.aggregates),
    )


def _fmt(value: float | None, none_as: str = "") -> str:
    return none_as if value is None else f"{value:.3f}"


def _round(value: float | None) -> float | None:
    return None if value is None else round(value, 3)


def _display_label(row: ReportRow) -> str:
    if row.split in ("", "all"):
        return row.object_label
    return f"{row.object_label} ({row.split.title()})"


def _sorted_display(rows: list[ReportRow]) -> list[ReportRow]:
    return sorted(rows, key=lambda r: (r.object_label,
                                       _SPLIT_ORDER.get(r.split, 99)))


def _paired_cells(report: EvaluationReport, row_key: tuple[str, str]) -> list[str]:
    """Cells for one display row: baseline triplet then attacked triplet."""
    cells = []
    for index, condition in enumerate(report.conditions[:2]):
        match = [r for r in report.rows + report.aggregates
                 if (r.object_label, r.split) == row_key and r.condition == condition]
        if not match:
            cells.extend(["", "", ""])
            continue
        row = match[0]
        confidence = row.confidence1 if index == 0 else row.confidence2
        cells.extend([_fmt(confidence), _fmt(row.top1), _fmt(row.top5)])
    return cells


def _table_header(report: EvaluationReport) -> list[str]:
    header = ["object"]
    names = report.conditions[:2]
    first = names[0] if names else "condition"
    header += [f"confidence1 ({first})", f"top1 ({first})", f"top5 ({first})"]
    if len(names) > 1:
        second = names[1]
        header += [f"confidence2 ({second})", f"top1 ({second})", f"top5 ({second})"]
    return header


def _display_keys(report: EvaluationReport) -> tuple[list, list]:
    row_keys, agg_keys = [], []
    for row in _sorted_display(report.rows):
        key = (row.object_label, row.split)
        if key not in row_keys:
            row_keys.append(key)
    for row in report.aggregates:
        key = (row.object_label, row.split)
        if key not in agg_keys:
            agg_keys.append(key)
    return row_keys, agg_keys


def emit_report(report: EvaluationReport, path: Path | str, fmt: str) -> Path:
    """Write a report table; columns follow the paired condition layout.

    JSON keeps the full row set; csv/markdown pivot to one display row per
    (object, split) with a baseline triplet and an attacked triplet. Values
    are fixed to three decimals. An empty report produces a header-only
    file with a warning.
    """
    if fmt not in REPORT_FORMATS:
        raise ParameterError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not report.rows:
        log.warning("emitting empty report to %s", path)

    if fmt == "json":
        def row_payload(row: ReportRow) -> dict:
            payload = {
                "object": row.object_label,
                "condition": row.condition,
                "split": row.split,
                "confidence1": _round(row.confidence1),
                "confidence2": _round(row.confidence2),
                "top1": _round(row.top1),
                "top5": _round(row.top5),
                "n": row.n,
                "n_wrong": row.n_wrong,
            }
            if row.confidence1_correct_only is not None:
                payload["confidence1_correct_only"] = _round(row.confidence1_correct_only)
            if row.weighted:
                payload["weighted"] = True
            return payload

        payload = {
            "metadata": report.metadata,
            "conditions": report.conditions,
            "rows": [row_payload(r) for r in _sorted_display(report.rows)],
            "aggregates": [row_payload(r) for r in report.aggregates],
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return path

    row_keys, agg_keys = _display_keys(report)
    header = _table_header(report)
    lines: list[list[str]] = []
    for key in row_keys + agg_keys:
        label = key[0] if key[1] in ("", "all") else f"{key[0]} ({key[1].title()})"
        lines.append([label] + _paired_cells(report, key))

    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(lines)
        path.write_text(buffer.getvalue())
    else:
        md = ["| " + " | ".join(header) + " |",
              "|" + "|".join(["---"] * len(header)) + "|"]
        md += ["| " + " | ".join(cell or "-" for cell in line) + " |" for line in lines]
        path.write_text("\n".join(md) + "\n")
    return path


def emit_comparison(table: ComparisonTable, path: Path | str, fmt: str = "json") -> Path:
    """Write a condition-comparison table (deltas are second minus first)."""
    if fmt not in REPORT_FORMATS:
        raise ParameterError(f"unknown report format {fmt!r}; choose from {REPORT_FORMATS}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def payload(row: ComparisonRow) -> dict:
        return {
            "object": row.object_label,
            "split": row.split,
            "delta_top1": _round(row.delta_top1),
            "delta_top5": _round(row.delta_top5),
            "delta_confidence1": _round(row.delta_confidence1),
            "delta_confidence2": _round(row.delta_confidence2),
        }

    if fmt == "json":
        doc = {
            "baseline": table.condition_a,
            "attacked": table.condition_b,
            "rows": [payload(r) for r in table.rows],
            "aggregates": [payload(r) for r in table.aggregates],
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path

    header = ["object", "split", "delta_top1", "delta_top5",
              "delta_confidence1", "delta_confidence2"]
    lines = [[r.object_label, r.split, _fmt(r.delta_top1), _fmt(r.delta_top5),
              _fmt(r.delta_confidence1), _fmt(r.delta_confidence2)]
             for r in table.rows + table.aggregates]
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(lines)
        path.write_text(buffer.getvalue())
    else:
        md = ["| " + " | ".join(header) + " |",
              "|" + "|".join(["---"] * len(header)) + "|"]
        md += ["| " + " | ".join(cell or "-" for cell in line) + " |" for line in lines]
        path.write_text("\n".join(md) + "\n")
    return path


def write_predictions(records: list[PredictionRecord], path: Path | str) -> None:
    """Persist prediction records as JSON lines (full precision)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for record in records:
            fh.write(json.dumps({
                "image_id": record.image_id,
                "condition": record.condition,
                "split": record.split,
                "true_label_id": record.true_label_id,
                "probs": record.probs,
                "top1_id": record.top1_id,
                "top5_ids": record.top5_ids,
            }, sort_keys=True) + "\n")


def read_predictions(path: Path | str) -> list[PredictionRecord]:
    records = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            data = json.loads(line)
            records.append(PredictionRecord(**data))
    return records
