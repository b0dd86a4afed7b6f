"""Per-round experiment metrics: CSV plus a line-delimited JSON variant.

Floats are written with ``repr`` so emission and re-parsing round trip
exactly; absent values are empty CSV cells / JSON nulls.  Column order is
stable.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

__all__ = ["MetricsRecord", "emit_metrics", "load_metrics"]


@dataclass
class MetricsRecord:
    scenario: str
    phase: str                       # train | unlearn | retrain
    round: int
    accuracy: float | None = None
    loss: float | None = None
    target_accuracy: float | None = None
    target_loss: float | None = None
    mia_precision: float | None = None
    mia_recall: float | None = None
    deviation_l2: float | None = None
    verification: str = ""
    time_train_ms: float = 0.0
    time_agg_ms: float = 0.0
    time_commit_ms: float = 0.0
    time_seal_ms: float = 0.0
    time_lv_ms: float = 0.0
    time_lr_ms: float = 0.0

    def __post_init__(self) -> None:
        for name in ("accuracy", "mia_precision", "mia_recall"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in (
            "time_train_ms",
            "time_agg_ms",
            "time_commit_ms",
            "time_seal_ms",
            "time_lv_ms",
            "time_lr_ms",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def total_time_ms(self) -> float:
        return (
            self.time_train_ms
            + self.time_agg_ms
            + self.time_commit_ms
            + self.time_seal_ms
            + self.time_lv_ms
            + self.time_lr_ms
        )


COLUMNS = tuple(f.name for f in fields(MetricsRecord))
_FLOAT_COLUMNS = {
    f.name
    for f in fields(MetricsRecord)
    if f.name not in ("scenario", "phase", "round", "verification")
}


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_metrics(records, csv_path, jsonl_path=None) -> Path:
    """Write records as CSV (header always present) and JSONL beside it."""
    csv_path = Path(csv_path)
    if jsonl_path is None:
        jsonl_path = csv_path.with_suffix(".jsonl")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for record in records:
            row = asdict(record)
            writer.writerow([_cell(row[c]) for c in COLUMNS])
    with open(jsonl_path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(asdict(record), sort_keys=True) + "\n")
    return csv_path


def load_metrics(path) -> list[MetricsRecord]:
    """Read records back from a metrics CSV or its JSONL sibling."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.read(1)
    if first == "{":
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                row = json.loads(line)
                unknown = set(row) - set(COLUMNS)
                if unknown:
                    raise ValueError(f"unexpected metrics fields: {sorted(unknown)}")
                records.append(MetricsRecord(**row))
        return records
    return _load_metrics_csv(path)


def _load_metrics_csv(csv_path) -> list[MetricsRecord]:
    records = []
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
            raise ValueError("unexpected metrics header")
        for row in reader:
            kwargs = {}
            for column in COLUMNS:
                raw = row[column]
                if column == "round":
                    kwargs[column] = int(raw)
                elif column in ("scenario", "phase", "verification"):
                    kwargs[column] = raw
                elif raw == "":
                    kwargs[column] = None
                else:
                    kwargs[column] = float(raw)
            for name in (
                "time_train_ms",
                "time_agg_ms",
                "time_commit_ms",
                "time_seal_ms",
                "time_lv_ms",
                "time_lr_ms",
            ):
                if kwargs[name] is None:
                    kwargs[name] = 0.0
            records.append(MetricsRecord(**kwargs))
    return records
