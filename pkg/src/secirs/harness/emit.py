"""Result rows and their CSV / JSON serialization."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

HEADER = ("experiment", "sweep", "value", "metric", "mean", "stderr", "trials", "seed")


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    sweep: str
    value: float
    metric: str
    mean: float
    stderr: float | None
    trials: int
    seed: int

    def __post_init__(self):
        if self.trials > 1 and self.stderr is None:
            raise ValueError("stderr is required when trials > 1")


def fmt(x) -> str:
    """Numbers with 12 significant digits; None as an empty field."""
    if x is None:
        return ""
    if isinstance(x, (bool, int)) and not isinstance(x, float):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _cell(row: ResultRow, key: str):
    v = getattr(row, key)
    return v if isinstance(v, str) else fmt(v)


def to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in rows:
        w.writerow([_cell(r, k) for k in HEADER])
    return buf.getvalue()


def _json_num(x):
    if x is None:
        return None
    if isinstance(x, int) and not isinstance(x, bool):
        return x
    x = float(x)
    if not math.isfinite(x):
        return fmt(x)  # JSON has no inf/nan literals
    return float(f"{x:.12g}")


def to_json(rows) -> str:
    out = []
    for r in rows:
        out.append({k: (getattr(r, k) if isinstance(getattr(r, k), str) else
                        _json_num(getattr(r, k))) for k in HEADER})
    return json.dumps(out, indent=1) + "\n"


def emit(rows, fmt_name: str = "csv", path=None) -> str:
    """Serialize rows; write to ``path`` when given. Returns the text."""
    if fmt_name == "csv":
        text = to_csv(rows)
    elif fmt_name == "json":
        text = to_json(rows)
    else:
        raise ValueError(f"unknown format {fmt_name!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def raw_to_csv(records) -> str:
    """Per-trial records: dicts sharing the same keys."""
    records = list(records)
    buf = io.StringIO()
    if not records:
        return ""
    keys = list(records[0])
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(keys)
    for rec in records:
        w.writerow([rec[k] if isinstance(rec[k], str) else fmt(rec[k]) for k in keys])
    return buf.getvalue()
