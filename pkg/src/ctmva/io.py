"""Reading long-format series and writing full-precision tables."""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .basis import BasisSystem
from .errors import InputError, SchemaError
from .smoothing import FDataset, LongSeries

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("series", "t", "value")


@dataclass
class IngestReport:
    rows: int = 0
    empty_values: int = 0
    duplicates: int = 0
    dropped_series: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "rows": self.rows,
            "empty_values_skipped": self.empty_values,
            "duplicates_overwritten": self.duplicates,
            "dropped_series": list(self.dropped_series),
        }


def parse_long_csv(path, report: IngestReport | None = None) -> list[LongSeries]:
    """Read a ``series,t,value`` CSV into one :class:`LongSeries` per series id.

    Rows with an empty value are skipped; for duplicate ``(series, t)`` rows
    the last one wins.  Series appear in order of first occurrence.
    """
    report = IngestReport() if report is None else report
    data: dict[str, dict[float, float]] = defaultdict(dict)
    seen: list[str] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(
                f"{path}: missing column(s) {', '.join(missing)}; expected header series,t,value"
            )
        reader.fieldnames = header
        for lineno, row in enumerate(reader, start=2):
            report.rows += 1
            sid = (row["series"] or "").strip()
            if sid not in data:
                seen.append(sid)
                data[sid]
            value = (row["value"] or "").strip()
            if value == "":
                report.empty_values += 1
                continue
            try:
                t = float(row["t"])
                z = float(value)
            except (TypeError, ValueError):
                raise SchemaError(f"{path}:{lineno}: cannot parse t={row['t']!r} value={value!r}") from None
            if t in data[sid]:
                report.duplicates += 1
            data[sid][t] = z

    out = []
    for sid in seen:
        obs = data[sid]
        if not obs:
            report.dropped_series.append(sid)
            continue
        t = np.fromiter(obs.keys(), dtype=float)
        z = np.fromiter(obs.values(), dtype=float)
        out.append(LongSeries(sid, t, z))
    if report.empty_values or report.duplicates or report.dropped_series:
        log.warning(
            "%s: skipped %d empty value(s), overwrote %d duplicate(s), dropped %d series",
            path,
            report.empty_values,
            report.duplicates,
            len(report.dropped_series),
        )
    if not out:
        raise InputError(f"{path}: no usable series")
    return out


def fmt(x) -> str:
    """Shortest string that round-trips the float exactly."""
    if isinstance(x, (str, bool)) or x is None:
        return "" if x is None else str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def write_matrix(path, M: np.ndarray, row_names: Sequence[str], col_names: Sequence[str], corner: str = "") -> None:
    write_table(path, [corner, *col_names], ([r, *M[i]] for i, r in enumerate(row_names)))


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def save_fdataset(path, data: FDataset) -> None:
    """Store basis, curve names and coefficients; floats round-trip exactly."""
    write_json(
        path,
        {"basis": data.basis.to_dict(), "names": list(data.names), "coefficients": data.C.tolist()},
    )


def load_fdataset(path) -> FDataset:
    try:
        doc = json.loads(Path(path).read_text())
        basis = BasisSystem.from_dict(doc["basis"])
        return FDataset(basis, np.array(doc["coefficients"], dtype=float), tuple(doc["names"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"{path}: not a coefficient file ({exc})") from None
