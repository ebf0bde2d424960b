"""Per-epoch metrics log with an exact CSV round trip."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Dict, Iterable, List

from ..estimator import LOG_COLUMNS
from ..exceptions import FormatError


def _fmt(value) -> str:
    if isinstance(value, int) and not isinstance(value, bool):
        return str(value)
    value = float(value)
    return "nan" if math.isnan(value) else repr(value)


class MetricsLog:
    """Rows with columns ``epoch,loss_total,loss_regional,loss_boundary,alpha,
    val_dsc,val_hd95,lr,batch_ms``; epochs strictly increase.

    ``batch_ms`` is ``nan`` unless timing was requested, which keeps logs of
    identical runs byte-identical.
    """

    columns = LOG_COLUMNS

    def __init__(self, rows: Iterable[Dict] = ()):
        self.rows: List[Dict] = []
        for r in rows:
            self.append(r)

    def append(self, row: Dict) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise FormatError(f"log row is missing columns {sorted(missing)}")
        if self.rows and row["epoch"] <= self.rows[-1]["epoch"]:
            raise FormatError("epoch column must be strictly increasing")
        self.rows.append({c: row[c] for c in self.columns})

    def __len__(self):
        return len(self.rows)

    def __eq__(self, other):
        return isinstance(other, MetricsLog) and self.to_csv_text() == other.to_csv_text()

    def column(self, name: str) -> List[float]:
        return [r[name] for r in self.rows]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_fmt(r[c]) for c in self.columns) + "\n")
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv_text())
        return path

    @classmethod
    def from_csv_text(cls, text: str) -> "MetricsLog":
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != cls.columns:
            raise FormatError(f"unexpected log header {reader.fieldnames}")
        rows = []
        for r in reader:
            try:
                rows.append({c: int(r[c]) if c == "epoch" else float(r[c]) for c in cls.columns})
            except (TypeError, ValueError) as exc:
                raise FormatError(f"unparsable log row {r}: {exc}") from None
        return cls(rows)

    @classmethod
    def read(cls, path) -> "MetricsLog":
        return cls.from_csv_text(Path(path).read_text())
