"""Per-epoch metric rows and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

COLUMNS = ("epoch", "split", "loss", "acc", "gap", "lr", "epsilon")


@dataclass
class MetricLog:
    rows: list[dict] = field(default_factory=list)

    def add(self, **row) -> None:
        missing = set(COLUMNS) - set(row)
        if missing:
            raise ValueError(f"metric row lacks {sorted(missing)}")
        self.rows.append({c: row[c] for c in COLUMNS})

    def split(self, name: str) -> list[dict]:
        return [r for r in self.rows if r["split"] == name]

    def gaps(self) -> list[float]:
        return [r["gap"] for r in self.split("val")]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r[c]) for c in COLUMNS])
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "MetricLog":
        reader = csv.DictReader(io.StringIO(text))
        log = cls()
        for r in reader:
            log.add(epoch=int(r["epoch"]), split=r["split"],
                    **{c: float(r[c]) for c in ("loss", "acc", "gap", "lr", "epsilon")})
        return log


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
