from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

ROW_FIELDS = ("model_name", "arch_spec", "receptive_field", "depth", "parameter_count",
              "mean_scd", "n_images", "n_excluded")


@dataclass(frozen=True)
class ReportRow:
    model_name: str
    arch_spec: str
    receptive_field: int
    depth: int
    parameter_count: int
    mean_scd: float
    n_images: int
    n_excluded: int = 0


@dataclass
class SweepReport:
    rows: list[ReportRow]
    per_rf: dict[int, float]
    provenance: dict = field(default_factory=dict)
    complete: bool = True

    def sorted_rows(self) -> list[ReportRow]:
        return sorted(self.rows, key=lambda r: (-r.receptive_field, r.depth, r.model_name))

    def to_dict(self) -> dict:
        return {
            "complete": self.complete,
            "provenance": self.provenance,
            "rows": [asdict(r) for r in self.sorted_rows()],
            "per_rf": [{"receptive_field": rf, "mean_scd": v} for rf, v in
                       sorted(self.per_rf.items(), reverse=True)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepReport":
        return cls(rows=[ReportRow(**r) for r in d["rows"]],
                   per_rf={int(e["receptive_field"]): float(e["mean_scd"]) for e in d["per_rf"]},
                   provenance=d.get("provenance", {}), complete=d.get("complete", True))

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.sorted_rows():
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple_row(r)])
        return buf.getvalue()

    def per_rf_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("receptive_field", "mean_scd"))
        for rf, v in sorted(self.per_rf.items(), reverse=True):
            w.writerow((rf, repr(v)))
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        (out / "report.csv").write_text(self.rows_csv())
        (out / "per_rf.csv").write_text(self.per_rf_csv())
        return out / "report.json"


def astuple_row(row: ReportRow) -> tuple:
    return tuple(getattr(row, f) for f in ROW_FIELDS)


def load_report(path: str | Path) -> SweepReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    return SweepReport.from_dict(json.loads(path.read_text()))
