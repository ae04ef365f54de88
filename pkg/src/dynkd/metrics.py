"""Per-epoch run metrics and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

METRICS_COLUMNS = (
    "epoch", "lr", "loss_total", "loss_kl", "loss_ce",
    "alpha", "alpha_kl", "alpha_ce", "t_learn", "train_acc", "test_acc",
)


def fmt(x) -> str:
    """CSV cell: empty for None, integers as-is, floats with 17 significant digits."""
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".17g")


@dataclass
class MetricsRow:
    epoch: int
    lr: float
    loss_total: float
    loss_kl: float | None = None
    loss_ce: float | None = None
    alpha: float | None = None
    alpha_kl: float | None = None
    alpha_ce: float | None = None
    t_learn: float | None = None
    train_acc: float | None = None
    test_acc: float | None = None


@dataclass
class RunMetrics:
    rows: list[MetricsRow] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in self.rows:
            w.writerow([fmt(v) for v in astuple(r)])
        return buf.getvalue()


def write_metrics(path, metrics: RunMetrics) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(metrics.to_csv())


def read_metrics(path) -> RunMetrics:
    types = {f.name: f.type for f in fields(MetricsRow)}
    rows = []
    with open(Path(path), newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != METRICS_COLUMNS:
            raise ValueError(f"{path}: unexpected metrics header {reader.fieldnames}")
        for rec in reader:
            vals = {}
            for k, v in rec.items():
                if v == "":
                    vals[k] = None
                else:
                    vals[k] = int(v) if types[k] == "int" else float(v)
            rows.append(MetricsRow(**vals))
    return RunMetrics(rows)
