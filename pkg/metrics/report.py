from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


COLUMNS = ["id", "psnr", "ssim", "meas_loss", "dice", "feat_score"]
METRIC_COLUMNS = COLUMNS[1:]
AGGREGATE_COLUMNS = ["metric", "mean", "std", "count"]


def _number(value) -> float | None:
    if value is None or value == "":
        return None
    return float(value)


@dataclass
class MetricsReport:
    """Per-image rows are the source of truth; aggregates are always recomputed from them."""
    rows: list[dict] = field(default_factory=list)

    def add(self, image_id: str, psnr: float, ssim: float, meas_loss: float,
            dice: float | None = None, feat_score: float | None = None) -> None:
        self.rows.append({"id": image_id, "psnr": psnr, "ssim": ssim, "meas_loss": meas_loss,
                          "dice": "" if dice is None else dice,
                          "feat_score": "" if feat_score is None else feat_score})

    @classmethod
    def from_rows(cls, rows: list[dict]) -> MetricsReport:
        """Rebuild from CSV rows (strings); empty cells stay empty."""
        report = cls()
        for row in rows:
            report.rows.append({"id": row["id"]} | {
                name: ("" if _number(row.get(name)) is None else _number(row.get(name))) for name in METRIC_COLUMNS})
        return report

    def column(self, name: str) -> np.ndarray:
        values = [_number(row[name]) for row in self.rows]
        return np.array([v for v in values if v is not None])

    def aggregate(self) -> list[dict]:
        """Mean and sample std per metric over the rows that carry it."""
        result = []
        for name in METRIC_COLUMNS:
            values = self.column(name)
            if values.size == 0:
                continue
            std = float(values.std(ddof=1)) if values.size > 1 else 0.0
            result.append({"metric": name, "mean": float(values.mean()), "std": std, "count": int(values.size)})
        return result

    def mean(self, name: str) -> float:
        values = self.column(name)
        return float(values.mean()) if values.size else float("nan")
