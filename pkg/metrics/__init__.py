from metrics.quality import (
    dice, feature_hallucination_score, measurement_loss, psnr, ssim, threshold_segment,
)
from metrics.report import AGGREGATE_COLUMNS, COLUMNS, MetricsReport

__all__ = [
    "dice", "feature_hallucination_score", "measurement_loss", "psnr", "ssim", "threshold_segment",
    "AGGREGATE_COLUMNS", "COLUMNS", "MetricsReport",
]
