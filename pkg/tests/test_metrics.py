from types import SimpleNamespace

import numpy as np
import pytest

from autodiff import Tensor
from errors import MetricError, ShapeMismatchError
from metrics import (MetricsReport, dice, feature_hallucination_score, measurement_loss, psnr, ssim,
                     threshold_segment)
from metrics.quality import PSNR_CAP
from operators import Downsample, apply
from pamri import EncoderPair
from phantoms import Image, sample_dataset


def test_psnr_is_capped_for_identical_images(rng):
    x = rng.uniform(size=(16, 16))
    assert psnr(x, x) == PSNR_CAP


def test_psnr_value(rng):
    x = np.zeros((16, 16))
    assert psnr(x + 0.1, x) == pytest.approx(20.0)


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        psnr(np.zeros((8, 8)), np.zeros((8, 9)))


def test_ssim_of_identical_images_is_one(rng):
    x = rng.uniform(size=(16, 16))
    assert ssim(Image(x, "target"), Image(x, "target")) == pytest.approx(1.0)


def test_ssim_drops_with_noise(rng):
    x = rng.uniform(size=(24, 24))
    noisy = x + 0.3 * rng.standard_normal(x.shape)
    assert ssim(noisy, x) < 0.9


def test_ssim_needs_a_full_window():
    with pytest.raises(ShapeMismatchError):
        ssim(np.zeros((7, 16)), np.zeros((7, 16)))


@pytest.mark.parametrize("a, b, expected", [
    ([[1, 1], [0, 0]], [[1, 1], [0, 0]], 1.0),
    ([[1, 1], [0, 0]], [[0, 0], [1, 1]], 0.0),
    ([[1, 1], [0, 0]], [[1, 0], [0, 0]], 2 / 3),
    ([[0, 0], [0, 0]], [[0, 0], [0, 0]], 1.0),
])
def test_dice(a, b, expected):
    assert dice(np.array(a, dtype=float), np.array(b, dtype=float)) == pytest.approx(expected)


def test_dice_needs_binary_masks():
    with pytest.raises(MetricError):
        dice(np.full((2, 2), 0.5), np.zeros((2, 2)))


def test_threshold_segment_opening_removes_specks():
    x = np.zeros((12, 12))
    x[2:7, 2:7] = 0.9
    x[10, 10] = 0.9
    mask = threshold_segment(x, 0.74, 1.0)
    assert mask[4, 4] == 1.0 and mask[10, 10] == 0.0
    assert mask.sum() == 25
    assert threshold_segment(x, 0.74, 1.0, opening=False)[10, 10] == 1.0


def test_threshold_segment_rejects_empty_band():
    with pytest.raises(MetricError):
        threshold_segment(np.zeros((4, 4)), 0.5, 0.5)


def test_ssim_of_an_inverted_checkerboard_is_negative():
    x = (np.indices((16, 16)).sum(axis=0) % 2).astype(float)
    assert ssim(x, 1.0 - x) < 0


def test_noise_lowers_ssim_on_every_phantom():
    rng = np.random.default_rng(8)
    for pair in sample_dataset(20, 32, 32, 0.5, seed=6):
        truth = pair.target.pixels
        assert ssim(truth + rng.normal(0.0, 0.1, truth.shape), truth) < ssim(truth, truth)


def test_threshold_segment_full_and_empty_bands(rng):
    x = rng.uniform(size=(10, 10))
    for opening in (False, True):
        np.testing.assert_array_equal(threshold_segment(x, 0.0, 1.0, opening=opening), np.ones((10, 10)))
        assert not threshold_segment(x, 1.5, 2.0, opening=opening).any()


def test_measurement_loss(rng):
    op = Downsample(2, (8, 8))
    x = rng.uniform(size=(8, 8))
    y = apply(op, x)
    assert measurement_loss(op, x, y) == 0.0
    assert measurement_loss(op, x + 0.5, y) == pytest.approx(16 * 0.25)


def test_feature_score_is_zero_for_identical_images(small_pairs):
    encoders = EncoderPair.create(width=2, embed_dim=4, seed=0)
    target = small_pairs[0].target
    assert feature_hallucination_score(encoders, target, target, patch_size=8) == pytest.approx(0.0, abs=1e-12)
    assert feature_hallucination_score(encoders, small_pairs[1].target, target, patch_size=8) > 0


def _pixel_encoders():
    # tile pixels as the embedding, so each tile error is that tile's squared error
    flat = SimpleNamespace(embed=lambda patches: Tensor(patches.data.reshape(len(patches.data), -1)))
    return SimpleNamespace(phi=flat)


def test_feature_score_weights_concentrated_errors_up():
    ref = np.zeros((16, 16))
    concentrated = ref.copy()
    concentrated[:8, :8] = 0.5
    spread = np.full((16, 16), 0.25)
    assert np.mean(concentrated ** 2) == pytest.approx(np.mean(spread ** 2))
    encoders = _pixel_encoders()
    assert (feature_hallucination_score(encoders, concentrated, ref, patch_size=8)
            > feature_hallucination_score(encoders, spread, ref, patch_size=8))


def test_feature_score_ignores_tile_order(small_pairs):
    encoders = EncoderPair.create(width=2, embed_dim=4, seed=0)
    x, ref = small_pairs[0].target.pixels, small_pairs[1].target.pixels

    def swap_tiles(pixels):
        return np.concatenate([pixels[8:], pixels[:8]], axis=0)

    assert feature_hallucination_score(encoders, swap_tiles(x), swap_tiles(ref), patch_size=8) == pytest.approx(
        feature_hallucination_score(encoders, x, ref, patch_size=8), rel=1e-12)


def test_report_aggregates_with_sample_std():
    report = MetricsReport()
    report.add("a", 30.0, 0.8, 0.1, dice=0.5)
    report.add("b", 32.0, 0.9, 0.3)
    rows = {row["metric"]: row for row in report.aggregate()}
    assert rows["psnr"]["mean"] == pytest.approx(31.0)
    assert rows["psnr"]["std"] == pytest.approx(np.sqrt(2.0))
    assert rows["dice"] == {"metric": "dice", "mean": 0.5, "std": 0.0, "count": 1}
    assert "feat_score" not in rows
    assert np.isnan(report.mean("feat_score"))


def test_report_round_trips_through_csv_rows():
    report = MetricsReport()
    report.add("a", 30.0, 0.8, 0.1)
    rows = [{key: str(value) for key, value in row.items()} for row in report.rows]
    assert MetricsReport.from_rows(rows).rows == report.rows
