import math

import numpy as np
import pytest

from wsiqa import friqa, imgcore
from wsiqa.friqa import SSIM_K1, SSIM_K2, MetricError
from wsiqa.imgcore import ImageBuffer
from wsiqa.manifest import DatasetManifest, generate_kadid_plan
from wsiqa.scoretable import LOWER, ScoreTable


def _textured(height, width, seed):
    return ImageBuffer(np.random.default_rng(seed).random((height, width, 3)))


def test_psnr_identical_is_infinite():

    img = _textured(8, 8, 0)
    assert friqa.psnr(img, img) == math.inf


def test_psnr_constant_offset():

    value = friqa.psnr(ImageBuffer.constant(8, 8, 0.5), ImageBuffer.constant(8, 8, 0.6))
    assert value == pytest.approx(20.0)


def test_psnr_shape_mismatch():

    with pytest.raises(MetricError):
        friqa.psnr(ImageBuffer.constant(8, 8, 0.5), ImageBuffer.constant(8, 9, 0.5))


def test_ssim_identity():

    img = _textured(32, 24, 1)
    assert friqa.ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_closed_form():

    a, b = 0.4, 0.6
    c1 = SSIM_K1 ** 2
    expected = (2 * a * b + c1) / (a * a + b * b + c1)

    value = friqa.ssim(ImageBuffer.constant(20, 20, a), ImageBuffer.constant(20, 20, b))

    assert value == pytest.approx(expected, abs=1e-9)
    assert value == pytest.approx(0.9231, abs=1e-3)


def test_ssim_matches_explicit_window_sums():

    rng = np.random.default_rng(4)
    x = rng.random((16, 16))
    y = np.clip(x + rng.normal(0.0, 0.1, x.shape), 0.0, 1.0)

    taps = np.arange(11) - 5
    profile = np.exp(-(taps ** 2) / (2 * 1.5 ** 2))
    weights = np.outer(profile, profile)
    weights /= weights.sum()
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2

    values = []
    for top in range(16 - 10):
        for left in range(16 - 10):
            wx = x[top:top + 11, left:left + 11]
            wy = y[top:top + 11, left:left + 11]
            mx, my = (weights * wx).sum(), (weights * wy).sum()
            vx = (weights * wx * wx).sum() - mx * mx
            vy = (weights * wy * wy).sum() - my * my
            cxy = (weights * wx * wy).sum() - mx * my
            values.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))

    assert friqa.ssim(ImageBuffer(x), ImageBuffer(y)) == pytest.approx(np.mean(values), abs=1e-10)


def test_ssim_too_small():

    with pytest.raises(MetricError) as e:
        friqa.ssim(ImageBuffer.constant(10, 12, 0.5), ImageBuffer.constant(10, 12, 0.5))
    assert e.value.message == "Image 10x12 is smaller than the 11x11 window"


def test_ssim_falls_with_noise():

    img = _textured(40, 40, 2)
    rng = np.random.default_rng(3)
    light = ImageBuffer(np.clip(img.samples + rng.normal(0, 0.02, img.shape), 0, 1))
    heavy = ImageBuffer(np.clip(img.samples + rng.normal(0, 0.2, img.shape), 0, 1))

    assert friqa.ssim(img, heavy) < friqa.ssim(img, light) < 1.0


def test_ms_ssim_identity():

    img = _textured(176, 180, 5)
    assert friqa.ms_ssim(img, img) == pytest.approx(1.0, abs=1e-12)


def test_ms_ssim_rejects_small_images():

    img = ImageBuffer.constant(170, 200, 0.5)

    with pytest.raises(MetricError) as e:
        friqa.ms_ssim(img, img)
    assert e.value.message == "Image 170x200 is too small for a 5-scale pyramid (needs at least 176 pixels per side)"


def test_ms_ssim_stays_in_unit_interval():

    img = _textured(176, 176, 6)
    noisy = ImageBuffer(np.clip(img.samples + np.random.default_rng(7).normal(0, 0.3, img.shape), 0, 1))

    value = friqa.ms_ssim(img, noisy)
    assert 0.0 <= value < 1.0


def test_ms_ssim_falls_strictly_with_noise():

    img = _textured(176, 176, 8)
    noise = np.random.default_rng(9).normal(size=img.shape)

    values = [friqa.ms_ssim(img, ImageBuffer(np.clip(img.samples + sigma * noise, 0, 1)))
              for sigma in (0.02, 0.06, 0.10)]

    assert values[0] > values[1] > values[2]


def test_gmsd_identity_is_zero():

    img = _textured(24, 24, 8)
    assert friqa.gmsd(img, img) == 0.0


def test_gmsd_grows_with_distortion():

    img = ImageBuffer(np.cumsum(np.random.default_rng(9).random((48, 48, 3)), axis=0) / 48.0)
    rng = np.random.default_rng(10)
    light = ImageBuffer(np.clip(img.samples + rng.normal(0, 0.01, img.shape), 0, 1))
    heavy = ImageBuffer(np.clip(img.samples + rng.normal(0, 0.2, img.shape), 0, 1))

    assert 0.0 < friqa.gmsd(img, light) < friqa.gmsd(img, heavy)


def test_metric_dimension_mismatch():

    with pytest.raises(MetricError) as e:
        friqa.gmsd(ImageBuffer.constant(20, 20, 0.5), ImageBuffer.constant(21, 20, 0.5))
    assert e.value.message == "Image dimensions differ: 20x20 vs 21x20"


def _dataset(root):
    """Four records of one reference; the noise grows with the record position."""
    manifest = DatasetManifest([record for record in generate_kadid_plan(["I01"])
                                if record.level in (1, 5) and record.kind <= 2])

    reference = _textured(32, 32, 0)
    imgcore.write_png(reference, root / "references" / "I01.png")

    for position, record in enumerate(manifest):
        noise = np.random.default_rng(position).normal(0, 0.02 * (position + 1), reference.shape)
        imgcore.write_png(ImageBuffer(np.clip(reference.samples + noise, 0, 1)), root / record.dist_path)

    return manifest


def test_score_dataset(tmp_path):

    manifest = _dataset(tmp_path)

    table = friqa.score_dataset(manifest, ["PSNR", "SSIM", "GMSD"], tmp_path)

    assert table.image_ids == tuple(manifest.image_ids)
    assert table.metrics == ("PSNR", "SSIM", "GMSD")
    assert table.polarity["GMSD"] == LOWER
    psnr = table.column("PSNR")
    assert psnr[0] > psnr[1]


def test_score_dataset_parallel_matches_serial(tmp_path):

    manifest = _dataset(tmp_path)

    serial = friqa.score_dataset(manifest, ["PSNR", "SSIM"], tmp_path)
    parallel = friqa.score_dataset(manifest, ["PSNR", "SSIM"], tmp_path, workers=2)

    assert np.array_equal(serial.values, parallel.values)


def test_score_dataset_excludes_unreadable_rows(tmp_path):

    manifest = _dataset(tmp_path)
    (tmp_path / manifest.records[0].dist_path).unlink()

    table = friqa.score_dataset(manifest, ["PSNR"], tmp_path)
    assert table.image_ids == tuple(manifest.image_ids[1:])


def test_score_dataset_rejects_unknown_metric(tmp_path):

    with pytest.raises(MetricError) as e:
        friqa.score_dataset(DatasetManifest(), ["PSNR", "VIF"], tmp_path)
    assert e.value.message == "Unknown built-in metric(s) ['VIF']; available: ['GMSD', 'MSSSIM', 'PSNR', 'SSIM']"


def test_score_dataset_rejects_duplicate_metric(tmp_path):

    with pytest.raises(MetricError):
        friqa.score_dataset(DatasetManifest(), ["PSNR", "PSNR"], tmp_path)


def test_baseline_correlations():

    ids = tuple(f"img{i}" for i in range(12))
    quality = np.linspace(1.0, 5.0, 12)
    metrics = ScoreTable(ids, ("PSNR", "GMSD"), np.column_stack([quality * 3 + 10, 1.0 / quality]),
                         {"GMSD": LOWER})
    subjective = ScoreTable(ids, ("mos",), quality)

    results = friqa.baseline_correlations(metrics, subjective)

    assert results["PSNR"]["srocc"] == pytest.approx(1.0)
    assert results["GMSD"]["srocc"] == pytest.approx(-1.0)
    assert results["PSNR"]["plcc"] == pytest.approx(1.0, abs=1e-4)
    assert results["GMSD"]["polarity"] == LOWER
