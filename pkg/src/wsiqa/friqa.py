"""Full-reference quality metrics and batch scoring of a distortion manifest."""
import concurrent.futures
import logging
import math
from pathlib import Path

import numpy as np
from scipy import ndimage

from wsiqa import evalstat, imgcore, prop
from wsiqa.imgcore import Border, ImageBuffer
from wsiqa.scoretable import HIGHER, LOWER, ScoreTable

LOGGER = logging.getLogger(__name__)

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
GMSD_C = 170.0

PREWITT_X = np.array([[1.0, 0.0, -1.0], [1.0, 0.0, -1.0], [1.0, 0.0, -1.0]]) / 3.0
PREWITT_Y = PREWITT_X.T


class MetricError(prop.ValidationError):
    pass


def _luma_planes(ref, dist):
    if ref.shape[:2] != dist.shape[:2]:
        raise MetricError(f"Image dimensions differ: {ref.width}x{ref.height} vs {dist.width}x{dist.height}")

    return imgcore.luma(ref).plane(0), imgcore.luma(dist).plane(0)


def psnr(ref, dist):
    """Peak signal-to-noise ratio in dB over [0, 1] samples; ``inf`` for identical images."""
    if ref.shape != dist.shape:
        raise MetricError(f"Image shapes differ: {ref.shape} vs {dist.shape}")

    mse = float(np.mean((ref.samples - dist.samples) ** 2))
    if mse == 0.0:
        return math.inf

    return 10.0 * math.log10(1.0 / mse)


def _gaussian_profile():
    taps = np.arange(SSIM_WINDOW, dtype=np.float64) - SSIM_WINDOW // 2
    profile = np.exp(-(taps ** 2) / (2.0 * SSIM_SIGMA ** 2))
    return profile / profile.sum()


def _window_mean(plane, profile):
    """Gaussian-weighted mean over every window lying fully inside ``plane``."""
    radius = len(profile) // 2
    out = ndimage.correlate1d(plane, profile, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, profile, axis=1, mode="nearest")
    return out[radius:plane.shape[0] - radius, radius:plane.shape[1] - radius]


def ssim_maps(x, y):
    """Local SSIM and contrast-structure maps of two equally sized 2-D planes in [0, 1]."""
    if min(x.shape) < SSIM_WINDOW:
        raise MetricError(f"Image {x.shape[1]}x{x.shape[0]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")

    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    profile = _gaussian_profile()

    mu_x = _window_mean(x, profile)
    mu_y = _window_mean(y, profile)
    sigma_xx = _window_mean(x * x, profile) - mu_x * mu_x
    sigma_yy = _window_mean(y * y, profile) - mu_y * mu_y
    sigma_xy = _window_mean(x * y, profile) - mu_x * mu_y

    luminance = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1)
    contrast_structure = (2.0 * sigma_xy + c2) / (sigma_xx + sigma_yy + c2)
    return luminance * contrast_structure, contrast_structure


def ssim(ref, dist):
    x, y = _luma_planes(ref, dist)
    return float(np.mean(ssim_maps(x, y)[0]))


def _halve(plane):
    rows = plane.shape[0] // 2 * 2
    cols = plane.shape[1] // 2 * 2
    trimmed = plane[:rows, :cols]
    return (trimmed[0::2, 0::2] + trimmed[1::2, 0::2] + trimmed[0::2, 1::2] + trimmed[1::2, 1::2]) / 4.0


def ms_ssim(ref, dist):
    x, y = _luma_planes(ref, dist)
    scales = len(MS_SSIM_WEIGHTS)
    minimum = 2 ** (scales - 1) * SSIM_WINDOW

    if min(x.shape) < minimum:
        raise MetricError(f"Image {x.shape[1]}x{x.shape[0]} is too small for a {scales}-scale pyramid "
                          f"(needs at least {minimum} pixels per side)")

    score = 1.0
    for scale, weight in enumerate(MS_SSIM_WEIGHTS):
        full, contrast_structure = ssim_maps(x, y)

        if scale == scales - 1:
            term = float(np.mean(full))
        else:
            term = float(np.mean(contrast_structure))
            x, y = _halve(x), _halve(y)

        # negative terms have no real fractional power
        score *= max(term, 0.0) ** weight

    return score


def _gradient_magnitude(plane):
    img = ImageBuffer(plane)
    gx = imgcore.convolve(img, PREWITT_X, Border.REPLICATE).plane(0)
    gy = imgcore.convolve(img, PREWITT_Y, Border.REPLICATE).plane(0)
    return np.sqrt(gx ** 2 + gy ** 2)


def gmsd(ref, dist):
    """Gradient magnitude similarity deviation; 0 for identical images, larger is worse."""
    x, y = _luma_planes(ref, dist)
    x = _halve(x * 255.0)
    y = _halve(y * 255.0)

    gm_x = _gradient_magnitude(x)
    gm_y = _gradient_magnitude(y)
    similarity = (2.0 * gm_x * gm_y + GMSD_C) / (gm_x ** 2 + gm_y ** 2 + GMSD_C)
    return float(np.std(similarity))


BUILTIN_METRICS = {
    "PSNR": (psnr, HIGHER),
    "SSIM": (ssim, HIGHER),
    "MSSSIM": (ms_ssim, HIGHER),
    "GMSD": (gmsd, LOWER),
}


def _check_metrics(metrics):
    unknown = [metric for metric in metrics if metric not in BUILTIN_METRICS]
    if unknown:
        raise MetricError(f"Unknown built-in metric(s) {unknown}; available: {sorted(BUILTIN_METRICS)}")

    if len(set(metrics)) != len(metrics):
        raise MetricError(f"Metric names must be unique, got {list(metrics)}")


def _score_record(job):
    image_id, ref_path, dist_path, metrics = job
    try:
        ref = imgcore.read_image(ref_path)
        dist = imgcore.read_image(dist_path)
        return image_id, [BUILTIN_METRICS[metric][0](ref, dist) for metric in metrics], None
    except (prop.ValidationError, OSError) as error:
        return image_id, None, getattr(error, "message", str(error))


def score_dataset(manifest, metrics, root, workers=1):
    """Score every manifest record; unreadable records are logged and left out of the table."""
    metrics = list(metrics)
    _check_metrics(metrics)

    root = Path(root)
    jobs = [(record.image_id, root / record.ref_path, root / record.dist_path, metrics) for record in manifest]

    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_score_record, jobs, chunksize=max(1, len(jobs) // (workers * 4))))
    else:
        results = [_score_record(job) for job in jobs]

    image_ids = []
    rows = []
    for image_id, values, failure in results:
        if failure is not None:
            LOGGER.warning("Scoring %s failed and the row is excluded: %s", image_id, failure)
            continue
        image_ids.append(image_id)
        rows.append(values)

    LOGGER.info("Scored %d of %d records with %s", len(image_ids), len(jobs), metrics)
    polarity = {metric: BUILTIN_METRICS[metric][1] for metric in metrics}
    return ScoreTable(tuple(image_ids), tuple(metrics), np.array(rows, dtype=np.float64).reshape(-1, len(metrics)),
                      polarity)


def baseline_correlations(table, subjective):
    """SROCC and logistic-mapped PLCC of every metric column against a subjective score table."""
    subjective_column = subjective.metrics[0]
    merged, unmatched = table.join(subjective)
    if unmatched:
        LOGGER.warning("%d image id(s) lack either metric or subjective scores", len(unmatched))

    target = merged.column(subjective_column)
    results = {}
    for metric in table.metrics:
        values = merged.column(metric)
        finite = np.isfinite(values)
        results[metric] = {
            "srocc": evalstat.srocc(values[finite], target[finite]),
            "plcc": evalstat.plcc_mapped(values[finite], target[finite]),
            "polarity": table.polarity[metric],
        }

    return results
