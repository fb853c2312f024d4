"""Score normalization: z-scoring and histogram equalization of metric distributions."""
import dataclasses
import logging

import numpy as np
from scipy import stats

from wsiqa import prop
from wsiqa.config import read_json, write_json

LOGGER = logging.getLogger(__name__)

METHODS = ("he", "zscore")
DEFAULT_BINS = 256


class DegenerateDistributionError(prop.ValidationError):
    pass


def _vector(x):
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise DegenerateDistributionError("Scores must be finite")
    return x


def zscore(x):
    x = _vector(x)
    if x.size < 2:
        raise DegenerateDistributionError(f"z-scoring needs at least 2 values, got {x.size}")

    std = x.std(ddof=1)
    if std == 0:
        raise DegenerateDistributionError("Cannot z-score a constant vector (zero variance)")

    return (x - x.mean()) / std


@dataclasses.dataclass(frozen=True)
class ZScoreTransform:
    mean: float
    std: float

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def to_json(self):
        return {"method": "zscore", "mean": self.mean, "std": self.std}


def fit_zscore(train_scores):
    x = _vector(train_scores)
    if x.size < 2 or x.std(ddof=1) == 0:
        raise DegenerateDistributionError("z-score statistics need at least 2 distinct training values")

    return ZScoreTransform(float(x.mean()), float(x.std(ddof=1)))


def apply_zscore(transform, x):
    return transform.apply(x)


@dataclasses.dataclass(frozen=True)
class HETransform:
    """Empirical-CDF mapping; ``reference`` holds the distinct fitted values ascending, ``cdf`` their midrank/N."""
    reference: np.ndarray
    cdf: np.ndarray
    bins: int = DEFAULT_BINS

    def __post_init__(self):
        reference = np.asarray(self.reference, dtype=np.float64)
        cdf = np.asarray(self.cdf, dtype=np.float64)

        if reference.size == 0 or reference.shape != cdf.shape:
            raise DegenerateDistributionError("A histogram-equalization transform needs matching, non-empty grids")

        if np.any(np.diff(reference) <= 0) or np.any(np.diff(cdf) < 0):
            raise DegenerateDistributionError("Reference values must be strictly ascending with a monotone CDF")

        object.__setattr__(self, "reference", reference)
        object.__setattr__(self, "cdf", cdf)

    def apply(self, x):
        return np.interp(np.asarray(x, dtype=np.float64), self.reference, self.cdf, left=0.0, right=1.0)

    def compact(self, bins=None):
        """Same mapping resampled on a (bins + 1)-point quantile grid."""
        bins = bins or self.bins
        grid = np.linspace(self.cdf[0], 1.0, bins + 1)
        values = np.interp(grid, self.cdf, self.reference)
        values, first = np.unique(values, return_index=True)
        return HETransform(values, grid[first], bins)

    def to_json(self):
        return {
            "method": "he",
            "bins": self.bins,
            "reference": self.reference.tolist(),
            "cdf": self.cdf.tolist(),
        }


def fit_he(train_scores, bins=DEFAULT_BINS):
    x = _vector(train_scores)
    reference = np.unique(x)

    if reference.size < 2:
        raise DegenerateDistributionError("Histogram equalization needs at least 2 distinct training values")

    ranks = stats.rankdata(x, method="average") / x.size
    # tied copies share one midrank
    positions = np.searchsorted(reference, x)
    cdf = np.empty(reference.size)
    cdf[positions] = ranks

    LOGGER.debug("Fitted HE on %d values (%d distinct)", x.size, reference.size)
    return HETransform(reference, cdf, int(bins))


def apply_he(transform, x):
    return transform.apply(x)


def equalization_counts(values, bins=DEFAULT_BINS):
    values = np.asarray(values, dtype=np.float64)
    index = np.clip(np.floor(values * bins + 1e-9).astype(int), 0, bins - 1)
    return np.bincount(index, minlength=bins)


def transform_from_json(body):
    method = body.get("method")

    if method == "he":
        return HETransform(body["reference"], body["cdf"], int(body.get("bins", DEFAULT_BINS)))

    if method == "zscore":
        return ZScoreTransform(float(body["mean"]), float(body["std"]))

    raise DegenerateDistributionError(f"Unknown normalization method {method!r}")


def save_transforms(transforms, path):
    write_json(path, {metric: transform.to_json() for metric, transform in transforms.items()})


def load_transforms(path):
    return {metric: transform_from_json(body) for metric, body in read_json(path).items()}


def _finite_column(values, metric):
    finite = np.isfinite(values)
    if finite.all():
        return values

    if not finite.any():
        raise DegenerateDistributionError(f"Metric {metric!r} has no finite scores")

    LOGGER.warning("Metric %s has %d non-finite score(s); clamping them to the finite range",
                   metric, int((~finite).sum()))
    return np.clip(values, values[finite].min(), values[finite].max())


def normalize_table(table, train_ids, method="he", bins=DEFAULT_BINS):
    """Fit one transform per metric on the training rows and apply it to every row."""
    if method not in METHODS:
        raise DegenerateDistributionError(f"Normalization method must be one of {METHODS}, got {method!r}")

    train = set(train_ids)
    train_rows = np.array([image_id in train for image_id in table.image_ids])
    if train_rows.sum() < 2:
        raise DegenerateDistributionError(
            f"Need at least 2 training rows to fit a normalization, got {train_rows.sum()}")

    values = np.empty_like(table.values)
    transforms = {}

    for column, metric in enumerate(table.metrics):
        scores = _finite_column(table.values[:, column], metric)
        try:
            if method == "he":
                transform = fit_he(scores[train_rows], bins)
            else:
                transform = fit_zscore(scores[train_rows])
        except DegenerateDistributionError as error:
            raise DegenerateDistributionError(f"Metric {metric!r}: {error.message}") from error

        transforms[metric] = transform
        values[:, column] = transform.apply(scores)

    LOGGER.info("Normalized %d metric(s) with %s fitted on %d training rows",
                len(table.metrics), method, int(train_rows.sum()))
    return table.with_values(values), transforms
