"""Agreement statistics, logistic mapping, content-grouped splits and rater reliability."""
import collections
import dataclasses
import logging
import math
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pandas as pd
from scipy import optimize, stats

from wsiqa import prop
from wsiqa.losses import LossError, plcc
from wsiqa.scoretable import ScoreTable

LOGGER = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.6, 0.2, 0.2)
RATING_SCALE = (1, 2, 3, 4, 5)
NELDER_MEAD_OPTIONS = {"maxiter": 2000, "maxfev": 8000, "xatol": 1e-10, "fatol": math.inf}
ICC_VARIANT = "ICC(1,1) one-way random effects, mean group size"


class StatisticsError(prop.ValidationError):
    pass


class RepetitionError(StatisticsError):
    def __init__(self, run, seed, message):
        super().__init__(f"Repetition {run} (seed {seed}) failed: {message}")
        self.run = run
        self.seed = seed


def _pearson(x, y):
    try:
        return plcc(x, y)
    except LossError as error:
        raise StatisticsError(error.message) from error


def srocc(x, y):
    """Spearman rank-order correlation with midranks for ties."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise StatisticsError(f"SROCC needs two vectors of equal length >= 2, got {x.size} and {y.size}")

    return _pearson(stats.rankdata(x, method="average"), stats.rankdata(y, method="average"))


def dmos(ratings):
    ratings = list(ratings)
    if not ratings:
        raise StatisticsError("DMOS needs at least one rating")

    invalid = [rating for rating in ratings if rating not in RATING_SCALE]
    if invalid:
        raise StatisticsError(f"Ratings must be integers in 1..5, got {invalid[:5]}")

    return float(np.mean(ratings))


def logistic5(objective, beta):
    b1, b2, b3, b4, b5 = beta
    objective = np.asarray(objective, dtype=np.float64)
    with np.errstate(over="ignore"):
        return b1 * (0.5 - 1.0 / (1.0 + np.exp(b2 * (objective - b3)))) + b4 * objective + b5


@dataclasses.dataclass(frozen=True)
class LogisticFit:
    beta: Tuple[float, float, float, float, float]
    sse: float

    def predict(self, objective):
        return logistic5(objective, self.beta)


def _sse(beta, objective, subjective):
    residual = subjective - logistic5(objective, beta)
    value = float(np.dot(residual, residual))
    return value if math.isfinite(value) else math.inf


def fit_logistic5(objective, subjective):
    """Nelder-Mead least squares from the data-driven start and from the affine least-squares start."""
    o = np.asarray(objective, dtype=np.float64).ravel()
    s = np.asarray(subjective, dtype=np.float64).ravel()

    if o.shape != s.shape or o.size < 5:
        raise StatisticsError(f"The logistic fit needs >= 5 paired scores, got {o.size} and {s.size}")

    if not (np.all(np.isfinite(o)) and np.all(np.isfinite(s))):
        raise StatisticsError("The logistic fit needs finite scores")

    if o.std() == 0:
        raise StatisticsError("Cannot fit a logistic mapping to a constant objective score")

    orientation = 1.0
    if s.std() > 0 and srocc(o, s) < 0:
        orientation = -1.0

    slope, intercept = np.polyfit(o, s, 1)
    starts = [
        np.array([s.max() - s.min(), orientation / o.std(), o.mean(), 0.0, s.mean()]),
        np.array([0.0, orientation / o.std(), o.mean(), slope, intercept]),
    ]

    best = None
    for start in starts:
        result = optimize.minimize(_sse, start, args=(o, s), method="Nelder-Mead", options=NELDER_MEAD_OPTIONS)
        candidate = (result.fun, result.x) if result.fun <= _sse(start, o, s) else (_sse(start, o, s), start)
        if best is None or candidate[0] < best[0]:
            best = candidate

    sse, beta = best
    LOGGER.debug("Logistic fit: beta=%s sse=%.6g", beta, sse)
    return LogisticFit(tuple(float(b) for b in beta), float(sse))


def plcc_mapped(objective, subjective):
    fit = fit_logistic5(objective, subjective)
    return _pearson(fit.predict(objective), subjective)


@dataclasses.dataclass(frozen=True)
class SplitAssignment:
    assignment: Dict[str, str]

    def ids(self, split):
        return sorted(ref for ref, name in self.assignment.items() if name == split)

    def counts(self):
        counter = collections.Counter(self.assignment.values())
        return {name: counter.get(name, 0) for name in SPLIT_NAMES}

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame(sorted(self.assignment.items()), columns=["reference_id", "split"])
        frame.to_csv(path, index=False)

    @classmethod
    def read(cls, path):
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        except (OSError, pd.errors.EmptyDataError) as error:
            raise StatisticsError(f"Cannot read split file {path}: {error}") from error

        if list(frame.columns) != ["reference_id", "split"]:
            raise StatisticsError(f"{path} must have the header reference_id,split")

        unknown = sorted(set(frame["split"]) - set(SPLIT_NAMES))
        if unknown:
            raise StatisticsError(f"{path} names unknown split(s) {unknown}")

        return cls(dict(zip(frame["reference_id"], frame["split"])))


def split_by_content(reference_ids, ratios=DEFAULT_RATIOS, seed=0):
    """Shuffle references and cut them by ratio; leftovers after flooring go train first, no split is left empty."""
    references = sorted(set(str(ref) for ref in reference_ids))
    ratios = tuple(float(ratio) for ratio in ratios)

    if len(ratios) != len(SPLIT_NAMES) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise StatisticsError(f"Split ratios must be three values summing to 1, got {ratios}")

    if len(references) < len(SPLIT_NAMES):
        raise StatisticsError(f"Need at least {len(SPLIT_NAMES)} references to split, got {len(references)}")

    shuffled = list(np.random.default_rng(seed).permutation(references))
    total = len(shuffled)
    counts = [int(math.floor(total * ratio + 1e-9)) for ratio in ratios]

    # every split with a positive ratio keeps at least one reference
    for index, ratio in enumerate(ratios):
        if ratio > 0 and counts[index] == 0:
            counts[index] = 1
    while sum(counts) > total:
        counts[counts.index(max(counts))] -= 1

    position = 0
    while sum(counts) < total:
        counts[position % len(counts)] += 1
        position += 1

    assignment = {}
    start = 0
    for name, count in zip(SPLIT_NAMES, counts):
        for ref in shuffled[start:start + count]:
            assignment[str(ref)] = name
        start += count

    return SplitAssignment(assignment)


def assign_images(split, image_ids, image_to_reference=None):
    """Image-level split sets; an image without a reference mapping is its own reference."""
    image_to_reference = image_to_reference or {}
    grouped = {name: [] for name in SPLIT_NAMES}

    for image_id in image_ids:
        reference = image_to_reference.get(image_id, image_id)
        if reference not in split.assignment:
            raise StatisticsError(f"Image {image_id!r} belongs to reference {reference!r}, which has no split")
        grouped[split.assignment[reference]].append(image_id)

    return grouped


@dataclasses.dataclass(frozen=True)
class RepeatResult:
    median_srocc: float
    median_plcc: float
    runs: Tuple[dict, ...]

    def to_frame(self):
        return pd.DataFrame(list(self.runs))


def repeat_eval(run, repetitions=100, base_seed=0):
    """Call ``run(seed)`` for seeds base_seed..base_seed+repetitions-1; each call returns at least srocc and plcc."""
    if repetitions < 1:
        raise StatisticsError(f"Need at least one repetition, got {repetitions}")

    runs = []
    for index in range(repetitions):
        seed = base_seed + index
        try:
            outcome = dict(run(seed))
        except Exception as error:  # pylint: disable=broad-except
            raise RepetitionError(index, seed, getattr(error, "message", str(error))) from error

        runs.append({"run": index, "seed": seed, **outcome})
        LOGGER.info("Repetition %d/%d: SROCC %.4f PLCC %.4f", index + 1, repetitions,
                    outcome["srocc"], outcome["plcc"])

    return RepeatResult(
        median_srocc=float(np.median([row["srocc"] for row in runs])),
        median_plcc=float(np.median([row["plcc"] for row in runs])),
        runs=tuple(runs),
    )


def icc(ratings):
    """One-way random-effects ICC(1,1) on an items x raters matrix; NaN marks a missing rating."""
    matrix = np.asarray(ratings, dtype=np.float64)
    if matrix.ndim != 2:
        raise StatisticsError(f"ICC needs an items x raters matrix, got shape {matrix.shape}")

    groups = [row[~np.isnan(row)] for row in matrix]
    groups = [group for group in groups if group.size > 0]

    if len(groups) < 2 or not any(group.size >= 2 for group in groups):
        raise StatisticsError("ICC needs at least 2 items and some item with at least 2 ratings")

    sizes = np.array([group.size for group in groups], dtype=np.float64)
    means = np.array([group.mean() for group in groups])
    total = sizes.sum()
    grand = sum(group.sum() for group in groups) / total

    between = float(np.sum(sizes * (means - grand) ** 2)) / (len(groups) - 1)
    within = float(sum(np.sum((group - mean) ** 2) for group, mean in zip(groups, means))) / (total - len(groups))
    mean_size = total / len(groups)

    denominator = between + (mean_size - 1.0) * within
    if denominator == 0:
        raise StatisticsError("ICC is undefined when every rating is identical")

    return (between - within) / denominator


RatingsTable = Dict[str, Tuple[int, ...]]


def read_ratings(path):
    """``image_id,rating`` rows, one per rating, grouped by image in first-seen order."""
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.EmptyDataError) as error:
        raise StatisticsError(f"Cannot read ratings {path}: {error}") from error

    if list(frame.columns) != ["image_id", "rating"]:
        raise StatisticsError(f"{path} must have the header image_id,rating")

    if frame.empty:
        raise StatisticsError(f"{path} has no data rows")

    ratings = collections.OrderedDict()
    for line, (image_id, cell) in enumerate(zip(frame["image_id"], frame["rating"]), start=2):
        try:
            rating = int(cell)
        except ValueError as error:
            raise StatisticsError(f"{path} line {line}: rating {cell!r} of {image_id!r} is not an integer") from error
        if rating not in RATING_SCALE:
            raise StatisticsError(f"{path} line {line}: rating {rating} of {image_id!r} is outside 1..5")
        ratings.setdefault(image_id, []).append(rating)

    return {image_id: tuple(values) for image_id, values in ratings.items()}


def ratings_matrix(ratings):
    width = max(len(values) for values in ratings.values())
    matrix = np.full((len(ratings), width), np.nan)
    for row, values in enumerate(ratings.values()):
        matrix[row, :len(values)] = values
    return matrix


def dmos_table(ratings):
    image_ids = tuple(ratings)
    values = np.array([[dmos(ratings[image_id])] for image_id in image_ids], dtype=np.float64).reshape(-1, 1)
    return ScoreTable(image_ids, ("dmos",), values, {"dmos": "higher"})


def intergroup_bootstrap(ratings, resamples=100, seed=0):
    """Average agreement between DMOS vectors of two random half-groups of raters per image."""
    short = [image_id for image_id, values in ratings.items() if len(values) < 2]
    if short:
        raise StatisticsError(f"Every image needs at least 2 ratings; {short[:5]} do not")

    if len(ratings) < 2:
        raise StatisticsError("The inter-group bootstrap needs at least 2 images")

    rng = np.random.default_rng(seed)
    arrays = [np.asarray(values, dtype=np.float64) for values in ratings.values()]
    srocc_values, mae_values, rmse_values = [], [], []

    for _ in range(resamples):
        first = np.empty(len(arrays))
        second = np.empty(len(arrays))
        for position, values in enumerate(arrays):
            shuffled = rng.permutation(values)
            half = values.size // 2
            first[position] = shuffled[:half].mean()
            second[position] = shuffled[half:].mean()

        difference = first - second
        if np.array_equal(first, second):
            srocc_values.append(1.0)
        elif np.ptp(first) > 0 and np.ptp(second) > 0:
            srocc_values.append(srocc(first, second))
        mae_values.append(float(np.mean(np.abs(difference))))
        rmse_values.append(float(np.sqrt(np.mean(difference ** 2))))

    if not srocc_values:
        raise StatisticsError(f"SROCC is undefined in all {resamples} resamples: a half-group DMOS vector is constant")

    if len(srocc_values) < resamples:
        LOGGER.info("SROCC averaged over %d of %d resamples; the rest had a constant half-group DMOS vector",
                    len(srocc_values), resamples)

    return {
        "srocc": float(np.mean(srocc_values)),
        "mae": float(np.mean(mae_values)),
        "rmse": float(np.mean(rmse_values)),
    }


def per_kind_srocc(pred, target, kinds):
    """SROCC per distortion kind; kinds with fewer than 2 images or constant scores are left out."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    kinds = list(kinds)
    results = {}

    for kind in sorted(set(kinds), key=str):
        rows = np.array([k == kind for k in kinds])
        if rows.sum() < 2:
            continue
        try:
            results[kind] = srocc(pred[rows], target[rows])
        except StatisticsError as error:
            LOGGER.debug("No SROCC for kind %s: %s", kind, error.message)

    return results
