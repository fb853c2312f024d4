"""In-process property checks run by ``wsiqa selftest``."""
import dataclasses
import logging
import math

import numpy as np

from wsiqa import evalstat, friqa, losses, neuro, scorepipe
from wsiqa.imgcore import ImageBuffer

LOGGER = logging.getLogger(__name__)

GRADIENT_TOLERANCE = 1e-5
IDENTITY_TOLERANCE = 1e-10
CLOSED_FORM_TOLERANCE = 1e-9
GRADIENT_FLOOR = 1e-4


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def relative_error(analytic, numeric):
    scale = max(abs(analytic), abs(numeric), GRADIENT_FLOOR)
    return abs(analytic - numeric) / scale


def loss_gradient_error(function, pred, target, step=1e-6):
    """Largest relative error between a loss gradient and central differences over every coordinate."""
    _, grad = function(pred, target)
    worst = 0.0
    for k in range(pred.size):
        shifted = pred.copy()
        shifted[k] += step
        upper, _ = function(shifted, target)
        shifted[k] -= 2 * step
        lower, _ = function(shifted, target)
        worst = max(worst, relative_error(grad[k], (upper - lower) / (2 * step)))
    return worst


def network_gradient_error(model, inputs, targets, rng, coordinates=20, step=1e-4):
    """Finite-difference check of ``backward`` under an MSE loss on every head, sampling each layer."""
    def loss_at():
        predictions = neuro.forward(model, inputs, "eval")[0]
        return float(np.sum((predictions - targets) ** 2))

    predictions, cache = neuro.forward(model, inputs, "eval")
    gradients = neuro.backward(model, cache, 2.0 * (predictions - targets))
    params = model.parameters()
    worst = 0.0

    for param, grad in zip(params, gradients):
        flat = param.reshape(-1)
        for index in rng.choice(flat.size, size=min(coordinates, flat.size), replace=False):
            original = flat[index]
            flat[index] = original + step
            upper = loss_at()
            flat[index] = original - step
            lower = loss_at()
            flat[index] = original
            worst = max(worst, relative_error(grad.reshape(-1)[index], (upper - lower) / (2 * step)))

    return worst


def check_identity_sweep(seed=0, pairs=1000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        n = int(rng.integers(2, 65))
        x = rng.normal(size=n)
        y = rng.normal(size=n)
        worst = max(worst, losses.verify_plcc_mse_equivalence(x, y))

    return CheckResult("plcc/mse identity", worst < IDENTITY_TOLERANCE, f"max residual {worst:.3g} over {pairs} pairs")


def check_loss_gradients(seed=0):
    rng = np.random.default_rng(seed)
    pred = rng.normal(size=16)
    target = rng.normal(size=16)
    errors = {name: loss_gradient_error(function, pred, target) for name, function in losses.LOSSES.items()}
    worst = max(errors.values())
    detail = ", ".join(f"{name} {error:.2g}" for name, error in errors.items())
    return CheckResult("loss gradients", worst < GRADIENT_TOLERANCE, detail)


def check_network_gradients(seed=0):
    rng = np.random.default_rng(seed)
    inputs = rng.normal(size=(6, 5))
    errors = {}

    mtl = neuro.build_mtl_head(5, 3, seed=seed)
    errors["mtl"] = network_gradient_error(mtl, inputs, rng.normal(size=(6, 3)), rng)

    regressor = neuro.build_regressor(5, seed=seed)
    errors["regressor"] = network_gradient_error(regressor, inputs, rng.normal(size=(6, 1)), rng)

    worst = max(errors.values())
    detail = ", ".join(f"{name} {error:.2g}" for name, error in errors.items())
    return CheckResult("network gradients", worst < GRADIENT_TOLERANCE, detail)


def check_metric_closed_forms(seed=0):
    rng = np.random.default_rng(seed)
    image = ImageBuffer(rng.random((48, 48, 3)))
    dark = ImageBuffer.constant(32, 32, 0.4)
    light = ImageBuffer.constant(32, 32, 0.6)

    c1 = friqa.SSIM_K1 ** 2
    expected = (2 * 0.4 * 0.6 + c1) / (0.4 ** 2 + 0.6 ** 2 + c1)
    deviations = {
        "ssim(x,x)": abs(friqa.ssim(image, image) - 1.0),
        "gmsd(x,x)": abs(friqa.gmsd(image, image)),
        "constant ssim": abs(friqa.ssim(dark, light) - expected),
    }
    passed = deviations["ssim(x,x)"] < 1e-12 and deviations["gmsd(x,x)"] < 1e-12 and \
        deviations["constant ssim"] < CLOSED_FORM_TOLERANCE
    detail = ", ".join(f"{name} off by {value:.2g}" for name, value in deviations.items())
    return CheckResult("metric closed forms", passed, detail)


def check_he_uniformity(seed=0, size=100_000, bins=scorepipe.DEFAULT_BINS):
    rng = np.random.default_rng(seed)
    scores = np.unique(rng.lognormal(sigma=1.5, size=size))
    transform = scorepipe.fit_he(scores, bins)
    equalized = transform.apply(scores)
    counts = scorepipe.equalization_counts(equalized, bins)
    low, high = scores.size // bins, -(-scores.size // bins)

    in_range = bool(np.all((counts >= low) & (counts <= high)))
    monotone = math.isclose(evalstat.srocc(scores, equalized), 1.0, abs_tol=1e-12)
    return CheckResult("histogram equalization", in_range and monotone,
                       f"bin counts {counts.min()}..{counts.max()} for {scores.size} scores, SROCC 1: {monotone}")


def check_rank_closed_form(seed=0, trials=1000, size=30):
    rng = np.random.default_rng(seed)
    base = np.arange(size, dtype=np.float64)
    worst = 0.0
    for _ in range(trials):
        order = rng.permutation(size).astype(np.float64)
        closed = 1.0 - 6.0 * np.sum((base - order) ** 2) / (size * (size ** 2 - 1))
        worst = max(worst, abs(evalstat.srocc(base, order) - closed))

    hand = evalstat.srocc([1, 2, 3], [10, 20, 15])
    passed = worst < 1e-12 and math.isclose(hand, 0.5, abs_tol=1e-12)
    return CheckResult("rank closed form", passed, f"max deviation {worst:.2g}, hand case {hand:.12g}")


CHECKS = (
    check_identity_sweep,
    check_loss_gradients,
    check_network_gradients,
    check_metric_closed_forms,
    check_he_uniformity,
    check_rank_closed_form,
)


def run_selftest(seed=0):
    results = []
    for check in CHECKS:
        result = check(seed)
        level = logging.INFO if result.passed else logging.ERROR
        LOGGER.log(level, "%s %s: %s", "PASS" if result.passed else "FAIL", result.name, result.detail)
        results.append(result)
    return results
