"""Batch losses with analytic gradients with respect to the predictions."""
import logging

import numpy as np

from wsiqa import prop

LOGGER = logging.getLogger(__name__)


class LossError(prop.ValidationError):
    pass


class TaskLossError(LossError):
    def __init__(self, task, message):
        super().__init__(f"Task {task!r}: {message}")
        self.task = task


def _pair(pred, target, minimum=1):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()

    if pred.shape != target.shape:
        raise LossError(f"Prediction and target lengths differ: {pred.size} vs {target.size}")

    if pred.size < minimum:
        raise LossError(f"Need at least {minimum} samples, got {pred.size}")

    return pred, target


def plcc(x, y):
    """Pearson linear correlation with sample normalization."""
    x, y = _pair(x, y, minimum=2)
    dx = x - x.mean()
    dy = y - y.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))

    if sx == 0 or sy == 0:
        raise LossError("PLCC is undefined for a constant vector (zero variance)")

    return float(np.dot(dx, dy) / (sx * sy))


def plcc_loss(pred, target):
    """(1 - PLCC) / 2 over the batch and its gradient."""
    pred, target = _pair(pred, target, minimum=2)
    dx = pred - pred.mean()
    dy = target - target.mean()
    sx = np.sqrt(np.dot(dx, dx))
    sy = np.sqrt(np.dot(dy, dy))

    if sy == 0:
        raise LossError("PLCC loss needs a non-constant target batch; use larger or shuffled batches")

    if sx == 0:
        # constant predictions: zero correlation, descend along the centred target
        return 0.5, -0.5 * dy / sy

    r = np.dot(dx, dy) / (sx * sy)
    grad = -0.5 * (dy / (sx * sy) - r * dx / (sx * sx))
    return float((1.0 - r) / 2.0), grad


def mse_loss(pred, target):
    pred, target = _pair(pred, target)
    residual = pred - target
    return float(np.mean(residual ** 2)), 2.0 * residual / residual.size


def mae_loss(pred, target):
    pred, target = _pair(pred, target)
    residual = pred - target
    return float(np.mean(np.abs(residual))), np.sign(residual) / residual.size


LOSSES = {
    "plcc": plcc_loss,
    "mse": mse_loss,
    "mae": mae_loss,
}


def loss_function(kind):
    try:
        return LOSSES[kind]
    except KeyError as error:
        raise LossError(f"Unknown loss {kind!r}; choose one of {sorted(LOSSES)}") from error


def mtl_loss(per_task, weights=None, kind="plcc"):
    """Weighted sum of per-task losses.

    ``per_task`` maps task names to (pred, target) pairs, or is a list of pairs. Returns the
    total and one gradient per task, each already scaled by the task weight.
    """
    if not isinstance(per_task, dict):
        per_task = {f"task_{k}": pair for k, pair in enumerate(per_task)}

    if not per_task:
        raise LossError("Multi-task loss needs at least one task")

    tasks = len(per_task)
    if weights is None or isinstance(weights, str):
        weights = [1.0 / tasks] * tasks

    if len(weights) != tasks:
        raise LossError(f"Got {len(weights)} task weights for {tasks} tasks")

    function = loss_function(kind)
    total = 0.0
    gradients = []

    for (name, (pred, target)), weight in zip(per_task.items(), weights):
        try:
            value, grad = function(pred, target)
        except LossError as error:
            raise TaskLossError(name, error.message) from error
        total += weight * value
        gradients.append(weight * grad)

    return total, gradients


def verify_plcc_mse_equivalence(x, y):
    """|L_PLCC - N / (4 (N - 1)) * MSE(z(x), z(y))|, zero up to rounding for every valid pair."""
    x, y = _pair(x, y, minimum=2)
    n = x.size

    if x.std() == 0 or y.std() == 0:
        raise LossError("The PLCC/MSE identity needs non-constant vectors")

    zx = (x - x.mean()) / x.std(ddof=1)
    zy = (y - y.mean()) / y.std(ddof=1)
    plcc_value, _ = plcc_loss(x, y)
    mse_value, _ = mse_loss(zx, zy)
    return abs(plcc_value - 0.25 * n / (n - 1) * mse_value)
