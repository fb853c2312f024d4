"""Mini-batch training of task heads and the quality regressor with best-on-validation checkpointing."""
import dataclasses
import logging
import math
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from wsiqa import neuro, prop
from wsiqa.config import parse_input
from wsiqa.evalstat import StatisticsError, srocc
from wsiqa.losses import LossError, mtl_loss
from wsiqa.schema import TrainConfigFields

LOGGER = logging.getLogger(__name__)

DEFAULT_LEARNING_RATES = {"mtl": 1e-4, "regressor": 1e-2}
LR_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "val_srocc"]


class TrainingError(prop.ValidationError):
    pass


@dataclasses.dataclass
class TrainingResult:
    model: neuro.NetworkModel
    history: List[dict]
    best_epoch: int
    val_loss: Optional[float]
    config: dict
    tasks: List[str]

    def metadata(self):
        return {"config": self.config, "best_epoch": self.best_epoch, "val_loss": self.val_loss}


def resolve_config(config=None):
    """Fill defaults and replace a null learning rate with the architecture's default."""
    resolved = parse_input(dict(config or {}), TrainConfigFields().all())
    if resolved["learning_rate"] is None:
        resolved["learning_rate"] = DEFAULT_LEARNING_RATES[resolved["architecture"]]

    if resolved["loss"] == "plcc" and resolved["batch_size"] < 2:
        raise TrainingError("PLCC loss needs batch_size >= 2; a correlation over one sample is undefined")

    return resolved


def _resolve_tasks(labels, tasks, architecture):
    tasks = list(tasks) if tasks else list(labels.metrics)
    if not tasks:
        raise TrainingError("No label columns to train on")

    if architecture == "regressor" and len(tasks) != 1:
        raise TrainingError(f"The regressor predicts one score; pick one label column from {tasks}")

    for task in tasks:
        labels.column(task)

    return tasks


def _check_splits(splits):
    train_ids = list(splits.get("train") or [])
    val_ids = list(splits.get("val") or [])

    named = {name: set(ids or []) for name, ids in splits.items()}
    names = sorted(named)
    for position, first in enumerate(names):
        for second in names[position + 1:]:
            shared = named[first] & named[second]
            if shared:
                raise TrainingError(f"Splits {first!r} and {second!r} share images, e.g. {sorted(shared)[:5]}")

    if not train_ids:
        raise TrainingError("The training split is empty")

    return train_ids, val_ids


def _batches(order, batch_size):
    batches = [order[start:start + batch_size] for start in range(0, order.size, batch_size)]
    if len(batches) > 1 and batches[-1].size == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def _constant_batch(targets, batches):
    for batch in batches:
        column_span = np.ptp(targets[batch], axis=0)
        if batch.size < 2 or np.any(column_span == 0):
            return True
    return False


def _epoch_batches(rng, targets, batch_size, loss, epoch):
    batches = _batches(rng.permutation(targets.shape[0]), batch_size)
    if loss != "plcc" or not _constant_batch(targets, batches):
        return batches

    LOGGER.warning("Epoch %d has a batch with a constant target; reshuffling once", epoch)
    batches = _batches(rng.permutation(targets.shape[0]), batch_size)
    if _constant_batch(targets, batches):
        raise TrainingError(f"Epoch {epoch}: a batch still has a constant target after reshuffling; "
                            f"PLCC loss needs varied targets, use a larger batch size or the mse loss")
    return batches


def _task_pairs(tasks, predictions, targets):
    return {task: (predictions[:, k], targets[:, k]) for k, task in enumerate(tasks)}


def _evaluate(model, tasks, inputs, targets, weights, loss):
    predictions = neuro.predict(model, inputs)
    try:
        value, _ = mtl_loss(_task_pairs(tasks, predictions, targets), weights, loss)
    except LossError as error:
        raise TrainingError(f"Validation loss failed: {error.message}") from error

    correlations = []
    for k in range(len(tasks)):
        try:
            correlations.append(srocc(predictions[:, k], targets[:, k]))
        except StatisticsError:
            correlations.append(math.nan)

    return value, float(np.mean(correlations))


def train(features, labels, splits, config=None, tasks=None):
    """Train on ``splits["train"]`` and keep the parameters with the lowest validation loss.

    ``splits`` maps split names to image ids. An empty validation split falls back to the
    training images.
    """
    config = resolve_config(config)
    architecture = config["architecture"]
    tasks = _resolve_tasks(labels, tasks, architecture)
    train_ids, val_ids = _check_splits(splits)

    if not val_ids:
        LOGGER.warning("The validation split is empty; selecting the checkpoint on the training images")
        val_ids = train_ids

    try:
        train_x = features.matrix(train_ids)
        val_x = features.matrix(val_ids)
    except prop.ValidationError as error:
        raise TrainingError(f"Features are missing for a labelled image: {error.message}") from error

    train_y = labels.select(train_ids).only(tasks).values
    val_y = labels.select(val_ids).only(tasks).values

    if config["loss"] == "plcc" and len(train_ids) < 2:
        raise TrainingError("PLCC loss needs at least 2 training images")

    weights = config["task_weights"]
    if not isinstance(weights, str) and len(weights) != len(tasks):
        raise TrainingError(f"Got {len(weights)} task weights for {len(tasks)} tasks")

    if architecture == "mtl":
        model = neuro.build_mtl_head(features.dim, tasks, seed=config["seed"])
    else:
        model = neuro.build_regressor(features.dim, seed=config["seed"])
        model.tasks = list(tasks)

    result = TrainingResult(model.copy(), [], 0, None, config, tasks)
    if config["epochs"] == 0:
        return result

    rng = np.random.default_rng(config["seed"])
    state = neuro.AdamState.for_parameters(model.parameters())
    best_loss = math.inf

    LOGGER.info("Training %s on %d images (%d validation), %d task(s), loss %s, lr %g",
                architecture, len(train_ids), len(val_ids), len(tasks), config["loss"], config["learning_rate"])

    for epoch in range(1, config["epochs"] + 1):
        batch_losses = []

        for batch in _epoch_batches(rng, train_y, config["batch_size"], config["loss"], epoch):
            step_seed = int(rng.integers(0, 2 ** 63 - 1))
            predictions, cache = neuro.forward(model, train_x[batch], "train", seed=step_seed,
                                               dropout=config["dropout"])
            try:
                value, gradients = mtl_loss(_task_pairs(tasks, predictions, train_y[batch]), weights, config["loss"])
            except LossError as error:
                raise TrainingError(f"Epoch {epoch}: {error.message}") from error

            parameter_gradients = neuro.backward(model, cache, np.stack(gradients, axis=1))
            model.set_parameters(neuro.adam_step(state, model.parameters(), parameter_gradients,
                                                 config["learning_rate"]))
            batch_losses.append(value)

        val_loss, val_srocc = _evaluate(model, tasks, val_x, val_y, weights, config["loss"])
        row = {"epoch": epoch, "train_loss": float(np.mean(batch_losses)), "val_loss": val_loss,
               "val_srocc": val_srocc}
        result.history.append(row)
        LOGGER.debug("Epoch %d: train %.6f val %.6f SROCC %.4f", epoch, row["train_loss"], val_loss, val_srocc)

        if val_loss < best_loss:
            best_loss = val_loss
            result.model = model.copy()
            result.best_epoch = epoch
            result.val_loss = val_loss

    LOGGER.info("Best epoch %d with validation loss %.6f", result.best_epoch, result.val_loss)
    return result


def lr_sweep(features, labels, splits, config=None, tasks=None, grid=LR_GRID):
    """Train once per learning rate and keep the run with the lowest validation loss."""
    if not grid:
        raise TrainingError("The learning-rate grid is empty")

    best = None
    table = []
    for learning_rate in grid:
        run_config = dict(config or {}, learning_rate=float(learning_rate), lr_sweep=False)
        result = train(features, labels, splits, run_config, tasks)
        table.append({"learning_rate": float(learning_rate), "val_loss": result.val_loss,
                      "best_epoch": result.best_epoch})
        LOGGER.info("Learning rate %g: validation loss %s", learning_rate, result.val_loss)

        if result.val_loss is not None and (best is None or result.val_loss < best.val_loss):
            best = result

    if best is None:
        raise TrainingError("No learning rate produced a validation loss; train for at least one epoch")

    return best, table


def fit(features, labels, splits, config=None, tasks=None):
    config = resolve_config(config)
    if config["lr_sweep"]:
        return lr_sweep(features, labels, splits, config, tasks)[0]
    return train(features, labels, splits, config, tasks)


def write_history(history, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(history, columns=HISTORY_COLUMNS).to_csv(path, index=False)
