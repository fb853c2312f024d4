"""Per-image score tables: one row per image, one column per metric."""
import dataclasses
import json
import logging
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import pandas as pd

from wsiqa import prop
from wsiqa.parsers import extract_score, format_score

LOGGER = logging.getLogger(__name__)

ID_COLUMN = "image_id"
HIGHER = "higher"
LOWER = "lower"


class ScoreTableError(prop.ValidationError):
    pass


def polarity_path(path):
    return Path(f"{path}.polarity.json")


@dataclasses.dataclass(frozen=True)
class ScoreTable:
    image_ids: Tuple[str, ...]
    metrics: Tuple[str, ...]
    values: np.ndarray
    polarity: Dict[str, str] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        image_ids = tuple(str(image_id) for image_id in self.image_ids)
        metrics = tuple(str(metric) for metric in self.metrics)
        values = np.asarray(self.values, dtype=np.float64).reshape(len(image_ids), len(metrics))

        for label, names in (("image id", image_ids), ("metric", metrics)):
            if len(set(names)) != len(names):
                duplicates = sorted({name for name in names if names.count(name) > 1})
                raise ScoreTableError(f"Duplicate {label}(s): {duplicates}")

        if np.isnan(values).any():
            row, column = np.argwhere(np.isnan(values))[0]
            raise ScoreTableError(f"Missing value for image {image_ids[row]!r}, metric {metrics[column]!r}")

        polarity = {metric: self.polarity.get(metric, HIGHER) for metric in metrics}
        for metric, direction in polarity.items():
            if direction not in (HIGHER, LOWER):
                raise ScoreTableError(f"Polarity of {metric!r} must be {HIGHER!r} or {LOWER!r}, got {direction!r}")

        values.setflags(write=False)
        object.__setattr__(self, "image_ids", image_ids)
        object.__setattr__(self, "metrics", metrics)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "polarity", polarity)

    def __len__(self):
        return len(self.image_ids)

    def column(self, metric):
        try:
            return self.values[:, self.metrics.index(metric)]
        except ValueError as error:
            raise ScoreTableError(f"No metric column {metric!r}; available: {list(self.metrics)}") from error

    def row_index(self):
        return {image_id: position for position, image_id in enumerate(self.image_ids)}

    def select(self, image_ids):
        index = self.row_index()
        missing = [image_id for image_id in image_ids if image_id not in index]
        if missing:
            raise ScoreTableError(f"Image ids not in the score table: {missing[:10]}"
                                  + (f" (+{len(missing) - 10} more)" if len(missing) > 10 else ""))

        rows = [index[image_id] for image_id in image_ids]
        return ScoreTable(tuple(image_ids), self.metrics, self.values[rows], self.polarity)

    def only(self, metrics):
        columns = [self.column(metric) for metric in metrics]
        values = np.stack(columns, axis=1) if columns else np.empty((len(self), 0))
        return ScoreTable(self.image_ids, tuple(metrics), values, self.polarity)

    def with_values(self, values):
        return ScoreTable(self.image_ids, self.metrics, values, self.polarity)

    def join(self, other):
        """Inner join on image id; returns the merged table and the ids present on one side only."""
        clashes = sorted(set(self.metrics) & set(other.metrics))
        if clashes:
            raise ScoreTableError(f"Metric columns already present: {clashes}")

        other_index = other.row_index()
        shared = [image_id for image_id in self.image_ids if image_id in other_index]
        unmatched = sorted(set(self.image_ids).symmetric_difference(other.image_ids))

        left = self.select(shared)
        right = other.select(shared)
        polarity = dict(self.polarity)
        polarity.update(other.polarity)
        merged = ScoreTable(tuple(shared), self.metrics + other.metrics,
                            np.hstack([left.values, right.values]), polarity)
        return merged, unmatched

    def to_frame(self):
        frame = pd.DataFrame(
            {metric: [format_score(value) for value in self.column(metric)] for metric in self.metrics},
            columns=list(self.metrics),
        )
        frame.insert(0, ID_COLUMN, list(self.image_ids))
        return frame

    def write(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)

        with open(polarity_path(path), "w", encoding="utf-8") as handle:
            json.dump(self.polarity, handle, indent=2, sort_keys=True)
            handle.write("\n")

    @classmethod
    def from_frame(cls, frame, source, polarity=None):
        if ID_COLUMN not in frame.columns:
            raise ScoreTableError(f"{source} has no {ID_COLUMN} column")

        if frame.empty:
            raise ScoreTableError(f"{source} has no data rows")

        metrics = [column for column in frame.columns if column != ID_COLUMN]
        values = np.empty((len(frame), len(metrics)))

        for row, record in enumerate(frame.itertuples(index=False)):
            cells = dict(zip(frame.columns, record))
            for column, metric in enumerate(metrics):
                try:
                    values[row, column] = extract_score(cells[metric])
                except ValueError as error:
                    raise ScoreTableError(
                        f"{source}: image {cells[ID_COLUMN]!r}, column {metric!r} is not numeric "
                        f"({cells[metric]!r})"
                    ) from error

        return cls(tuple(frame[ID_COLUMN]), tuple(metrics), values, polarity or {})

    @classmethod
    def read(cls, path):
        try:
            frame = pd.read_csv(path, dtype=str, keep_default_na=False)
        except pd.errors.EmptyDataError as error:
            raise ScoreTableError(f"{path} has no data rows") from error
        except OSError as error:
            raise ScoreTableError(f"Cannot read score table {path}: {error}") from error

        polarity = None
        if polarity_path(path).exists():
            with open(polarity_path(path), "r", encoding="utf-8") as handle:
                polarity = json.load(handle)

        return cls.from_frame(frame, path, polarity)


def ingest_external_scores(csv_path, table, allow_partial=False, polarity=None):
    """Merge externally computed metric columns into ``table``.

    Returns the merged table and the sorted ids present in only one of the two inputs.
    """
    external = ScoreTable.read(csv_path)
    if polarity:
        external = ScoreTable(external.image_ids, external.metrics, external.values,
                              {**external.polarity, **polarity})

    merged, unmatched = table.join(external)

    if unmatched:
        LOGGER.warning("%d image id(s) unmatched between the score table and %s: %s",
                       len(unmatched), csv_path, unmatched[:10])
        if not allow_partial:
            raise ScoreTableError(
                f"{len(unmatched)} image id(s) do not join with {csv_path}: {unmatched[:10]}; "
                f"pass --allow-partial to keep only the matched rows"
            )

    LOGGER.info("Ingested %d external column(s) from %s", len(external.metrics), csv_path)
    return merged, unmatched
