"""Multi-level spatially pooled features and their binary store."""
import dataclasses
import functools
import json
import logging
import struct
from pathlib import Path
from typing import Tuple

import numpy as np

from wsiqa import prop

LOGGER = logging.getLogger(__name__)

MAGIC = b"MLSP"
STORE_VERSION = 1
SHAPES_FILE = "shapes.json"
ACTIVATION_SUFFIX = ".f32"

# per-block channel counts of InceptionResNet-v2, stem output through the final 1x1 convolution
INCEPTION_RESNET_V2_MLSP_CHANNELS = tuple([320] + [128] * 10 + [1088] + [384] * 20 + [2080] + [448] * 10)


class FeatureStoreError(prop.ValidationError):
    pass


@dataclasses.dataclass(frozen=True)
class ActivationBlock:
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 3 or min(samples.shape) <= 0:
            raise FeatureStoreError(f"Activation blocks are (height, width, channels) with positive dims, "
                                    f"got shape {samples.shape}")
        object.__setattr__(self, "samples", samples)

    @property
    def channels(self):
        return self.samples.shape[2]


def gap_pool(block):
    return block.samples.mean(axis=(0, 1))


def mlsp_concat(blocks):
    blocks = list(blocks)
    if not blocks:
        raise FeatureStoreError("MLSP features need at least one activation block")

    return np.concatenate([gap_pool(block) for block in blocks])


@dataclasses.dataclass(frozen=True)
class FeatureStore:
    dim: int
    image_ids: Tuple[str, ...] = ()
    vectors: np.ndarray = None

    def __post_init__(self):
        if self.dim <= 0:
            raise FeatureStoreError(f"Feature dimension must be positive, got {self.dim}")

        image_ids = tuple(self.image_ids)
        vectors = np.zeros((0, self.dim), dtype=np.float32) if self.vectors is None else \
            np.asarray(self.vectors, dtype=np.float32)

        if vectors.shape != (len(image_ids), self.dim):
            raise FeatureStoreError(f"Expected {len(image_ids)} vectors of length {self.dim}, got {vectors.shape}")

        if len(set(image_ids)) != len(image_ids):
            raise FeatureStoreError("Feature store image ids must be unique")

        vectors.setflags(write=False)
        object.__setattr__(self, "image_ids", image_ids)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return len(self.image_ids)

    def __contains__(self, image_id):
        return image_id in self._index

    @functools.cached_property
    def _index(self):
        return {image_id: row for row, image_id in enumerate(self.image_ids)}

    def matrix(self, image_ids):
        index = self._index
        rows = []
        for image_id in image_ids:
            if image_id not in index:
                raise FeatureStoreError(f"No features for image {image_id!r}")
            rows.append(index[image_id])

        return self.vectors[rows].astype(np.float64)

    @classmethod
    def from_mapping(cls, mapping, dim=None):
        image_ids = list(mapping)
        if dim is None:
            if not image_ids:
                raise FeatureStoreError("Cannot infer the dimension of an empty feature mapping")
            dim = len(mapping[image_ids[0]])

        vectors = np.array([np.asarray(mapping[image_id], dtype=np.float32) for image_id in image_ids],
                           dtype=np.float32).reshape(len(image_ids), dim)
        return cls(dim, tuple(image_ids), vectors)


def write_store(store, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<III", STORE_VERSION, len(store), store.dim))
        for image_id, vector in zip(store.image_ids, store.vectors):
            encoded = image_id.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise FeatureStoreError(f"Image id {image_id[:32]!r}... is longer than 65535 bytes")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            handle.write(vector.astype("<f4").tobytes())

    LOGGER.info("Wrote %d feature vectors of dimension %d to %s", len(store), store.dim, path)


def _take(data, offset, size, path, what):
    if offset + size > len(data):
        raise FeatureStoreError(f"{path} is truncated: {what} needs {size} bytes at offset {offset}, "
                                f"file has {len(data)}")
    return data[offset:offset + size]


def read_store(path):
    try:
        data = Path(path).read_bytes()
    except OSError as error:
        raise FeatureStoreError(f"Cannot read feature store {path}: {error}") from error

    magic = _take(data, 0, 4, path, "magic")
    if magic != MAGIC:
        raise FeatureStoreError(f"{path} has magic {magic!r} at offset 0, expected {MAGIC!r}")

    version, count, dim = struct.unpack("<III", _take(data, 4, 12, path, "header"))
    if version != STORE_VERSION:
        raise FeatureStoreError(f"{path} has store version {version} at offset 4, expected {STORE_VERSION}")

    if dim == 0:
        raise FeatureStoreError(f"{path} declares dimension 0 at offset 12")

    offset = 16
    image_ids = []
    vectors = np.empty((count, dim), dtype=np.float32)

    for row in range(count):
        (length,) = struct.unpack("<H", _take(data, offset, 2, path, f"id length of record {row}"))
        offset += 2
        try:
            image_ids.append(_take(data, offset, length, path, f"id of record {row}").decode("utf-8"))
        except UnicodeDecodeError as error:
            raise FeatureStoreError(f"{path}: record {row} id at offset {offset} is not UTF-8") from error
        offset += length
        vectors[row] = np.frombuffer(_take(data, offset, 4 * dim, path, f"vector of record {row}"), dtype="<f4")
        offset += 4 * dim

    if offset != len(data):
        raise FeatureStoreError(f"{path} has {len(data) - offset} trailing bytes at offset {offset}")

    return FeatureStore(dim, tuple(image_ids), vectors)


def _split_blocks(flat, shapes, source):
    expected = sum(h * w * c for h, w, c in shapes)
    if flat.size != expected:
        raise FeatureStoreError(f"{source} holds {flat.size} values, the block shapes need {expected}")

    blocks = []
    offset = 0
    for h, w, c in shapes:
        size = h * w * c
        blocks.append(ActivationBlock(flat[offset:offset + size].reshape(h, w, c)))
        offset += size
    return blocks


def ingest_activations(directory, mode="mlsp"):
    """Pool per-image raw activation tensors from ``directory`` into a feature store.

    ``mode`` ``mlsp`` concatenates the pooled blocks, ``gap`` pools only the final block.
    """
    if mode not in ("mlsp", "gap"):
        raise FeatureStoreError(f"Pooling mode must be 'mlsp' or 'gap', got {mode!r}")

    directory = Path(directory)
    try:
        with open(directory / SHAPES_FILE, "r", encoding="utf-8") as handle:
            shapes = [tuple(int(d) for d in shape) for shape in json.load(handle)["blocks"]]
    except (OSError, ValueError, KeyError, TypeError) as error:
        raise FeatureStoreError(f"{directory / SHAPES_FILE} must hold {{\"blocks\": [[h, w, c], ...]}}: {error}") \
            from error

    if not shapes or any(len(shape) != 3 or min(shape) <= 0 for shape in shapes):
        raise FeatureStoreError(f"{directory / SHAPES_FILE} lists invalid block shapes: {shapes}")

    files = sorted(directory.glob(f"*{ACTIVATION_SUFFIX}"))
    dim = sum(c for _, _, c in shapes) if mode == "mlsp" else shapes[-1][2]
    image_ids = []
    vectors = []

    for path in files:
        blocks = _split_blocks(np.fromfile(path, dtype="<f4"), shapes, path)
        vectors.append(mlsp_concat(blocks) if mode == "mlsp" else gap_pool(blocks[-1]))
        image_ids.append(path.name[:-len(ACTIVATION_SUFFIX)])

    LOGGER.info("Pooled %d activation file(s) into %d-d %s features", len(files), dim, mode)
    return FeatureStore(dim, tuple(image_ids), np.array(vectors, dtype=np.float32).reshape(len(image_ids), dim))
