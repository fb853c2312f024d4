"""Dataset plans (exhaustive and randomized), the manifest CSV and batch execution."""
import collections
import concurrent.futures
import dataclasses
import hashlib
import logging
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pandas as pd

from wsiqa import imgcore, prop
from wsiqa.distortion import (
    LEVELS, VARIANTS, DistortionKind, DistortionParamTable, DistortionSpec, apply_distortion,
)

LOGGER = logging.getLogger(__name__)

MANIFEST_COLUMNS = ["image_id", "ref_path", "dist_path", "kind", "level", "seed"]
REFERENCE_DIR = "references"
IMAGE_DIR = "images"
KADIS_PER_REFERENCE = 5


class ManifestError(prop.ValidationError):
    pass


@dataclasses.dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    ref_path: str
    dist_path: str
    kind: DistortionKind
    level: int
    seed: int

    @property
    def reference_id(self):
        return Path(self.ref_path).stem

    @property
    def spec(self):
        return DistortionSpec(self.kind, self.level, self.seed)


@dataclasses.dataclass(frozen=True)
class DatasetManifest:
    records: Tuple[ManifestRecord, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for record in self.records:
            if record.image_id in seen:
                raise ManifestError(f"Duplicate image_id {record.image_id!r} in manifest")
            seen.add(record.image_id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def image_ids(self):
        return [record.image_id for record in self.records]

    def reference_ids(self):
        return sorted({record.reference_id for record in self.records})

    def image_to_reference(self):
        return {record.image_id: record.reference_id for record in self.records}

    def kinds(self):
        return {record.image_id: record.kind for record in self.records}


@dataclasses.dataclass
class RunReport:
    written: List[str] = dataclasses.field(default_factory=list)
    skipped: List[str] = dataclasses.field(default_factory=list)
    failures: List[Tuple[str, str]] = dataclasses.field(default_factory=list)
    variants: dict = dataclasses.field(default_factory=dict)

    @property
    def ok(self):
        return not self.failures

    def to_body(self):
        return {
            "written": len(self.written),
            "skipped": len(self.skipped),
            "failures": [{"image_id": image_id, "message": message} for image_id, message in self.failures],
            "variants": dict(self.variants),
        }


def derive_seed(ref_id, kind, level):
    digest = hashlib.blake2b(f"{ref_id}|{int(kind)}|{int(level)}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def image_id_for(ref_id, kind, level):
    return f"{ref_id}_{int(kind):02d}_{int(level):02d}"


def _record(ref_id, kind, level):
    image_id = image_id_for(ref_id, kind, level)
    return ManifestRecord(
        image_id=image_id,
        ref_path=f"{REFERENCE_DIR}/{ref_id}.png",
        dist_path=f"{IMAGE_DIR}/{image_id}.png",
        kind=DistortionKind(kind),
        level=int(level),
        seed=derive_seed(ref_id, kind, level),
    )


def _check_refs(refs):
    refs = [str(ref) for ref in refs]
    if not refs:
        raise ManifestError("At least one reference is needed to build a plan")

    duplicates = sorted(ref for ref, count in collections.Counter(refs).items() if count > 1)
    if duplicates:
        raise ManifestError(f"Duplicate reference ids: {duplicates}")

    return refs


def generate_kadid_plan(refs, table=None):
    """Every enabled kind at every level for every reference."""
    refs = _check_refs(refs)
    kinds = (table or DistortionParamTable()).enabled_kinds()

    records = [_record(ref, kind, level) for ref in refs for kind in kinds for level in LEVELS]
    LOGGER.info("Exhaustive plan: %d references x %d kinds x %d levels = %d records",
                len(refs), len(kinds), len(LEVELS), len(records))
    return DatasetManifest(records)


def generate_kadis_plan(refs, rng_seed, table=None, per_reference=KADIS_PER_REFERENCE):
    """``per_reference`` distinct random kinds per reference, each at a uniformly random level."""
    refs = _check_refs(refs)
    kinds = (table or DistortionParamTable()).enabled_kinds()

    if per_reference > len(kinds):
        raise ManifestError(f"Cannot draw {per_reference} distinct kinds from {len(kinds)} enabled kinds")

    rng = np.random.default_rng(rng_seed)
    ordinals = np.array([int(kind) for kind in kinds])
    records = []

    for ref in refs:
        chosen = rng.choice(ordinals, size=per_reference, replace=False)
        levels = rng.integers(LEVELS[0], LEVELS[-1] + 1, size=per_reference)
        records.extend(_record(ref, kind, level) for kind, level in zip(chosen, levels))

    LOGGER.info("Randomized plan: %d references x %d = %d records", len(refs), per_reference, len(records))
    return DatasetManifest(records)


def write_manifest(manifest, path):
    """Write the manifest CSV to ``path``, which may also be an open text stream."""
    if not hasattr(path, "write"):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

    frame = pd.DataFrame({
        "image_id": [record.image_id for record in manifest],
        "ref_path": [record.ref_path for record in manifest],
        "dist_path": [record.dist_path for record in manifest],
        "kind": np.array([int(record.kind) for record in manifest], dtype=np.int64),
        "level": np.array([record.level for record in manifest], dtype=np.int64),
        "seed": np.array([record.seed for record in manifest], dtype=np.uint64),
    }, columns=MANIFEST_COLUMNS)
    frame.to_csv(path, index=False)


def read_manifest(path):
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.EmptyDataError) as error:
        raise ManifestError(f"Cannot read manifest {path}: {error}") from error

    if list(frame.columns) != MANIFEST_COLUMNS:
        raise ManifestError(f"Manifest header must be {','.join(MANIFEST_COLUMNS)}, got {','.join(frame.columns)}")

    records = []
    for line, row in enumerate(frame.itertuples(index=False), start=2):
        try:
            spec = DistortionSpec(DistortionKind.parse(row.kind), int(row.level), int(row.seed))
        except (ValueError, prop.ValidationError) as error:
            reason = getattr(error, "message", str(error))
            raise ManifestError(f"{path} line {line} ({row.image_id}): {reason}") from error

        records.append(ManifestRecord(row.image_id, row.ref_path, row.dist_path, spec.kind, spec.level, spec.seed))

    return DatasetManifest(records)


def prepare_references(ref_paths, out_dir, target_w=512, target_h=384):
    """Resize-and-crop each reference into ``out_dir/references``; returns the reference ids."""
    ref_ids = [Path(path).stem for path in ref_paths]
    _check_refs(ref_ids)

    for ref_id, path in zip(ref_ids, ref_paths):
        prepared = imgcore.resize_and_crop(imgcore.read_image(path), target_w, target_h)
        imgcore.write_png(prepared, Path(out_dir) / REFERENCE_DIR / f"{ref_id}.png")

    LOGGER.info("Prepared %d references at %dx%d", len(ref_ids), target_w, target_h)
    return ref_ids


def _run_record(job):
    record, ref_dir, out_dir, table = job
    try:
        reference = imgcore.read_image(Path(ref_dir) / record.ref_path)
        distorted = apply_distortion(reference, record.spec, table)
        imgcore.write_png(distorted, Path(out_dir) / record.dist_path)
    except (prop.ValidationError, OSError, ValueError) as error:
        return record.image_id, getattr(error, "message", str(error))

    return record.image_id, None


def run_manifest(manifest, ref_dir, out_dir, workers=1, table=None, skip_existing=False):
    report = RunReport()
    jobs = []

    for record in manifest:
        if skip_existing and (Path(out_dir) / record.dist_path).exists():
            report.skipped.append(record.image_id)
            continue
        jobs.append((record, ref_dir, out_dir, table))
        if record.kind in VARIANTS:
            report.variants[record.image_id] = VARIANTS[record.kind]

    if workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_record, jobs, chunksize=max(1, len(jobs) // (workers * 4))))
    else:
        results = [_run_record(job) for job in jobs]

    for image_id, failure in results:
        if failure is None:
            report.written.append(image_id)
        else:
            LOGGER.warning("Distortion of %s failed: %s", image_id, failure)
            report.failures.append((image_id, failure))

    LOGGER.info("Manifest run: %d written, %d skipped, %d failed",
                len(report.written), len(report.skipped), len(report.failures))
    return report
