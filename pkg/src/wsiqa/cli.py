"""``wsiqa`` command line: distortion, scoring, normalization, training, evaluation and reliability stages."""
import argparse
import json
import logging
import sys
from pathlib import Path

import arrow
import numpy as np

from wsiqa import evalstat, features, friqa, manifest, neuro, prop, scorepipe, selftest, training
from wsiqa.config import (ExitCode, create_output, default_workers, load_config, write_json,
                          write_provenance)
from wsiqa.distortion import DistortionParamTable
from wsiqa.json_schema import document
from wsiqa.schema import (EvaluationReportFields, ModelMetadataFields, ParamTableFields, PipelineConfigFields,
                          ProvenanceFields, ReliabilityReportFields, TrainConfigFields)
from wsiqa.scoretable import LOWER, ScoreTable, ingest_external_scores

LOGGER = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
PLCC_MAPPING = "5-parameter logistic fitted per test split"

SCHEMAS = {
    "config": PipelineConfigFields,
    "params": ParamTableFields,
    "train": TrainConfigFields,
    "report": EvaluationReportFields,
    "reliability": ReliabilityReportFields,
    "model-meta": ModelMetadataFields,
    "provenance": ProvenanceFields,
}


def _configure_logging(args):
    level = logging.INFO
    if args.quiet:
        level = logging.WARNING
    elif args.verbose:
        level = logging.DEBUG

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("wsiqa")
    root.handlers = [handler]
    root.setLevel(level)


def _args_body(args):
    return {key: (str(value) if isinstance(value, Path) else value)
            for key, value in sorted(vars(args).items()) if key != "handler"}


def _pipeline(args, **overrides):
    return load_config(getattr(args, "config", None), PipelineConfigFields().all(), overrides)


def _workers(args, pipeline):
    return args.workers or pipeline["workers"] or default_workers()


def _train_config(args, pipeline, architecture):
    body = dict(pipeline["train"] or {})
    flags = {
        "loss": args.loss,
        "learning_rate": args.lr,
        "batch_size": args.batch_size,
        "epochs": args.epochs,
        "task_weights": args.task_weights,
    }
    body.update({name: value for name, value in flags.items() if value is not None})
    if args.no_dropout:
        body["dropout"] = False
    if args.lr_sweep:
        body["lr_sweep"] = True
    body["architecture"] = architecture
    body["seed"] = pipeline["seed"]
    return training.resolve_config(body)


def _image_to_reference(args):
    if getattr(args, "manifest", None) is None:
        return {}
    return manifest.read_manifest(args.manifest).image_to_reference()


def _splits(args, pipeline, image_ids, image_to_reference, seed=None):
    if getattr(args, "splits", None) is not None:
        assignment = evalstat.SplitAssignment.read(args.splits)
    else:
        references = sorted({image_to_reference.get(image_id, image_id) for image_id in image_ids})
        assignment = evalstat.split_by_content(references, pipeline["split_ratios"],
                                               pipeline["seed"] if seed is None else seed)
    return evalstat.assign_images(assignment, image_ids, image_to_reference)


def _print_plan(command, config, inputs, outputs, **details):
    """Print what a stage would read and write, as JSON on stdout; nothing is written."""
    plan = {
        "command": command,
        "config": config,
        "inputs": [str(path) for path in inputs if path is not None],
        "outputs": [str(path) for path in outputs if path is not None],
        **details,
    }
    print(json.dumps(plan, indent=2, sort_keys=True, default=str))
    return ExitCode.OK


def _reference_paths(directory):
    if not Path(directory).is_dir():
        raise manifest.ManifestError(f"Reference directory {directory} does not exist")

    paths = sorted(path for path in Path(directory).iterdir() if path.suffix.lower() in IMAGE_SUFFIXES)
    if not paths:
        raise manifest.ManifestError(f"No reference images ({', '.join(IMAGE_SUFFIXES)}) in {directory}")
    return paths


def cmd_distort(args):
    pipeline = _pipeline(args, seed=args.seed, params=args.params, workers=args.workers,
                         target_width=args.width, target_height=args.height)
    table = DistortionParamTable.load(pipeline["params"])
    ref_paths = _reference_paths(args.refs)
    ref_ids = [path.stem for path in ref_paths]

    if args.plan == "kadid":
        plan = manifest.generate_kadid_plan(ref_ids, table)
    else:
        plan = manifest.generate_kadis_plan(ref_ids, pipeline["seed"], table, args.per_reference)

    if args.dry_run:
        manifest.write_manifest(plan, sys.stdout)
        return ExitCode.OK

    out = Path(args.out)
    manifest.prepare_references(ref_paths, out, pipeline["target_width"], pipeline["target_height"])
    manifest_path = out / "manifest.csv"
    manifest.write_manifest(plan, manifest_path)
    report = manifest.run_manifest(plan, out, out, _workers(args, pipeline), table, args.skip_existing)

    report_path = out / "run_report.json"
    write_json(report_path, report.to_body())
    for artifact in (manifest_path, report_path):
        write_provenance(artifact, "distort", {"pipeline": pipeline, "args": _args_body(args)}, pipeline["seed"],
                         ref_paths)

    if not report.ok:
        LOGGER.warning("%d of %d images failed; see %s", len(report.failures), len(plan), report_path)
    return ExitCode.OK


def cmd_split(args):
    pipeline = _pipeline(args, seed=args.seed, split_ratios=args.ratios)

    if args.manifest is not None:
        references = manifest.read_manifest(args.manifest).reference_ids()
        source = args.manifest
    else:
        references = ScoreTable.read(args.ids).image_ids
        source = args.ids

    assignment = evalstat.split_by_content(references, pipeline["split_ratios"], pipeline["seed"])
    if args.dry_run:
        return _print_plan("split", pipeline, [source], [args.out], counts=assignment.counts())

    assignment.write(args.out)
    write_provenance(args.out, "split", {"pipeline": pipeline, "args": _args_body(args)}, pipeline["seed"], [source])
    LOGGER.info("Split %d references: %s", len(assignment.assignment), assignment.counts())
    return ExitCode.OK


def cmd_score(args):
    pipeline = _pipeline(args, metrics=args.metrics, workers=args.workers)
    plan = manifest.read_manifest(args.manifest)
    root = Path(args.root) if args.root else Path(args.manifest).parent

    if args.dry_run:
        return _print_plan("score", pipeline, [args.manifest], [args.out], images=len(plan), root=root,
                           workers=_workers(args, pipeline))

    table = friqa.score_dataset(plan, pipeline["metrics"], root, _workers(args, pipeline))
    table.write(args.out)
    write_provenance(args.out, "score", {"pipeline": pipeline, "args": _args_body(args)}, pipeline["seed"],
                     [args.manifest])
    return ExitCode.OK


def cmd_ingest(args):
    polarity = {metric: LOWER for metric in args.lower_better or []}
    merged, _ = ingest_external_scores(args.external, ScoreTable.read(args.scores), args.allow_partial,
                                       polarity)
    if args.dry_run:
        return _print_plan("ingest", None, [args.scores, args.external], [args.out], images=len(merged),
                           metrics=list(merged.metrics))

    merged.write(args.out)
    write_provenance(args.out, "ingest", {"args": _args_body(args)}, None, [args.scores, args.external])
    return ExitCode.OK


def cmd_normalize(args):
    pipeline = _pipeline(args, seed=args.seed, he_bins=args.bins)
    scores = ScoreTable.read(args.scores)
    grouped = _splits(args, pipeline, scores.image_ids, _image_to_reference(args))
    transforms_path = args.transforms or f"{args.out}.transforms.json"
    inputs = [path for path in (args.scores, args.splits, args.manifest) if path is not None]

    if args.dry_run:
        return _print_plan("normalize", pipeline, inputs, [args.out, transforms_path], method=args.method,
                           train_images=len(grouped["train"]), metrics=list(scores.metrics))

    normalized, transforms = scorepipe.normalize_table(scores, grouped["train"], args.method, pipeline["he_bins"])
    normalized.write(args.out)
    scorepipe.save_transforms(transforms, transforms_path)

    for artifact in (args.out, transforms_path):
        write_provenance(artifact, "normalize", {"pipeline": pipeline, "args": _args_body(args)}, pipeline["seed"],
                         inputs)
    return ExitCode.OK


def cmd_features(args):
    store = features.ingest_activations(args.activations, args.mode)
    if args.dry_run:
        return _print_plan("features", None, [args.activations], [args.out], mode=args.mode, images=len(store),
                           dim=store.dim)

    features.write_store(store, args.out)
    write_provenance(args.out, "features", {"args": _args_body(args)}, None, [args.activations])
    return ExitCode.OK


def _train(args, architecture, tasks):
    pipeline = _pipeline(args, seed=args.seed)
    config = _train_config(args, pipeline, architecture)
    labels = ScoreTable.read(args.labels)
    grouped = _splits(args, pipeline, labels.image_ids, _image_to_reference(args))
    inputs = [path for path in (args.features, args.labels, args.splits, args.manifest) if path is not None]

    if args.dry_run:
        return _print_plan(f"train-{architecture}", {"pipeline": pipeline, "train": config}, inputs,
                           [args.out, args.history], tasks=list(tasks or labels.metrics),
                           split_sizes={name: len(ids) for name, ids in grouped.items()})

    store = features.read_store(args.features)
    result = training.fit(store, labels, grouped, config, tasks)
    neuro.save_model(result.model, args.out, result.metadata())

    if args.history:
        training.write_history(result.history, args.history)

    artifacts = [args.out] + ([args.history] if args.history else [])
    for artifact in artifacts:
        write_provenance(artifact, f"train-{architecture}", {"pipeline": pipeline, "train": config,
                                                             "args": _args_body(args)}, pipeline["seed"], inputs)
    return ExitCode.OK


def cmd_train_mtl(args):
    return _train(args, "mtl", args.tasks)


def cmd_train_regressor(args):
    labels = ScoreTable.read(args.labels)
    return _train(args, "regressor", [args.label_column or labels.metrics[0]])


def _score_predictions(model, store, table, column):
    ids = [image_id for image_id in table.image_ids if image_id in store]
    if len(ids) < len(table):
        LOGGER.warning("%d labelled image(s) have no features and are not scored", len(table) - len(ids))

    predictions = neuro.predict(model, store.matrix(ids))[:, 0]
    target = table.select(ids).column(column)
    return ids, predictions, target


def cmd_evaluate(args):
    pipeline = _pipeline(args, seed=args.seed, repetitions=args.reps, split_ratios=args.ratios)
    config = _train_config(args, pipeline, "regressor")
    labels = ScoreTable.read(args.labels)
    column = args.label_column or labels.metrics[0]
    image_to_reference = _image_to_reference(args)
    kinds = {record.image_id: record.kind.name for record in manifest.read_manifest(args.manifest)} \
        if args.manifest else {}
    references = sorted({image_to_reference.get(image_id, image_id) for image_id in labels.image_ids})

    if args.dry_run:
        plan = {
            "repetitions": pipeline["repetitions"],
            "seeds": [pipeline["seed"] + k for k in range(pipeline["repetitions"])],
            "references": len(references),
            "images": len(labels),
            "label_column": column,
            "split_ratios": pipeline["split_ratios"],
            "train": config,
            "cross_dataset": args.test_labels is not None,
        }
        print(json.dumps(plan, indent=2, sort_keys=True))
        return ExitCode.OK

    store = features.read_store(args.features)
    cross = None
    if args.test_features and args.test_labels:
        cross = (features.read_store(args.test_features), ScoreTable.read(args.test_labels))

    def run(seed):
        assignment = evalstat.split_by_content(references, pipeline["split_ratios"], seed)
        grouped = evalstat.assign_images(assignment, labels.image_ids, image_to_reference)
        result = training.fit(store, labels, grouped, dict(config, seed=seed), [column])

        ids, predictions, target = _score_predictions(result.model, store, labels.select(grouped["test"]), column)
        row = {
            "srocc": evalstat.srocc(predictions, target),
            "plcc": evalstat.plcc_mapped(predictions, target),
            "best_epoch": result.best_epoch,
            "val_loss": result.val_loss,
        }

        if kinds:
            by_kind = evalstat.per_kind_srocc(predictions, target, [kinds.get(image_id) for image_id in ids])
            row.update({f"srocc_{kind}": value for kind, value in by_kind.items() if kind is not None})

        if cross is not None:
            cross_store, cross_labels = cross
            _, cross_predictions, cross_target = _score_predictions(
                result.model, cross_store, cross_labels, cross_labels.metrics[0])
            row["cross_srocc"] = evalstat.srocc(cross_predictions, cross_target)
            row["cross_plcc"] = evalstat.plcc_mapped(cross_predictions, cross_target)

        return row

    outcome = evalstat.repeat_eval(run, pipeline["repetitions"], pipeline["seed"])
    runs = outcome.to_frame()
    runs_path = args.runs_out or f"{args.out}.runs.csv"
    Path(runs_path).parent.mkdir(parents=True, exist_ok=True)
    runs.to_csv(runs_path, index=False)

    per_kind = {column_name[len("srocc_"):]: float(np.nanmedian(runs[column_name]))
                for column_name in runs.columns if column_name.startswith("srocc_")}
    body = {
        "repetitions": pipeline["repetitions"],
        "median_srocc": outcome.median_srocc,
        "median_plcc": outcome.median_plcc,
        "runs_csv": str(runs_path),
        "cross_median_srocc": float(runs["cross_srocc"].median()) if cross is not None else None,
        "cross_median_plcc": float(runs["cross_plcc"].median()) if cross is not None else None,
        "per_kind_median_srocc": per_kind or None,
        "plcc_mapping": PLCC_MAPPING,
        "seed": pipeline["seed"],
        "config": {"pipeline": pipeline, "train": config},
        "created_at": arrow.utcnow(),
    }
    write_json(args.out, create_output(body, EvaluationReportFields().all()))

    inputs = [path for path in (args.features, args.labels, args.manifest, args.test_features, args.test_labels)
              if path is not None]
    for artifact in (args.out, runs_path):
        write_provenance(artifact, "evaluate", body["config"], pipeline["seed"], inputs)

    LOGGER.info("Median SROCC %.4f, median PLCC %.4f over %d repetitions",
                outcome.median_srocc, outcome.median_plcc, pipeline["repetitions"])
    return ExitCode.OK


def cmd_reliability(args):
    ratings = evalstat.read_ratings(args.ratings)
    if args.dry_run:
        return _print_plan("reliability", None, [args.ratings], [args.out, args.dmos_out], images=len(ratings),
                           resamples=args.resamples, seed=args.seed)

    bootstrap = evalstat.intergroup_bootstrap(ratings, args.resamples, args.seed)

    body = {
        "images": len(ratings),
        "ratings": sum(len(values) for values in ratings.values()),
        "icc": evalstat.icc(evalstat.ratings_matrix(ratings)),
        "icc_variant": evalstat.ICC_VARIANT,
        "bootstrap_resamples": args.resamples,
        "bootstrap_srocc": bootstrap["srocc"],
        "bootstrap_mae": bootstrap["mae"],
        "bootstrap_rmse": bootstrap["rmse"],
        "seed": args.seed,
        "created_at": arrow.utcnow(),
    }
    write_json(args.out, create_output(body, ReliabilityReportFields().all()))
    write_provenance(args.out, "reliability", {"args": _args_body(args)}, args.seed, [args.ratings])

    if args.dmos_out:
        evalstat.dmos_table(ratings).write(args.dmos_out)
        write_provenance(args.dmos_out, "reliability", {"args": _args_body(args)}, args.seed, [args.ratings])

    LOGGER.info("ICC %.3f, inter-group SROCC %.3f MAE %.3f RMSE %.3f", body["icc"], bootstrap["srocc"],
                bootstrap["mae"], bootstrap["rmse"])
    return ExitCode.OK


def cmd_selftest(args):
    results = selftest.run_selftest(args.seed)
    if not args.quiet:
        for result in results:
            print(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")

    return ExitCode.OK if all(result.passed for result in results) else ExitCode.VALIDATION_ERROR


def cmd_schema(args):
    print(json.dumps(document(SCHEMAS[args.name](), title=args.name), indent=2))
    return ExitCode.OK


def _add_train_flags(parser):
    parser.add_argument("--features", required=True, help="Feature store (.mlsp)")
    parser.add_argument("--labels", required=True, help="Score table CSV holding the training targets")
    parser.add_argument("--manifest", help="Manifest mapping images to references (content-grouped splits)")
    parser.add_argument("--loss", choices=["plcc", "mse", "mae"])
    parser.add_argument("--lr", type=float, help="Adam learning rate")
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--task-weights", type=float, nargs="+")
    parser.add_argument("--no-dropout", action="store_true")
    parser.add_argument("--lr-sweep", action="store_true", help="Pick the learning rate from 1e-1..1e-5")
    parser.add_argument("--seed", type=int)


def _add_dry_run(parser):
    parser.add_argument("--dry-run", action="store_true", help="Print the resolved config, inputs and outputs and stop")


def build_parser():
    parser = argparse.ArgumentParser(prog="wsiqa", description=__doc__)
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="Only warnings and errors on stderr")
    verbosity.add_argument("--verbose", action="store_true", help="Debug logging on stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    distort = commands.add_parser("distort", help="Prepare references and render a distortion plan")
    distort.add_argument("--refs", required=True, help="Directory of pristine reference images")
    distort.add_argument("--plan", choices=["kadid", "kadis"], default="kadid")
    distort.add_argument("--out", required=True)
    distort.add_argument("--seed", type=int)
    distort.add_argument("--params", help="Distortion parameter table (JSON)")
    distort.add_argument("--per-reference", type=int, default=manifest.KADIS_PER_REFERENCE)
    distort.add_argument("--width", type=int)
    distort.add_argument("--height", type=int)
    distort.add_argument("--workers", type=int)
    distort.add_argument("--skip-existing", action="store_true")
    distort.add_argument("--dry-run", action="store_true", help="Print the manifest to stdout and stop")
    distort.add_argument("--config")
    distort.set_defaults(handler=cmd_distort)

    split = commands.add_parser("split", help="Assign references to train/val/test")
    source = split.add_mutually_exclusive_group(required=True)
    source.add_argument("--manifest")
    source.add_argument("--ids", help="Score table whose image ids are their own references")
    split.add_argument("--ratios", type=float, nargs=3)
    split.add_argument("--seed", type=int)
    split.add_argument("--out", required=True)
    split.add_argument("--config")
    _add_dry_run(split)
    split.set_defaults(handler=cmd_split)

    score = commands.add_parser("score", help="Score a manifest with built-in full-reference metrics")
    score.add_argument("--manifest", required=True)
    score.add_argument("--root", help="Directory the manifest paths are relative to (default: its own)")
    score.add_argument("--metrics", nargs="+", choices=sorted(friqa.BUILTIN_METRICS))
    score.add_argument("--workers", type=int)
    score.add_argument("--out", required=True)
    score.add_argument("--config")
    _add_dry_run(score)
    score.set_defaults(handler=cmd_score)

    ingest = commands.add_parser("ingest", help="Merge externally computed metric columns")
    ingest.add_argument("--scores", required=True)
    ingest.add_argument("--external", required=True)
    ingest.add_argument("--lower-better", nargs="+", help="External metrics where lower means better quality")
    ingest.add_argument("--allow-partial", action="store_true")
    ingest.add_argument("--out", required=True)
    _add_dry_run(ingest)
    ingest.set_defaults(handler=cmd_ingest)

    normalize = commands.add_parser("normalize", help="Fit HE or z-score on the training split and apply it")
    normalize.add_argument("--scores", required=True)
    normalize.add_argument("--splits", help="Split CSV; computed from --seed and the ratios when absent")
    normalize.add_argument("--manifest")
    normalize.add_argument("--method", choices=scorepipe.METHODS, default="he")
    normalize.add_argument("--bins", type=int)
    normalize.add_argument("--seed", type=int)
    normalize.add_argument("--out", required=True)
    normalize.add_argument("--transforms")
    normalize.add_argument("--config")
    _add_dry_run(normalize)
    normalize.set_defaults(handler=cmd_normalize)

    pooled = commands.add_parser("features", help="Pool raw activation dumps into a feature store")
    pooled.add_argument("--activations", required=True)
    pooled.add_argument("--mode", choices=["mlsp", "gap"], default="mlsp")
    pooled.add_argument("--out", required=True)
    _add_dry_run(pooled)
    pooled.set_defaults(handler=cmd_features)

    train_mtl = commands.add_parser("train-mtl", help="Train one head per metric column")
    _add_train_flags(train_mtl)
    train_mtl.add_argument("--tasks", nargs="+", help="Metric columns to learn (default: all)")
    train_mtl.add_argument("--splits")
    train_mtl.add_argument("--out", required=True)
    train_mtl.add_argument("--history")
    train_mtl.add_argument("--config")
    _add_dry_run(train_mtl)
    train_mtl.set_defaults(handler=cmd_train_mtl)

    train_regressor = commands.add_parser("train-regressor", help="Train the quality regressor")
    _add_train_flags(train_regressor)
    train_regressor.add_argument("--label-column")
    train_regressor.add_argument("--splits")
    train_regressor.add_argument("--out", required=True)
    train_regressor.add_argument("--history")
    train_regressor.add_argument("--config")
    _add_dry_run(train_regressor)
    train_regressor.set_defaults(handler=cmd_train_regressor)

    evaluate = commands.add_parser("evaluate", help="Median SROCC/PLCC over repeated content-grouped splits")
    _add_train_flags(evaluate)
    evaluate.add_argument("--label-column")
    evaluate.add_argument("--reps", type=int)
    evaluate.add_argument("--ratios", type=float, nargs=3)
    evaluate.add_argument("--test-features", help="Second dataset scored by every repetition's model")
    evaluate.add_argument("--test-labels")
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--runs-out")
    evaluate.add_argument("--dry-run", action="store_true", help="Print the protocol to stdout and stop")
    evaluate.add_argument("--config")
    evaluate.set_defaults(handler=cmd_evaluate)

    reliability = commands.add_parser("reliability", help="ICC and inter-group bootstrap of raw ratings")
    reliability.add_argument("--ratings", required=True)
    reliability.add_argument("--resamples", type=int, default=100)
    reliability.add_argument("--seed", type=int, default=0)
    reliability.add_argument("--out", required=True)
    reliability.add_argument("--dmos-out")
    _add_dry_run(reliability)
    reliability.set_defaults(handler=cmd_reliability)

    check = commands.add_parser("selftest", help="Run the built-in property checks")
    check.add_argument("--seed", type=int, default=0)
    check.set_defaults(handler=cmd_selftest)

    schema = commands.add_parser("schema", help="Print the JSON schema of a configuration or report")
    schema.add_argument("name", choices=sorted(SCHEMAS))
    schema.set_defaults(handler=cmd_schema)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging(args)

    try:
        return int(args.handler(args))
    except prop.ValidationError as error:
        LOGGER.error("%s", error.message)
        return int(ExitCode.VALIDATION_ERROR)
    except Exception:  # pylint: disable=broad-except
        LOGGER.exception("%s failed", args.command)
        return int(ExitCode.RUNTIME_FAILURE)


if __name__ == "__main__":
    sys.exit(main())
