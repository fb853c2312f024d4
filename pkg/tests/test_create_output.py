import arrow
import pytest

from wsiqa import prop, validators
from wsiqa.config import create_output, meta_path, read_json, write_provenance
from wsiqa.schema import EvaluationReportFields, ModelMetadataFields, ProvenanceFields, ReliabilityReportFields


def test_create_output():

    output_schema = {
        "metric": prop.String(),
        "srocc": prop.Number(),
        "repetitions": prop.Integer(),
        "dropout": prop.Boolean(),
    }

    result_body = {
        "metric": "SSIM",
        "srocc": 0.5,
        "repetitions": 3,
        "dropout": False,
    }

    assert create_output(result_body, output_schema) == result_body


def test_create_output_drops_absent_optional_fields():

    output_schema = {
        "median_srocc": prop.Number(),
        "cross_median_srocc": prop.Number(required=False, nullable=True),
    }

    assert create_output({"median_srocc": 0.9, "cross_median_srocc": None}, output_schema) == {"median_srocc": 0.9}


def test_create_output_missing_required_field():

    output_schema = {
        "median_srocc": prop.Number(),
        "median_plcc": prop.Number(),
    }

    with pytest.raises(prop.ValidationError) as e:
        create_output({"median_srocc": 0.9}, output_schema)

    assert e.value.message == "The field 'median_plcc' is required but not found in the body!"


def test_create_output_wrong_type():

    output_schema = {
        "repetitions": prop.Integer(),
    }

    with pytest.raises(prop.ValidationError) as e:
        create_output({"repetitions": "three"}, output_schema)

    assert e.value.message == "The value 'three' from field 'repetitions' is the wrong type, expected: Integer"


def test_create_output_validator_failure():

    output_schema = {
        "icc_variant": prop.String(validators=[validators.ExactLength(3)]),
    }

    with pytest.raises(prop.ValidationError) as e:
        create_output({"icc_variant": "ICC(1,1)"}, output_schema)

    assert e.value.message.startswith("Field 'icc_variant': String is not the correct length!")


def test_create_output_date_time():

    output_schema = {
        "created_at": prop.DateTime(),
    }

    stamp = arrow.get("2024-03-01T12:30:00+00:00")
    assert create_output({"created_at": stamp}, output_schema) == {"created_at": "2024-03-01T12:30:00+00:00"}


def test_create_output_nested_object():

    output_schema = {
        "config": prop.Object({
            "loss": prop.String(),
            "learning_rate": prop.Number(required=False, nullable=True),
        }),
    }

    assert create_output({"config": {"loss": "plcc", "learning_rate": None}}, output_schema) == {
        "config": {"loss": "plcc"}
    }


def test_create_output_array_of_objects():

    output_schema = {
        "failures": prop.Array(prop.Object({
            "image_id": prop.String(),
            "message": prop.String(),
        })),
    }

    body = {"failures": [{"image_id": "I01_10_05", "message": "OpenJPEG is not available"}]}
    assert create_output(body, output_schema) == body


def test_create_output_one_of():

    output_schema = {
        "task_weights": prop.OneOf([
            prop.String(validators=[validators.Choices(["equal"])]),
            prop.Array(prop.Number()),
        ]),
    }

    assert create_output({"task_weights": [0.25, 0.75]}, output_schema) == {"task_weights": [0.25, 0.75]}
    assert create_output({"task_weights": "equal"}, output_schema) == {"task_weights": "equal"}


def test_create_output_model_metadata():

    body = {
        "format_version": 1,
        "architecture": "mtl",
        "tasks": ["PSNR", "SSIM"],
        "config": {"architecture": "mtl", "loss": "plcc", "learning_rate": 1e-4, "batch_size": 64, "epochs": 30,
                   "seed": 0, "dropout": True, "task_weights": "equal", "lr_sweep": False},
        "best_epoch": 12,
        "val_loss": 0.05,
        "created_at": arrow.get("2024-03-01T00:00:00+00:00"),
    }

    output = create_output(body, ModelMetadataFields().all())
    assert output["config"]["learning_rate"] == 1e-4
    assert output["created_at"] == "2024-03-01T00:00:00+00:00"
    assert output["tasks"] == ["PSNR", "SSIM"]


def test_create_output_model_metadata_rejects_unknown_architecture():

    body = {
        "format_version": 1,
        "architecture": "transformer",
        "tasks": ["quality"],
        "best_epoch": 0,
        "val_loss": None,
        "created_at": arrow.utcnow(),
    }

    with pytest.raises(prop.ValidationError) as e:
        create_output(body, ModelMetadataFields().all())

    assert e.value.message == "Field 'architecture': 'transformer' is not one of ['mtl', 'regressor']!"


def test_create_output_evaluation_report():

    body = {
        "repetitions": 3,
        "median_srocc": 0.91,
        "median_plcc": 0.93,
        "runs_csv": "report.json.runs.csv",
        "cross_median_srocc": None,
        "plcc_mapping": "5-parameter logistic fitted per test split",
        "seed": 1,
        "created_at": arrow.get("2024-03-01T00:00:00+00:00"),
    }

    output = create_output(body, EvaluationReportFields().all())
    assert "cross_median_srocc" not in output
    assert "per_kind_median_srocc" not in output
    assert output["median_srocc"] == 0.91


def test_create_output_reliability_report_specialized():

    schema = ReliabilityReportFields().specialize(only=["icc", "icc_variant"])
    assert create_output({"icc": 0.66, "icc_variant": "ICC(1,1)"}, schema) == {"icc": 0.66, "icc_variant": "ICC(1,1)"}


def test_specialize_overrides_do_not_leak():

    fields = ProvenanceFields()
    specialized = fields.specialize(overrides={"seed": {"required": False}}, exclude=["inputs"])

    assert specialized["seed"].required is False
    assert "inputs" not in specialized
    assert fields.all()["seed"].required is True
    assert "inputs" in fields.all()


def test_write_provenance(tmp_path):

    artifact = tmp_path / "scores.csv"
    artifact.write_text("image_id,SSIM\n")

    payload = write_provenance(artifact, "score", {"metrics": ["SSIM"]}, 7, [tmp_path / "manifest.csv"])

    stored = read_json(meta_path(artifact))
    assert stored == payload
    assert stored["command"] == "score"
    assert stored["seed"] == 7
    assert stored["config"] == {"metrics": ["SSIM"]}
    assert stored["inputs"] == [str(tmp_path / "manifest.csv")]
    assert arrow.get(stored["created_at"]) <= arrow.utcnow()
