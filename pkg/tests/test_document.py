import json

from wsiqa import prop, validators
from wsiqa.json_schema import document
from wsiqa.schema import EvaluationReportFields, ParamTableFields, PipelineConfigFields, TrainConfigFields


def test_document_basic_props():

    schema = {
        "metric": prop.String("Metric column."),
        "srocc": prop.Number(required=False, nullable=True),
        "repetitions": prop.Integer(validators=[validators.Range(minimum=1)]),
        "dropout": prop.Boolean(required=False, default=True),
    }

    documentation = document(schema, title="basic")
    assert json.loads(json.dumps(documentation)) == {
        "$schema": "http://json-schema.org/draft-07/schema#",
        "title": "basic",
        "type": "object",
        "properties": {
            "metric": {"type": "string", "description": "Metric column."},
            "srocc": {"type": ["number", "null"]},
            "repetitions": {"type": "integer", "minimum": 1},
            "dropout": {"type": "boolean", "default": True},
        },
        "required": ["metric", "repetitions"],
        "additionalProperties": False,
    }


def test_document_exclusive_range_and_choices():

    schema = {
        "learning_rate": prop.Number(validators=[validators.Range(minimum=0, exclusive_minimum=True)]),
        "loss": prop.String(validators=[validators.Choices(["plcc", "mse", "mae"])]),
    }

    properties = document(schema, title="ranges")["properties"]
    assert properties["learning_rate"] == {"type": "number", "exclusiveMinimum": 0}
    assert properties["loss"] == {"type": "string", "enum": ["plcc", "mse", "mae"]}


def test_document_array_length():

    schema = {
        "split_ratios": prop.Array(prop.Number(), validators=[validators.ExactLength(3)]),
    }

    assert document(schema, title="ratios")["properties"]["split_ratios"] == {
        "type": "array",
        "items": {"type": "number"},
        "minItems": 3,
        "maxItems": 3,
    }


def test_document_date_time_format():

    properties = document({"created_at": prop.DateTime()}, title="stamp")["properties"]
    assert properties["created_at"] == {"type": "string", "format": "date-time"}


def test_document_nested_object_uses_definitions():

    schema = {
        "train": prop.Object({"epochs": prop.Integer()}, "Training stage parameters."),
    }

    documentation = document(schema, title="pipeline")
    assert documentation["properties"]["train"] == {
        "$ref": "#/definitions/pipeline_train",
        "description": "Training stage parameters.",
    }
    assert documentation["definitions"]["pipeline_train"] == {
        "type": "object",
        "properties": {"epochs": {"type": "integer"}},
        "required": ["epochs"],
        "additionalProperties": False,
    }


def test_document_free_form_object():

    properties = document({"levels": prop.Object(None, required=False)}, title="free")["properties"]
    assert properties["levels"] == {"type": "object"}


def test_document_one_of():

    schema = {
        "task_weights": prop.OneOf([
            prop.String(validators=[validators.Choices(["equal"])]),
            prop.Array(prop.Number(validators=[validators.Range(minimum=0)])),
        ], description="Task weights."),
    }

    assert document(schema, title="weights")["properties"]["task_weights"] == {
        "oneOf": [
            {"type": "string", "enum": ["equal"]},
            {"type": "array", "items": {"type": "number", "minimum": 0}},
        ],
        "description": "Task weights.",
    }


def test_document_train_config_fields():

    documentation = document(TrainConfigFields())
    assert documentation["title"] == "TrainConfigFields"
    assert documentation["required"] == []
    assert documentation["properties"]["batch_size"]["default"] == 64
    assert documentation["properties"]["architecture"]["enum"] == ["mtl", "regressor"]
    assert "definitions" not in documentation


def test_document_pipeline_config_is_serializable():

    documentation = json.loads(json.dumps(document(PipelineConfigFields(), title="config")))
    assert documentation["properties"]["train"]["$ref"] == "#/definitions/config_train"
    assert "loss" in documentation["definitions"]["config_train"]["properties"]
    assert documentation["properties"]["split_ratios"]["default"] == [0.6, 0.2, 0.2]


def test_document_reports():

    evaluation = document(EvaluationReportFields(), title="report")
    assert "median_srocc" in evaluation["required"]
    assert "cross_median_srocc" not in evaluation["required"]

    params = document(ParamTableFields(), title="params")
    assert params["properties"]["excluded"]["type"] == ["array", "null"]
