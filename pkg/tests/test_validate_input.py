import json

import pytest

from wsiqa import prop, validators
from wsiqa.config import ConfigError, ExitCode, load_config, parse_input, validate_input
from wsiqa.schema import PipelineConfigFields, TrainConfigFields


def test_validate_input():

    input_schema = {
        "metric": prop.String(),
        "dropout": prop.Boolean()
    }

    given_config = {
        "metric": "SSIM",
        "dropout": True,
    }

    status, reject_dict = validate_input(given_config, input_schema)
    assert reject_dict == {}
    assert status is ExitCode.OK


def test_validate_input_not_an_object():

    status, reject_dict = validate_input(["SSIM"], {"metric": prop.String()})
    assert reject_dict == {
        "message": "Improperly formatted configuration. Must be a JSON object, even if it's just {}!"
    }
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_unexpected_field():

    input_schema = {
        "metric": prop.String(),
        "dropout": prop.Boolean()
    }

    given_config = {
        "metric": "SSIM",
        "dropout": True,
        "momentum": 0.9
    }

    status, reject_dict = validate_input(given_config, input_schema)
    assert reject_dict == {
        "message": "An unexpected field was found: momentum"
    }
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_multiple_unexpected_fields():

    input_schema = {
        "metric": prop.String(),
    }

    given_config = {
        "metric": "SSIM",
        "momentum": 0.9,
        "nesterov": True
    }

    status, reject_dict = validate_input(given_config, input_schema)
    assert reject_dict == {
        "message": "Unexpected fields were found: ['momentum', 'nesterov']"
    }
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_missing_field():

    input_schema = {
        "metric": prop.String(required=True),
        "dropout": prop.Boolean(required=False)
    }

    status, reject_dict = validate_input({"dropout": True}, input_schema)
    assert reject_dict == {
        "message": "A required field is missing: metric"
    }
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_multiple_missing_fields():

    input_schema = {
        "metric": prop.String(required=True),
        "loss": prop.String(required=True),
        "dropout": prop.Boolean(required=False)
    }

    status, reject_dict = validate_input({"dropout": True}, input_schema)
    assert reject_dict == {
        "message": "Required fields are missing: ['metric', 'loss']",
    }
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_wrong_type():

    input_schema = {
        "metric": prop.String(),
        "dropout": prop.Boolean()
    }

    given_config = {
        "metric": ["SSIM", "GMSD"],
        "dropout": True,
    }

    status, reject_dict = validate_input(given_config, input_schema)
    assert reject_dict == {
        "message": "A field has an error.",
        "field_error_messages": {
            "metric": "The value ['SSIM', 'GMSD'] from field 'metric' is the wrong type, expected: String"
        }
    }
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_multiple_field_errors():

    input_schema = {
        "epochs": prop.Integer(validators=[validators.Range(minimum=0)]),
        "loss": prop.String(validators=[validators.Choices(["plcc", "mse", "mae"])]),
    }

    status, reject_dict = validate_input({"epochs": -1, "loss": "huber"}, input_schema)
    assert reject_dict == {
        "message": "Multiple fields have an error.",
        "field_error_messages": {
            "epochs": "Field 'epochs': -1 must be >= 0!",
            "loss": "Field 'loss': 'huber' is not one of ['plcc', 'mse', 'mae']!",
        }
    }
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_integer_rejects_fraction():

    status, reject_dict = validate_input({"batch_size": 6.5}, {"batch_size": prop.Integer()})
    assert status is ExitCode.VALIDATION_ERROR
    assert reject_dict["field_error_messages"] == {
        "batch_size": "The value 6.5 from field 'batch_size' is the wrong type, expected: Integer"
    }


def test_validate_input_integer_rejects_boolean():

    status, _ = validate_input({"batch_size": True}, {"batch_size": prop.Integer()})
    assert status is ExitCode.VALIDATION_ERROR


def test_validate_input_nullable():

    input_schema = {
        "learning_rate": prop.Number(nullable=True),
        "seed": prop.Integer(nullable=False),
    }

    status, reject_dict = validate_input({"learning_rate": None, "seed": None}, input_schema)
    assert status is ExitCode.VALIDATION_ERROR
    assert reject_dict["field_error_messages"] == {
        "seed": "Non nullable field 'seed' is null!"
    }


def test_validate_input_one_of():

    input_schema = {
        "task_weights": prop.OneOf([
            prop.String(validators=[validators.Choices(["equal"])]),
            prop.Array(prop.Number()),
        ])
    }

    status, _ = validate_input({"task_weights": "equal"}, input_schema)
    assert status is ExitCode.OK

    status, _ = validate_input({"task_weights": [0.5, 0.5]}, input_schema)
    assert status is ExitCode.OK

    status, reject_dict = validate_input({"task_weights": "uncertainty"}, input_schema)
    assert status is ExitCode.VALIDATION_ERROR
    assert reject_dict["field_error_messages"]["task_weights"].startswith(
        "The value 'uncertainty' from field 'task_weights' matches none of the allowed forms: "
    )


def test_validate_input_monotone_ladder():

    input_schema = {
        "sigma": prop.Array(prop.Number(), validators=[validators.ExactLength(5), validators.MonotoneLadder()]),
    }

    status, _ = validate_input({"sigma": [0.1, 0.5, 1, 2, 5]}, input_schema)
    assert status is ExitCode.OK

    status, _ = validate_input({"sigma": [100, 80, 60, 40, 20]}, input_schema)
    assert status is ExitCode.OK

    status, reject_dict = validate_input({"sigma": [0.1, 2, 0.5, 1, 5]}, input_schema)
    assert status is ExitCode.VALIDATION_ERROR
    assert reject_dict["field_error_messages"]["sigma"] == \
        "Field 'sigma': [0.1, 2.0, 0.5, 1.0, 5.0] is not a monotone severity ladder!"


def test_validate_input_unit_sum():

    input_schema = {
        "split_ratios": prop.Array(prop.Number(), validators=[validators.UnitSum()]),
    }

    status, _ = validate_input({"split_ratios": [0.6, 0.2, 0.2]}, input_schema)
    assert status is ExitCode.OK

    status, reject_dict = validate_input({"split_ratios": [0.6, 0.2, 0.4]}, input_schema)
    assert status is ExitCode.VALIDATION_ERROR
    assert "does not sum to 1" in reject_dict["field_error_messages"]["split_ratios"]


def test_parse_input_fills_train_defaults():

    parsed = parse_input({}, TrainConfigFields().all())
    assert parsed == {
        "architecture": "regressor",
        "loss": "plcc",
        "learning_rate": None,
        "batch_size": 64,
        "epochs": 30,
        "seed": 0,
        "dropout": True,
        "task_weights": "equal",
        "lr_sweep": False,
    }


def test_parse_input_raises_config_error():

    with pytest.raises(ConfigError) as e:
        parse_input({"loss": "huber"}, TrainConfigFields().all())

    assert e.value.message == "A field has an error. loss: Field 'loss': 'huber' is not one of ['plcc', 'mse', 'mae']!"
    assert e.value.reject_dict["field_error_messages"] == {
        "loss": "Field 'loss': 'huber' is not one of ['plcc', 'mse', 'mae']!"
    }


def test_load_config_flags_override_file(tmp_path):

    path = tmp_path / "pipeline.json"
    path.write_text(json.dumps({"seed": 3, "repetitions": 10, "train": {"loss": "mse"}}))

    config = load_config(path, PipelineConfigFields().all(), {"seed": 7, "repetitions": None})

    assert config["seed"] == 7
    assert config["repetitions"] == 10
    assert config["train"]["loss"] == "mse"
    assert config["train"]["batch_size"] == 64
    assert config["split_ratios"] == [0.6, 0.2, 0.2]


def test_load_config_without_file():

    config = load_config(None, PipelineConfigFields().all())
    assert config["metrics"] == ["PSNR", "SSIM", "MSSSIM", "GMSD"]
    assert config["he_bins"] == 256
    assert config["train"] is None


def test_load_config_rejects_invalid_json(tmp_path):

    path = tmp_path / "broken.json"
    path.write_text("{\"seed\": ")

    with pytest.raises(ConfigError) as e:
        load_config(path, PipelineConfigFields().all())

    assert e.value.message.startswith(f"{path} is not valid JSON")


def test_load_config_rejects_missing_params_file(tmp_path):

    with pytest.raises(ConfigError) as e:
        load_config(None, PipelineConfigFields().all(), {"params": str(tmp_path / "missing.json")})

    assert "does not exist" in e.value.message


def test_load_config_rejects_bad_ratios():

    with pytest.raises(ConfigError) as e:
        load_config(None, PipelineConfigFields().all(), {"split_ratios": [0.5, 0.5]})

    assert "split_ratios" in e.value.reject_dict["field_error_messages"]
