import enum
import json
import logging
import os
from pathlib import Path

import arrow

from wsiqa import prop
from wsiqa.schema import ProvenanceFields

LOGGER = logging.getLogger(__name__)

WORKERS_ENV = "WSIQA_WORKERS"


class ExitCode(enum.IntEnum):
    OK = 0
    VALIDATION_ERROR = 1
    RUNTIME_FAILURE = 2


class ConfigError(prop.ValidationError):
    def __init__(self, message, reject_dict=None):
        super().__init__(message)
        self.reject_dict = reject_dict or {"message": message}


def validate_input(body, input_schema):
    message = []
    field_error_messages = {}
    status = ExitCode.OK

    if not isinstance(body, dict):
        message.append("Improperly formatted configuration. Must be a JSON object, even if it's just {}!")
        status = ExitCode.VALIDATION_ERROR

    if status is ExitCode.OK:

        expected_fields = list(input_schema)
        required_fields = [name for name, field_prop in input_schema.items() if field_prop.required]

        unexpected_fields = [key for key in body if key not in expected_fields]

        if len(unexpected_fields) == 1:
            message.append(f"An unexpected field was found: {unexpected_fields[0]}")
            status = ExitCode.VALIDATION_ERROR
        elif len(unexpected_fields) > 1:
            message.append(f"Unexpected fields were found: {str(unexpected_fields)}")
            status = ExitCode.VALIDATION_ERROR

        missing_required_fields = [field for field in required_fields if field not in body]

        if len(missing_required_fields) == 1:
            message.append(f"A required field is missing: {missing_required_fields[0]}")
            status = ExitCode.VALIDATION_ERROR
        elif len(missing_required_fields) > 1:
            message.append(f"Required fields are missing: {missing_required_fields}")
            status = ExitCode.VALIDATION_ERROR

    if status is ExitCode.OK:

        for field_name, field_prop in input_schema.items():
            try:
                field_prop.parse_input_and_validate(field_name, body)
            except prop.ValidationError as validation_error:
                field_error_messages[field_name] = str(validation_error.message)
                status = ExitCode.VALIDATION_ERROR

    reject_dict = {}

    if len(message) > 0:
        reject_dict["message"] = ' /// '.join(message)

    if field_error_messages:
        if "message" not in reject_dict:
            if len(field_error_messages) == 1:
                reject_dict["message"] = "A field has an error."
            else:
                reject_dict["message"] = "Multiple fields have an error."

        reject_dict["field_error_messages"] = field_error_messages

    return status, reject_dict


def parse_input(body, input_schema):
    """Validate ``body`` and return it with defaults filled in; raises ConfigError with the reject dictionary."""

    status, reject_dict = validate_input(body, input_schema)
    if status is not ExitCode.OK:
        details = reject_dict.get("field_error_messages")
        message = reject_dict["message"]
        if details:
            message += " " + "; ".join(f"{name}: {error}" for name, error in details.items())
        raise ConfigError(message, reject_dict)

    return {name: field_prop.parse_input_and_validate(name, body) for name, field_prop in input_schema.items()}


def load_config(path, input_schema, overrides=None):
    body = {}

    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                body = json.load(handle)
        except json.JSONDecodeError as error:
            raise ConfigError(f"{path} is not valid JSON: {error}") from error

        if not isinstance(body, dict):
            raise ConfigError(f"{path} must hold a JSON object")

    body = dict(body)

    for name, value in (overrides or {}).items():
        if value is not None:
            body[name] = value

    return parse_input(body, input_schema)


def create_output(result_body, output_schema):
    returned_dict = {}

    for field_name, field_prop in output_schema.items():
        value = field_prop.format_output_and_validate(field_name, result_body)

        if value is None and field_prop.required is False:
            continue

        returned_dict[field_name] = value

    return returned_dict


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def meta_path(artifact_path):
    return Path(f"{artifact_path}.meta.json")


def write_provenance(artifact_path, command, config, seed, inputs):
    payload = create_output(
        {
            "command": command,
            "config": config,
            "seed": seed,
            "inputs": [str(path) for path in inputs],
            "created_at": arrow.utcnow(),
        },
        ProvenanceFields().all(),
    )
    write_json(meta_path(artifact_path), payload)
    LOGGER.debug("Provenance for %s written", artifact_path)
    return payload


def default_workers():
    value = os.environ.get(WORKERS_ENV)
    if value is None:
        return 1

    try:
        workers = int(value)
    except ValueError as error:
        raise ConfigError(f"{WORKERS_ENV}={value!r} is not an integer") from error

    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1, got {workers}")

    return workers
