import copy
import enum
import logging

import arrow

from wsiqa.parsers import extract_arrow, extract_number

LOGGER = logging.getLogger(__name__)


NO_VALUE = object()


class JSONPropType(enum.Enum):
    INTEGER = "integer"
    NUMBER = "number"
    STRING = "string"
    BOOLEAN = "boolean"
    ARRAY = "array"
    OBJECT = "object"


class ValidationError(ValueError):
    def __init__(self, message):
        super().__init__(message)
        self.message = message


class Prop:

    excluded_types = ()

    def __init__(self, description=None, required=True, nullable=False, validators=None, default=None):
        self.description = description
        self.required = required
        self.nullable = nullable
        self.validators = validators
        self.default = default

    def __deepcopy__(self, memo):  # pylint: disable=unused-argument
        return type(self)(
            description=self.description,
            required=self.required,
            nullable=self.nullable,
            validators=self.validators,
            default=self.default,
        )

    def parse_input(self, prop_value):  # pylint: disable=no-self-use
        return prop_value

    def format_output(self, prop_value):  # pylint: disable=no-self-use
        return prop_value

    def parse_input_and_validate(self, input_structure_field_name, body, prop_value=NO_VALUE):

        if prop_value is NO_VALUE:
            if input_structure_field_name not in body and not self.required:
                return self.default
            prop_value = body.get(input_structure_field_name)

        try:
            prop_value = self.parse_input(prop_value)
        except (ValueError, TypeError) as ambiguous_error:
            if isinstance(ambiguous_error, ValidationError):
                raise
            error = (f"The value {prop_value!r} from field '{input_structure_field_name}' "
                     f"is the wrong type, expected: {self.__class__.__name__}")
            LOGGER.debug("%s /// Error: %s", error, ambiguous_error)
            raise ValidationError(error)

        return self.validate(input_structure_field_name, body, prop_value)

    def format_output_and_validate(self, output_structure_field_name, body, prop_value=NO_VALUE):

        if prop_value is NO_VALUE:
            if body is None:
                prop_value = None
            else:
                prop_value = body.get(output_structure_field_name)

        prop_value = self.validate(output_structure_field_name, body, prop_value)

        return self.format_output(prop_value)

    def validate(self, output_structure_field_name, body, prop_value):

        if self.required:
            if output_structure_field_name is not None and body is not None:
                if output_structure_field_name not in body:
                    raise ValidationError(
                        f"The field '{output_structure_field_name}' is required "
                        f"but not found in the body!"
                    )

        if not self.nullable:
            if body is not None:
                if output_structure_field_name in body:
                    if prop_value is None:
                        raise ValidationError(
                            f"Non nullable field '{output_structure_field_name}' "
                            f"is null!"
                        )

        if prop_value is not None:
            wrong_type = not isinstance(prop_value, self.types)  # pylint: disable=no-member
            if wrong_type or isinstance(prop_value, self.excluded_types):
                raise ValidationError(
                    f"The value {prop_value!r} from field '{output_structure_field_name}' "
                    f"is the wrong type, expected: {self.__class__.__name__}"
                )

        if self.validators is not None and prop_value is not None:
            for validator in self.validators:
                error_message = validator.validate_prop(prop_class=type(self), prop_value=prop_value)
                if error_message is not None:
                    if output_structure_field_name is not None:
                        error_message = f"Field '{output_structure_field_name}': {error_message}"
                    raise ValidationError(error_message)

        return prop_value


class Integer(Prop):

    prop_type = JSONPropType.INTEGER
    types = int
    excluded_types = bool

    def parse_input(self, prop_value):
        if prop_value is None:
            return None

        if isinstance(prop_value, bool):
            raise TypeError("booleans are not integers")

        if isinstance(prop_value, float) and not prop_value.is_integer():
            raise ValueError(f"{prop_value!r} has a fractional part")

        return int(prop_value)


class Number(Prop):

    prop_type = JSONPropType.NUMBER
    types = (int, float)
    excluded_types = bool

    def parse_input(self, prop_value):
        if prop_value is None:
            return None

        if isinstance(prop_value, bool):
            raise TypeError("booleans are not numbers")

        return extract_number(prop_value)


class String(Prop):

    prop_type = JSONPropType.STRING
    types = str
    format = None


class DateTime(String):

    types = (str, arrow.Arrow)
    format = "date-time"

    def parse_input(self, prop_value):
        if prop_value is None:
            return None

        return extract_arrow(prop_value)

    def format_output(self, prop_value):
        if prop_value is None:
            return None

        return str(prop_value)


class Boolean(Prop):

    prop_type = JSONPropType.BOOLEAN
    types = bool


class Object(Prop):

    prop_type = JSONPropType.OBJECT
    types = dict

    def __init__(self, structure, description=None, required=True, nullable=False, validators=None, default=None):
        super().__init__(description=description, required=required, nullable=nullable,
                         validators=validators, default=default)
        self.structure = structure

    def __deepcopy__(self, memo):  # pylint: disable=unused-argument
        return Object(
            self.structure,
            description=self.description,
            required=self.required,
            nullable=self.nullable,
            validators=self.validators,
            default=self.default,
        )

    def parse_input(self, prop_value):
        if prop_value is None:
            return None

        if not isinstance(prop_value, dict):
            raise TypeError(f"{prop_value!r} is not an object")

        if self.structure is None:
            return dict(prop_value)

        unexpected = [key for key in prop_value if key not in self.structure]
        if unexpected:
            raise ValidationError(f"Unexpected fields in object: {unexpected}")

        parsed = {}
        for field_name, field_prop in self.structure.items():
            parsed[field_name] = field_prop.parse_input_and_validate(field_name, prop_value)

        return parsed

    def format_output_and_validate(self, output_structure_field_name, body, prop_value=NO_VALUE):
        prop_value = super().format_output_and_validate(
            output_structure_field_name,
            body,
            prop_value,
        )

        if prop_value is None or self.structure is None:
            return prop_value

        validated_dict = {}

        for field_name, field_prop in self.structure.items():
            value = field_prop.format_output_and_validate(field_name, prop_value)
            if value is None and field_prop.required is False:
                continue
            validated_dict[field_name] = value

        return validated_dict


class Array(Prop):

    prop_type = JSONPropType.ARRAY
    types = list

    def __init__(self, repeated_structure, description=None, required=True, nullable=False, validators=None,
                 default=None):
        super().__init__(description=description, required=required, nullable=nullable,
                         validators=validators, default=default)
        self.repeated_structure = repeated_structure

    def __deepcopy__(self, memo):  # pylint: disable=unused-argument
        return Array(
            self.repeated_structure,
            description=self.description,
            required=self.required,
            nullable=self.nullable,
            validators=self.validators,
            default=self.default,
        )

    def parse_input(self, prop_value):
        if prop_value is None:
            return None

        if isinstance(prop_value, tuple):
            prop_value = list(prop_value)

        if not isinstance(prop_value, list):
            raise TypeError(f"{prop_value!r} is not an array")

        return [self.repeated_structure.parse_input_and_validate(None, None, value) for value in prop_value]

    def format_output_and_validate(self, output_structure_field_name, body, prop_value=NO_VALUE):
        prop_value = super().format_output_and_validate(
            output_structure_field_name,
            body,
            prop_value,
        )

        validated_list = []

        if prop_value:
            for value in prop_value:
                validated_list.append(self.repeated_structure.format_output_and_validate(None, None, value))

        return validated_list


class OneOf(Prop):
    """Holds the first alternative that parses and validates; fails with every alternative's reason."""

    prop_type = None

    def __init__(self, alternatives, description=None, default=None):
        alternatives = list(alternatives) if isinstance(alternatives, (list, tuple)) else None
        if not alternatives or not all(isinstance(alternative, Prop) for alternative in alternatives):
            raise ValidationError("OneOf needs a non-empty list of props")

        super().__init__(
            description=description,
            required=any(alternative.required for alternative in alternatives),
            nullable=any(alternative.nullable for alternative in alternatives),
            default=default,
        )
        self.alternatives = alternatives

    def __deepcopy__(self, memo):
        clone = OneOf(copy.deepcopy(self.alternatives, memo), self.description, self.default)
        clone.required = self.required
        clone.nullable = self.nullable
        return clone

    def parse_input_and_validate(self, input_structure_field_name, body, prop_value=NO_VALUE):

        if prop_value is NO_VALUE:
            if input_structure_field_name not in body and not self.required:
                return self.default
            prop_value = body.get(input_structure_field_name)

        reasons = []
        for alternative in self.alternatives:
            try:
                return alternative.parse_input_and_validate(input_structure_field_name, body, prop_value)
            except ValidationError as validation_error:
                reasons.append(validation_error.message)

        raise ValidationError(one_of_error_message(reasons, prop_value, input_structure_field_name))

    def format_output_and_validate(self, output_structure_field_name, body, prop_value=NO_VALUE):

        if prop_value is NO_VALUE:
            prop_value = None if body is None else body.get(output_structure_field_name)

        reasons = []
        for alternative in self.alternatives:
            try:
                return alternative.format_output_and_validate(output_structure_field_name, body, prop_value)
            except ValidationError as validation_error:
                reasons.append(validation_error.message)

        raise ValidationError(one_of_error_message(reasons, prop_value, output_structure_field_name))


def one_of_error_message(reasons, prop_value, field_name):
    return (f"The value {prop_value!r} from field '{field_name}' matches none of the allowed forms: "
            f"{', '.join(reasons)}")
