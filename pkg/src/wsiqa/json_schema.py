import collections

from wsiqa import prop as schema_prop
from wsiqa import validators

DRAFT = "http://json-schema.org/draft-07/schema#"


class JSONSchema(collections.OrderedDict):
    def __init__(self, title, description=None):
        super().__init__()
        self["$schema"] = DRAFT
        self["title"] = title
        if description is not None:
            self["description"] = description
        self["definitions"] = {}

    def add_definition(self, name, structure):
        self["definitions"][name] = get_object_dict(self, structure, name)
        return {"$ref": "#/definitions/" + name}

    def document(self, structure):
        self.update(get_object_dict(self, structure, self["title"]))
        if not self["definitions"]:
            del self["definitions"]
        return self


def document(fields, title=None):
    """JSON-Schema document for a ``schema.Fields`` instance or a plain field mapping."""
    structure = fields.all() if hasattr(fields, "all") else fields
    title = title or type(fields).__name__
    return JSONSchema(title).document(structure)


def get_validator_dict(prop):
    dictionary = {}

    for validator in prop.validators or []:
        if isinstance(validator, validators.Range):
            if validator.minimum is not None:
                key = "exclusiveMinimum" if validator.exclusive_minimum else "minimum"
                dictionary[key] = validator.minimum
            if validator.maximum is not None:
                key = "exclusiveMaximum" if validator.exclusive_maximum else "maximum"
                dictionary[key] = validator.maximum
        elif isinstance(validator, validators.Choices):
            dictionary["enum"] = list(validator.choices)
        elif isinstance(validator, validators.ExactLength):
            if isinstance(prop, schema_prop.Array):
                dictionary["minItems"] = dictionary["maxItems"] = validator.exact_length
            else:
                dictionary["minLength"] = dictionary["maxLength"] = validator.exact_length

    return dictionary


def get_prop_dict(self, prop, name):

    if isinstance(prop, schema_prop.OneOf):
        dictionary = {"oneOf": [get_prop_dict(self, alternative, f"{name}_{k}")
                                for k, alternative in enumerate(prop.alternatives)]}
    elif isinstance(prop, schema_prop.Object):
        dictionary = get_object_reference_dict(self, prop, name)
    elif isinstance(prop, schema_prop.Array):
        dictionary = {"type": "array", "items": get_prop_dict(self, prop.repeated_structure, name + "_item")}
    elif isinstance(prop, schema_prop.Prop):
        dictionary = {"type": prop.prop_type.value}
        if getattr(prop, "format", None) is not None:
            dictionary["format"] = prop.format
    else:
        raise schema_prop.ValidationError(f"{name} must be described by a Prop, got {type(prop).__name__}")

    dictionary.update(get_validator_dict(prop))

    if prop.nullable and "type" in dictionary:
        dictionary["type"] = [dictionary["type"], "null"]

    if prop.description is not None:
        dictionary["description"] = prop.description

    if not prop.required and prop.default is not None:
        dictionary["default"] = prop.default

    return dictionary


def get_object_reference_dict(self, prop, name):
    if prop.structure is None:
        return {"type": "object"}

    return self.add_definition(name, prop.structure)


def get_object_dict(self, structure, name):
    return {
        "type": "object",
        "properties": {field: get_prop_dict(self, field_prop, f"{name}_{field}")
                       for field, field_prop in structure.items()},
        "required": [field for field, field_prop in structure.items() if field_prop.required],
        "additionalProperties": False,
    }
