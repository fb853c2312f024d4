from wsiqa import prop, validation_helpers


class Validator:
    supported_prop_classes = []

    def validate_prop(self, prop_class, _):
        if prop_class not in self.supported_prop_classes:
            raise prop.ValidationError(f"{self.__class__.__name__} is not supported for class {prop_class.__name__}!!")


class ExactLength(Validator):
    supported_prop_classes = [prop.String, prop.Array]

    def __init__(self, exact_length=None):
        self.exact_length = exact_length

    def validate_prop(self, prop_class, prop_value):
        super().validate_prop(prop_class, prop_value)

        if len(prop_value) != self.exact_length:
            return (f"{prop_class.__name__} is not the correct length! The value {prop_value!r} has "
                    f"{len(prop_value)} entries, not {self.exact_length}!")

        return None


class Range(Validator):
    supported_prop_classes = [prop.Number, prop.Integer]

    def __init__(self, minimum=None, maximum=None, exclusive_minimum=False, exclusive_maximum=False):
        self.minimum = minimum
        self.maximum = maximum
        self.exclusive_minimum = exclusive_minimum
        self.exclusive_maximum = exclusive_maximum

    def validate_prop(self, prop_class, prop_value):
        super().validate_prop(prop_class, prop_value)

        if self.minimum is not None:
            if prop_value < self.minimum or (self.exclusive_minimum and prop_value == self.minimum):
                bound = ">" if self.exclusive_minimum else ">="
                return f"{prop_value!r} must be {bound} {self.minimum}!"

        if self.maximum is not None:
            if prop_value > self.maximum or (self.exclusive_maximum and prop_value == self.maximum):
                bound = "<" if self.exclusive_maximum else "<="
                return f"{prop_value!r} must be {bound} {self.maximum}!"

        return None


class Choices(Validator):
    supported_prop_classes = [prop.String]

    def __init__(self, choices):
        self.choices = list(choices)

    def validate_prop(self, prop_class, prop_value):
        super().validate_prop(prop_class, prop_value)

        if prop_value not in self.choices:
            return f"{prop_value!r} is not one of {self.choices}!"

        return None


class MonotoneLadder(Validator):
    supported_prop_classes = [prop.Array]

    def validate_prop(self, prop_class, prop_value):
        super().validate_prop(prop_class, prop_value)

        if validation_helpers.is_ladder_monotone(prop_value) is False:
            return f"{prop_value!r} is not a monotone severity ladder!"

        return None


class UnitSum(Validator):
    supported_prop_classes = [prop.Array]

    def __init__(self, tolerance=1e-9):
        self.tolerance = tolerance

    def validate_prop(self, prop_class, prop_value):
        super().validate_prop(prop_class, prop_value)

        if validation_helpers.sums_to(prop_value, 1.0, self.tolerance) is False:
            return f"{prop_value!r} does not sum to 1!"

        return None


class ExistingPath(Validator):
    supported_prop_classes = [prop.String]

    def validate_prop(self, prop_class, prop_value):
        super().validate_prop(prop_class, prop_value)

        if validation_helpers.path_exists(prop_value) is False:
            return f"{prop_value} does not exist!"

        return None
