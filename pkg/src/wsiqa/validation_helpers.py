import math
import os


def is_monotone(values, increasing=True, strict=False):
    pairs = list(zip(values[:-1], values[1:]))

    if increasing:
        return all(b > a if strict else b >= a for a, b in pairs)

    return all(b < a if strict else b <= a for a, b in pairs)


def is_ladder_monotone(values):
    # severity ladders may run either way (a JPEG quality falls while a blur sigma rises)
    magnitudes = [abs(value) if isinstance(value, (int, float)) else value for value in values]
    return is_monotone(magnitudes, increasing=True) or is_monotone(magnitudes, increasing=False)


def sums_to(values, target, tolerance=1e-9):
    return math.isclose(sum(values), target, abs_tol=tolerance)


def path_exists(potential_path):
    return os.path.exists(str(potential_path))
