import datetime
import math
import re
from typing import Union

import arrow
import arrow.parser


def extract_number(val: Union[int, float, str]) -> float:

    if isinstance(val, (int, float)):
        return float(val)

    val = str(val)
    val = re.sub(r'(,|\s)', "", val)

    if val.lower() in ("inf", "+inf", "infinity"):
        return math.inf

    if val.lower() in ("-inf", "-infinity"):
        return -math.inf

    if re.search(r'^\(\d+(\.\d+)?\)$', val):
        val = "-" + re.sub(r'[()]', "", val)

    number = float(val)

    if math.isnan(number):
        raise ValueError("NaN is not a number we accept")

    return number


def extract_score(val: Union[int, float, str]) -> float:
    """Parse one score-table cell; blanks and NaN are rejected so joins never carry holes."""

    if val is None or (isinstance(val, str) and not val.strip()):
        raise ValueError("empty cell")

    if isinstance(val, float) and math.isnan(val):
        raise ValueError("empty cell")

    return extract_number(val)


def format_score(val: float) -> str:
    if math.isinf(val):
        return "inf" if val > 0 else "-inf"

    return repr(float(val))


def extract_arrow(val: Union[str, datetime.datetime, arrow.Arrow]) -> arrow.Arrow:

    if isinstance(val, datetime.datetime):
        return arrow.get(val)

    if isinstance(val, arrow.Arrow):
        return val

    val = val.strip()

    if len(val) == 8 and val.isdigit():
        return arrow.get("{}-{}-{}".format(val[0:4], val[4:6], val[6:8]))

    try:
        return arrow.get(val)
    except arrow.parser.ParserError as error:
        raise ValueError(f"{val!r} is not a timestamp") from error
