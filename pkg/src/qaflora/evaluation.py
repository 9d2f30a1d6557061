"""Answer extraction and exact-match scoring."""

import re
from dataclasses import asdict, dataclass

from .errors import InputError

# optional sign, digits with optional thousands commas, optional fraction
_NUMBER = re.compile(r"[-+]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?|[-+]?\.\d+")
_OPTION = re.compile(r"(?<![A-Za-z])([A-E])(?![A-Za-z])")

MODES = ("string", "numeric", "option_letter")


@dataclass
class ScoredSet:
    n_items: int
    n_correct: int
    accuracy: float

    def to_dict(self):
        return asdict(self)


def extract_number(text, which="last"):
    """Last (or first) decimal number in ``text``, or None.

    Thousands separators are dropped: ``"1,234.5"`` gives ``1234.5``.
    """
    if not isinstance(text, str):
        return None
    matches = _NUMBER.findall(text)
    if not matches:
        return None
    raw = matches[-1] if which == "last" else matches[0]
    try:
        return float(raw.replace(",", ""))
    except ValueError:
        return None


def _option(text):
    m = _OPTION.search(text)
    return m.group(1) if m else None


def exact_match(prediction, gold, mode="string"):
    if mode == "string":
        return prediction.strip().casefold() == gold.strip().casefold()
    if mode == "numeric":
        a, b = extract_number(prediction), extract_number(gold)
        return a is not None and b is not None and abs(a - b) <= 1e-6
    if mode == "option_letter":
        got = _option(prediction)
        return got is not None and got == gold.strip().upper()
    raise ValueError(f"unknown mode {mode!r}")


def score_set(predictions, golds, mode="string"):
    predictions, golds = list(predictions), list(golds)
    if len(predictions) != len(golds):
        raise InputError(f"{len(predictions)} predictions vs {len(golds)} gold answers")
    if not predictions:
        raise InputError("nothing to score")
    correct = sum(exact_match(p, g, mode) for p, g in zip(predictions, golds))
    return ScoredSet(len(predictions), correct, correct / len(predictions))
