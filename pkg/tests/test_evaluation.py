import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qaflora.errors import InputError
from qaflora.evaluation import exact_match, extract_number, score_set


@pytest.mark.parametrize("text,want", [
    ("the answer is 42.", 42.0),
    ("no digits here", None),
    ("first 3, then 4.5", 4.5),
    ("total: 1,234.5 dollars", 1234.5),
    ("it drops to -7", -7.0),
    ("ratio .5", 0.5),
    ("", None),
])
def test_extract_number(text, want):
    assert extract_number(text) == want


def test_last_match_rule_against_reference_regex():
    text = "Step 1: 12 apples, step 2: 30 pears; so 42"
    assert extract_number(text) == float(re.findall(r"\d+", text)[-1])
    assert extract_number(text, which="first") == 1.0


@given(st.text())
def test_extract_number_never_raises(text):
    out = extract_number(text)
    assert out is None or isinstance(out, float)


def test_exact_match_modes():
    assert exact_match("  B) because", "B", "option_letter")
    assert exact_match("answer: 7.0", "7", "numeric")
    assert not exact_match("C is wrong, pick D", "D", "option_letter")
    assert exact_match("  Paris ", "paris", "string")
    assert not exact_match("no option", "A", "option_letter")
    with pytest.raises(ValueError):
        exact_match("a", "a", "fuzzy")


def test_score_set():
    assert score_set(["1", "2"], ["1", "2"], "numeric").accuracy == 1.0
    assert score_set(["1", "2"], ["3", "4"], "numeric").accuracy == 0.0
    s = score_set(["A", "B", "C", "D"], ["A", "B", "C", "E"], "option_letter")
    assert (s.n_items, s.n_correct, s.accuracy) == (4, 3, 0.75)
    with pytest.raises(InputError):
        score_set(["a"], ["a", "b"])


@given(st.lists(st.tuples(st.integers(0, 9), st.integers(0, 9)), min_size=1, max_size=30), st.randoms())
def test_accuracy_bounds_and_order_free(pairs, rnd):
    preds, golds = [str(a) for a, _ in pairs], [str(b) for _, b in pairs]
    s = score_set(preds, golds, "numeric")
    assert 0.0 <= s.accuracy <= 1.0 and s.n_correct <= s.n_items
    rnd.shuffle(pairs)
    assert score_set([str(a) for a, _ in pairs], [str(b) for _, b in pairs], "numeric").accuracy == s.accuracy
