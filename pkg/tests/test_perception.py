import math

import pytest

from retrovid.errors import ValidationError
from retrovid.perception import (
    ClassTally,
    PairChoice,
    SubmissionRecord,
    Verdict,
    classify_reversibility,
    load_submissions,
    load_tally_csv,
    qc_filter,
    reversibility_bounds,
    save_tally_csv,
    tally,
)


def submission(worker, real, catch_correct):
    """real: list of (class_id, chose_forward); catch_correct: list of bools."""
    choices = [PairChoice(catch=False, class_id=c, chose_forward=f) for c, f in real]
    choices += [PairChoice(catch=True, correct=ok) for ok in catch_correct]
    return SubmissionRecord(worker, tuple(choices))


def test_bounds_for_two_hundred_trials():
    lower, upper = reversibility_bounds(200)
    assert lower == pytest.approx(0.3939, abs=1e-3)
    assert upper == pytest.approx(0.6061, abs=1e-3)


def test_bounds_for_one_hundred_twenty_trials():
    lower, upper = reversibility_bounds(120)
    assert lower == pytest.approx(0.3631, abs=1e-3)
    assert upper == pytest.approx(0.6369, abs=1e-3)


def test_bounds_clamped_for_tiny_n():
    assert reversibility_bounds(1) == (0.0, 1.0)


def test_bounds_require_positive_n():
    with pytest.raises(ValidationError):
        reversibility_bounds(0)


def test_bounds_symmetric_and_width_shrinks():
    prev_width = None
    for n in range(10, 400, 13):
        lower, upper = reversibility_bounds(n)
        assert lower + upper == pytest.approx(1.0)
        width = upper - lower
        assert width == pytest.approx(6 * math.sqrt(0.25 / n))
        if prev_width is not None:
            assert width < prev_width
        prev_width = width


def test_classify_within_band_is_reversible():
    assert classify_reversibility(ClassTally(0, 200, 110)) is Verdict.REVERSIBLE


def test_classify_above_band_prefers_forward():
    assert classify_reversibility(ClassTally(0, 120, 80)) is Verdict.FORWARD_PREFERRED


def test_classify_below_band_prefers_reversed():
    assert classify_reversibility(ClassTally(0, 120, 40)) is Verdict.REVERSED_PREFERRED


def test_exact_half_is_always_reversible():
    for n in (2, 10, 100, 1000):
        assert classify_reversibility(ClassTally(0, n, n // 2)) is Verdict.REVERSIBLE


def test_classification_symmetric_under_label_swap():
    swap = {
        Verdict.REVERSIBLE: Verdict.REVERSIBLE,
        Verdict.FORWARD_PREFERRED: Verdict.REVERSED_PREFERRED,
        Verdict.REVERSED_PREFERRED: Verdict.FORWARD_PREFERRED,
    }
    for n, x in [(200, 110), (200, 150), (120, 40), (50, 25), (33, 30)]:
        a = classify_reversibility(ClassTally(0, n, x))
        b = classify_reversibility(ClassTally(0, n, n - x))
        assert swap[a] is b


def test_tally_guards():
    with pytest.raises(ValidationError):
        ClassTally(0, 10, 11)


def test_qc_three_of_three_rule_rejects_two():
    subs = [
        submission("w1", [(0, True)], [True, True, False]),
        submission("w2", [(0, False)], [True, True, True]),
    ]
    accepted = qc_filter(subs, k=3, min_correct=3)
    assert [s.worker_id for s in accepted] == ["w2"]


def test_qc_three_of_five_rule_accepts_three():
    sub = submission("w1", [(0, True)], [True, False, True, False, True])
    assert qc_filter([sub], k=5, min_correct=3) == [sub]


def test_qc_empty_input():
    assert qc_filter([], k=3, min_correct=3) == []


def test_qc_wrong_catch_count_is_malformed():
    sub = submission("w1", [(0, True)], [True, True])
    with pytest.raises(ValidationError, match="w1"):
        qc_filter([sub], k=3, min_correct=3)


def test_qc_preserves_accepted_submissions():
    sub = submission("w1", [(0, True), (1, False)], [True, True, True])
    accepted = qc_filter([sub], k=3, min_correct=3)
    assert accepted[0] is sub


def test_tally_aggregates_non_catch_choices():
    subs = [
        submission("w1", [(0, True), (0, False), (1, True)], [True]),
        submission("w2", [(0, True), (1, True)], [True]),
    ]
    tallies = tally(subs)
    assert tallies == [ClassTally(0, 3, 2), ClassTally(1, 2, 2)]


def test_tally_csv_round_trip(tmp_path):
    tallies = [ClassTally(0, 200, 110), ClassTally(3, 120, 40)]
    path = tmp_path / "tally.csv"
    save_tally_csv(tallies, path)
    assert load_tally_csv(path) == tallies


def test_tally_csv_requires_header(tmp_path):
    path = tmp_path / "tally.csv"
    path.write_text("0,10,5\n")
    with pytest.raises(ValidationError):
        load_tally_csv(path)


def test_submissions_jsonl_round_trip(tmp_path):
    path = tmp_path / "subs.jsonl"
    path.write_text(
        '{"worker_id": "w1", "pairs": ['
        '{"catch": false, "class_id": 3, "chose_forward": true}, '
        '{"catch": true, "correct": false}]}\n'
    )
    subs = load_submissions(path)
    assert subs[0].worker_id == "w1"
    assert subs[0].catch_total == 1
    assert subs[0].catch_correct == 0
    assert subs[0].choices[0].class_id == 3
