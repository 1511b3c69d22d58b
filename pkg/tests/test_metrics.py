import random

import numpy as np
import pytest

from retrovid.discovery import PredictionEntry, PredictionLog
from retrovid.errors import ConfigurationError, UndefinedMetricError
from retrovid.manifest import (
    ClassTransformMap,
    DatasetManifest,
    VideoRecord,
    equivariant,
    invariant,
    novel,
)
from retrovid.metrics import (
    breakdown,
    breakdown_to_csv,
    confusion,
    topk_accuracy,
)
from retrovid.tensor import TransformId

TR = TransformId.TR


def make_log(originals=None, transformed=None, transform=TR):
    entries = []
    for vid, ranking in (originals or {}).items():
        entries.append(PredictionEntry(vid, "original", None, tuple(ranking)))
    for vid, ranking in (transformed or {}).items():
        entries.append(PredictionEntry(vid, "transformed", transform, tuple(ranking)))
    return PredictionLog(entries)


def make_manifest(labels, n_classes):
    return DatasetManifest(
        [VideoRecord(vid, y, "val") for vid, y in labels.items()],
        {y: f"class-{y}" for y in range(n_classes)},
    )


def full_ranking(top1, n_classes, rng=None):
    rest = [c for c in range(n_classes) if c != top1]
    if rng is not None:
        rng.shuffle(rest)
    return [top1] + rest


def test_topk_rank_inspection():
    m = make_manifest({"v": 9}, 10)
    log = make_log({"v": [3, 7, 1, 9, 4, 0, 2, 5, 6, 8]})
    assert topk_accuracy(log, m, 1) == 0.0
    assert topk_accuracy(log, m, 5) == 1.0


def test_topk_perfect_log():
    labels = {f"v{i}": i % 4 for i in range(12)}
    m = make_manifest(labels, 4)
    log = make_log({vid: full_ranking(y, 4) for vid, y in labels.items()})
    for k in (1, 2, 3, 4):
        assert topk_accuracy(log, m, k) == 1.0


def test_topk_matches_recount_and_is_monotone():
    rng = random.Random(31)
    n_classes = 8
    labels = {f"v{i}": rng.randrange(n_classes) for i in range(120)}
    rankings = {
        vid: full_ranking(rng.randrange(n_classes), n_classes, rng)
        for vid in labels
    }
    m = make_manifest(labels, n_classes)
    log = make_log(rankings)
    prev = 0.0
    for k in range(1, n_classes + 1):
        acc = topk_accuracy(log, m, k)
        hits = sum(1 for vid, y in labels.items() if y in rankings[vid][:k])
        assert acc == hits / len(labels)
        assert acc >= prev
        prev = acc


def test_topk_class_filter():
    labels = {"a": 0, "b": 1}
    m = make_manifest(labels, 2)
    log = make_log({"a": [0, 1], "b": [0, 1]})
    assert topk_accuracy(log, m, 1, class_filter={0}) == 1.0
    assert topk_accuracy(log, m, 1, class_filter={1}) == 0.0
    with pytest.raises(ConfigurationError):
        topk_accuracy(log, m, 1, class_filter={9})


def test_topk_empty_evaluation_set_is_an_error():
    m = make_manifest({"a": 0}, 2)
    log = make_log({"other": [0, 1]})
    with pytest.raises(UndefinedMetricError):
        topk_accuracy(log, m, 1)


def test_topk_k_beyond_ranking_is_an_error():
    m = make_manifest({"a": 0}, 2)
    log = make_log({"a": [0, 1]})
    with pytest.raises(ConfigurationError):
        topk_accuracy(log, m, 3)


def test_confusion_identity_log_is_diagonal():
    labels = {f"v{i}": i % 3 for i in range(9)}
    m = make_manifest(labels, 3)
    log = make_log({vid: full_ranking(y, 3) for vid, y in labels.items()})
    matrix = confusion(log, m)
    assert matrix.classes == (0, 1, 2)
    assert np.array_equal(matrix.counts, np.diag([3, 3, 3]))
    assert matrix.total == 9
    assert matrix.excluded == 0


def test_confusion_planted_swap_becomes_diagonal_under_label_transform():
    labels = {}
    transformed = {}
    for i in range(4):
        labels[f"a{i}"] = 0
        transformed[f"a{i}"] = full_ranking(1, 3)
        labels[f"b{i}"] = 1
        transformed[f"b{i}"] = full_ranking(0, 3)
    labels["c"] = 2
    transformed["c"] = full_ranking(2, 3)
    m = make_manifest(labels, 3)
    log = make_log(transformed=transformed)
    cmap = ClassTransformMap(TR, {0: equivariant(1), 1: equivariant(0), 2: invariant()})

    plain = confusion(log, m, cmap=cmap, variant="transformed", transform=TR)
    idx = {y: i for i, y in enumerate(plain.classes)}
    assert plain.counts[idx[0], idx[1]] == 4
    assert plain.counts[idx[1], idx[0]] == 4
    assert plain.counts[idx[0], idx[0]] == 0

    mapped = confusion(
        log, m, cmap=cmap, apply_label_transform=True, variant="transformed", transform=TR
    )
    assert np.array_equal(
        mapped.counts, np.diag([mapped.row_sums()[y] for y in mapped.classes])
    )
    assert mapped.total == 9


def test_confusion_excludes_novel_classes_under_label_transform():
    labels = {"a": 0, "b": 1, "c": 1}
    m = make_manifest(labels, 2)
    log = make_log({vid: full_ranking(0, 2) for vid in labels})
    cmap = ClassTransformMap(TR, {0: invariant(), 1: novel()})
    matrix = confusion(log, m, cmap=cmap, apply_label_transform=True)
    assert matrix.excluded == 2
    assert matrix.total == 1


def test_confusion_orders_pairs_adjacent():
    labels = {f"v{i}": i % 5 for i in range(5)}
    m = make_manifest(labels, 5)
    log = make_log({vid: full_ranking(y, 5) for vid, y in labels.items()})
    cmap = ClassTransformMap(
        TR,
        {
            0: invariant(),
            1: equivariant(4),
            4: equivariant(1),
            2: equivariant(3),
            3: equivariant(2),
        },
    )
    matrix = confusion(log, m, cmap=cmap)
    assert matrix.classes == (1, 4, 2, 3, 0)
    assert matrix.ordering == "pairs-adjacent"


def test_confusion_flag_requires_map():
    m = make_manifest({"a": 0}, 1)
    log = make_log({"a": [0]})
    with pytest.raises(ConfigurationError):
        confusion(log, m, apply_label_transform=True)


def test_confusion_row_sums_count_examples():
    rng = random.Random(32)
    labels = {f"v{i}": rng.randrange(4) for i in range(40)}
    m = make_manifest(labels, 4)
    log = make_log(
        {vid: full_ranking(rng.randrange(4), 4, rng) for vid in labels}
    )
    matrix = confusion(log, m)
    per_class = {y: 0 for y in range(4)}
    for y in labels.values():
        per_class[y] += 1
    assert matrix.row_sums() == per_class
    assert matrix.total == 40


def test_confusion_csv_shape():
    labels = {"a": 0, "b": 1}
    m = make_manifest(labels, 2)
    log = make_log({vid: full_ranking(y, 2) for vid, y in labels.items()})
    text = confusion(log, m).to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "true_class,0,1"
    assert len(lines) == 3


def test_breakdown_single_group_matches_topk():
    rng = random.Random(33)
    labels = {f"v{i}": rng.randrange(3) for i in range(30)}
    m = make_manifest(labels, 3)
    log = make_log({vid: full_ranking(rng.randrange(3), 3, rng) for vid in labels})
    rows = breakdown(log, m, {"all": [0, 1, 2]}, ks=(1, 2))
    assert rows[0].accuracies[1] == topk_accuracy(log, m, 1)
    assert rows[0].accuracies[2] == topk_accuracy(log, m, 2)
    assert rows[0].n_examples == 30


def test_breakdown_disjoint_groups_weighted_mean_equals_overall():
    rng = random.Random(34)
    labels = {f"v{i}": rng.randrange(4) for i in range(60)}
    m = make_manifest(labels, 4)
    log = make_log({vid: full_ranking(rng.randrange(4), 4, rng) for vid in labels})
    rows = breakdown(log, m, {"low": [0, 1], "high": [2, 3]}, ks=(1,))
    total = sum(r.n_examples for r in rows)
    weighted = sum(r.n_examples * r.accuracies[1] for r in rows) / total
    assert weighted == pytest.approx(topk_accuracy(log, m, 1))


def test_breakdown_empty_group_is_flagged_not_fatal():
    labels = {"a": 0}
    m = make_manifest(labels, 3)
    log = make_log({"a": [0, 1, 2]})
    rows = breakdown(log, m, {"present": [0], "empty": [2]}, ks=(1,))
    by_name = {r.name: r for r in rows}
    assert by_name["empty"].n_examples == 0
    assert by_name["empty"].accuracies[1] is None
    csv_text = breakdown_to_csv(rows, ks=(1,))
    assert "empty,0,n/a" in csv_text


def test_breakdown_groups_may_overlap():
    labels = {"a": 0, "b": 1}
    m = make_manifest(labels, 2)
    log = make_log({"a": [0, 1], "b": [1, 0]})
    rows = breakdown(log, m, {"g1": [0, 1], "g2": [1]}, ks=(1,))
    assert rows[0].n_examples == 2
    assert rows[1].n_examples == 1


def test_breakdown_csv_header_shape():
    rows = breakdown_to_csv([], ks=(1, 5))
    assert rows.splitlines()[0] == "group,n,top1,top5"
