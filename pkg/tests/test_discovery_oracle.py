"""Cross-checks of the extraction pipeline against the plain-loop reference."""

import random

from retrovid.discovery import (
    DiscoveryConfig,
    affinity,
    extract_transform,
    transfer_matrix,
)
from retrovid.manifest import EntryKind
from retrovid.tensor import TransformId

from discovery_ref import (
    brute_force_extract,
    make_instance,
    report_as_tuples,
    to_prediction_log,
)

TR = TransformId.TR


def manifest_records(manifest):
    return [(r.video_id, r.class_id, r.split) for r in manifest.records]


def test_extraction_equals_brute_force_across_noise_levels():
    rng = random.Random(100)
    for i in range(12):
        noise = rng.choice([0.0, 0.05, 0.1, 0.2])
        lam = rng.choice([0.5, 0.8, 0.9, 1.0])
        alpha = rng.choice([0.3, 0.5, 0.8])
        manifest, raw, _planted = make_instance(rng, noise=noise, min_videos=1)
        log = to_prediction_log(raw)
        got = report_as_tuples(
            extract_transform(log, manifest, TR, DiscoveryConfig(lam, alpha))
        )
        want = brute_force_extract(manifest_records(manifest), raw, "TR", lam, alpha)
        assert got == want, f"instance {i} (noise={noise}, lam={lam}, alpha={alpha})"


def test_noise_free_recovery_is_exact():
    rng = random.Random(101)
    for _ in range(10):
        manifest, raw, planted = make_instance(rng, noise=0.0)
        log = to_prediction_log(raw)
        report = extract_transform(log, manifest, TR, DiscoveryConfig(0.9, 0.5))
        assert report.map.entries == planted.entries


def test_transfer_rows_are_stochastic_and_affinity_symmetric():
    rng = random.Random(102)
    for _ in range(10):
        manifest, raw, _planted = make_instance(rng, noise=0.1, min_videos=1)
        log = to_prediction_log(raw)
        gamma = transfer_matrix(log, manifest, TR)
        for y, row in gamma.items():
            assert abs(sum(row.values()) - 1.0) <= 1e-12
        classes = manifest.record_classes()
        for a in classes:
            for b in classes:
                assert abs(affinity(gamma, a, b) - affinity(gamma, b, a)) <= 1e-12


def test_not_established_classes_are_novel_with_flag():
    rng = random.Random(103)
    manifest, raw, _planted = make_instance(rng, noise=0.2, min_videos=10)
    log = to_prediction_log(raw)
    report = extract_transform(log, manifest, TR, DiscoveryConfig(1.0, 0.5))
    flagged = [
        y
        for y, d in report.diagnostics.items()
        if not d.established
    ]
    assert flagged, "expected at least one class below the recall threshold"
    for y in flagged:
        assert report.map.entries[y].kind is EntryKind.NOVEL
        assert "not_established" in report.diagnostics[y].flags


def test_score_counts_partition_the_class_set():
    from retrovid.discovery import score_against_ground_truth

    rng = random.Random(104)
    for _ in range(8):
        manifest, raw, planted = make_instance(rng, noise=0.1, min_videos=1)
        log = to_prediction_log(raw)
        report = extract_transform(log, manifest, TR, DiscoveryConfig(0.9, 0.5))
        counts = score_against_ground_truth(report.map, planted)
        assert sum(counts) == len(planted.entries)
        assert min(counts) >= 0
