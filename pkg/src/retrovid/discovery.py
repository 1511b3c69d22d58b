"""Recovering per-class label transforms from model prediction logs.

Given a model's ranked predictions for every video in both its original
and transformed form, extraction runs in three stages:

1. Per-class recall over the originals decides whether the model can be
   trusted for that class at all (threshold ``lam``). Recall counts only
   videos that have an original prediction in the log.
2. For the videos the model classified correctly, the transfer matrix
   tabulates how top-1 predictions redistribute over classes once the
   transform is applied. Rows are proportions and sum to one.
3. The affinity between two classes, the product of the transfer
   proportions in both directions, drives a piecewise decision per class:
   self-affinity at or above ``alpha`` keeps the label (invariant);
   otherwise mutual affinity with the best candidate counterpart at or
   above ``alpha`` swaps the labels (equivariant), provided neither side
   is itself self-affine; anything else is treated as leaving the label
   set (novel).

Classes whose recall falls below ``lam`` cannot be established; they are
emitted as novel with a ``not_established`` flag so downstream synthesis
can exclude them. A final pass demotes equivariant claims whose target
does not reciprocate (possible through argmax ties), keeping the emitted
map self-invertible; demoted classes carry a ``conflict`` flag.

Extraction is a pure aggregation of the log: same inputs, same output.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .errors import (
    ConfigurationError,
    IncompleteLogError,
    UndefinedMetricError,
    ValidationError,
)
from .manifest import (
    ClassEntry,
    ClassTransformMap,
    DatasetManifest,
    EntryKind,
    equivariant,
    invariant,
    novel,
    transform_map_to_dict,
)
from .tensor import TransformId

VARIANTS = ("original", "transformed")


@dataclass(frozen=True)
class PredictionEntry:
    """One logged model output: a ranked list of distinct class ids."""

    video_id: str
    variant: str
    transform: TransformId | None
    ranking: tuple[int, ...]


class PredictionLog:
    """Ranked predictions keyed by (video id, variant, transform).

    Original entries carry no transform; transformed entries name the clip
    transform that was applied. Rankings must be non-empty and free of
    duplicate class ids; rank 0 is the top-1 prediction. Production logs
    carry at least five ranks so top-5 metrics stay computable, but tiny
    class universes are allowed to carry fewer.
    """

    def __init__(self, entries: Iterable[PredictionEntry] = ()):
        self._originals: dict[str, tuple[int, ...]] = {}
        self._transformed: dict[tuple[str, TransformId], tuple[int, ...]] = {}
        for entry in entries:
            self._add(entry)

    def _add(self, entry: PredictionEntry) -> None:
        ranking = tuple(int(r) for r in entry.ranking)
        if not ranking:
            raise ValidationError(f"video {entry.video_id!r}: empty ranking")
        if len(set(ranking)) != len(ranking):
            raise ValidationError(
                f"video {entry.video_id!r}: ranking contains duplicate class ids"
            )
        if entry.variant == "original":
            if entry.transform is not None:
                raise ValidationError(
                    f"video {entry.video_id!r}: original entry must not "
                    "name a transform"
                )
            if entry.video_id in self._originals:
                raise ValidationError(
                    f"video {entry.video_id!r}: duplicate original entry"
                )
            self._originals[entry.video_id] = ranking
        elif entry.variant == "transformed":
            if entry.transform is None:
                raise ValidationError(
                    f"video {entry.video_id!r}: transformed entry requires a transform"
                )
            key = (entry.video_id, TransformId.parse(entry.transform))
            if key in self._transformed:
                raise ValidationError(
                    f"video {entry.video_id!r}: duplicate transformed entry "
                    f"for {key[1].value}"
                )
            self._transformed[key] = ranking
        else:
            raise ValidationError(
                f"video {entry.video_id!r}: unknown variant {entry.variant!r}"
            )

    def __len__(self) -> int:
        return len(self._originals) + len(self._transformed)

    def original_ranking(self, video_id: str) -> tuple[int, ...] | None:
        return self._originals.get(video_id)

    def transformed_ranking(
        self, video_id: str, transform: TransformId
    ) -> tuple[int, ...] | None:
        return self._transformed.get((video_id, TransformId.parse(transform)))

    def slice(
        self, variant: str, transform: TransformId | str | None = None
    ) -> dict[str, tuple[int, ...]]:
        """All rankings of one variant as a video-id-keyed mapping."""
        if variant == "original":
            return dict(self._originals)
        if variant == "transformed":
            if transform is None:
                raise ConfigurationError("transformed slice requires a transform")
            transform = TransformId.parse(transform)
            return {
                vid: ranking
                for (vid, tr), ranking in self._transformed.items()
                if tr is transform
            }
        raise ConfigurationError(f"unknown variant {variant!r}")


def load_prediction_log(path) -> PredictionLog:
    """Parse a JSONL prediction log; errors carry the offending line number."""
    path = Path(path)
    entries = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as err:
                raise ValidationError(f"{path}:{lineno}: invalid JSON: {err}") from None
            try:
                transform = obj.get("transform")
                entries.append(
                    PredictionEntry(
                        video_id=str(obj["video_id"]),
                        variant=str(obj["variant"]),
                        transform=None if transform is None else TransformId.parse(transform),
                        ranking=tuple(int(r) for r in obj["ranking"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as err:
                raise ValidationError(f"{path}:{lineno}: bad entry: {err}") from None
    try:
        return PredictionLog(entries)
    except ValidationError as err:
        raise ValidationError(f"{path}: {err}") from None


def save_prediction_log(log: PredictionLog, path) -> None:
    lines = []
    for vid in sorted(log.slice("original")):
        lines.append(
            json.dumps(
                {
                    "video_id": vid,
                    "variant": "original",
                    "transform": None,
                    "ranking": list(log.original_ranking(vid)),
                },
                sort_keys=True,
            )
        )
    for (vid, tr), ranking in sorted(
        log._transformed.items(), key=lambda kv: (kv[0][0], kv[0][1].value)
    ):
        lines.append(
            json.dumps(
                {
                    "video_id": vid,
                    "variant": "transformed",
                    "transform": tr.value,
                    "ranking": list(ranking),
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("".join(line + "\n" for line in lines))


@dataclass(frozen=True)
class DiscoveryConfig:
    """Thresholds for extraction: ``lam`` gates recall, ``alpha`` gates affinity."""

    lam: float
    alpha: float

    def __post_init__(self):
        for name, value in (("lam", self.lam), ("alpha", self.alpha)):
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {value}")


def _video_sets(
    log: PredictionLog, manifest: DatasetManifest
) -> tuple[list[int], dict[int, list[str]], dict[int, list[str]]]:
    """Per class: videos with original predictions, and the correct subset."""
    originals = log.slice("original")
    universe = manifest.record_classes()
    with_pred: dict[int, list[str]] = {y: [] for y in universe}
    correct: dict[int, list[str]] = {y: [] for y in universe}
    for y in universe:
        for vid in manifest.videos_of(y):
            ranking = originals.get(vid)
            if ranking is None:
                continue
            with_pred[y].append(vid)
            if ranking[0] == y:
                correct[y].append(vid)
    return universe, with_pred, correct


def class_recall(log: PredictionLog, manifest: DatasetManifest, class_id: int) -> float:
    """Fraction of the class's predicted videos whose top-1 matches the label."""
    _, with_pred, correct = _video_sets(log, manifest)
    if class_id not in with_pred or not with_pred[class_id]:
        raise UndefinedMetricError(
            f"recall undefined for class {class_id}: no videos with original predictions"
        )
    return len(correct[class_id]) / len(with_pred[class_id])


def _transfer_rows(
    log: PredictionLog,
    correct: dict[int, list[str]],
    transform: TransformId,
) -> dict[int, dict[int, float]]:
    missing: list[str] = []
    rows: dict[int, dict[int, float]] = {}
    for y in sorted(correct):
        vids = correct[y]
        if not vids:
            continue
        counts: dict[int, int] = {}
        for vid in vids:
            ranking = log.transformed_ranking(vid, transform)
            if ranking is None:
                missing.append(vid)
                continue
            counts[ranking[0]] = counts.get(ranking[0], 0) + 1
        rows[y] = {y2: n / len(vids) for y2, n in sorted(counts.items())}
    if missing:
        raise IncompleteLogError(
            f"missing transformed predictions ({transform.value}) for "
            f"{len(missing)} video(s): {', '.join(sorted(missing))}",
            video_ids=sorted(missing),
        )
    return rows


def transfer_matrix(
    log: PredictionLog, manifest: DatasetManifest, transform: TransformId | str
) -> dict[int, dict[int, float]]:
    """Row-stochastic transfer proportions over correctly classified videos.

    Row ``y`` maps each predicted class ``y2`` to the fraction of class-y
    videos the model got right originally that are predicted as ``y2``
    after the transform. Classes with no correctly classified videos have
    no row. Raises :class:`IncompleteLogError` naming every video whose
    transformed prediction is absent.
    """
    transform = TransformId.parse(transform)
    _, _, correct = _video_sets(log, manifest)
    return _transfer_rows(log, correct, transform)


def affinity(gamma: dict[int, dict[int, float]], a: int, b: int) -> float:
    """Symmetric evidence that two classes swap into each other.

    The product of the two directed transfer proportions; zero whenever
    either direction was never observed.
    """
    return gamma.get(a, {}).get(b, 0.0) * gamma.get(b, {}).get(a, 0.0)


@dataclass(frozen=True)
class ClassDiagnostic:
    """Extraction evidence for one class."""

    class_id: int
    recall: float
    established: bool
    omega_self: float
    omega_row: dict[int, float]
    candidate_target: int | None
    omega_target: float | None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class DiscoveryReport:
    """The extracted map plus per-class evidence."""

    transform: TransformId
    config: DiscoveryConfig
    map: ClassTransformMap
    diagnostics: dict[int, ClassDiagnostic] = field(repr=False)

    def to_dict(self) -> dict:
        classes = {}
        for y in sorted(self.diagnostics):
            d = self.diagnostics[y]
            classes[str(y)] = {
                "lambda_value": d.recall,
                "established": d.established,
                "omega_self": d.omega_self,
                "omega_row": {str(k): v for k, v in sorted(d.omega_row.items())},
                "candidate_target": d.candidate_target,
                "omega_target": d.omega_target,
                "flags": list(d.flags),
                "result": self.map.entries[y].kind.value,
            }
        return {
            "transform": self.transform.value,
            "config": {"lambda": self.config.lam, "alpha": self.config.alpha},
            "map": transform_map_to_dict(self.map),
            "classes": classes,
        }


def save_discovery_report(report: DiscoveryReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def extract_transform(
    log: PredictionLog,
    manifest: DatasetManifest,
    transform: TransformId | str,
    config: DiscoveryConfig,
) -> DiscoveryReport:
    """Extract the per-class label transform for one clip transform.

    Every class occurring in the manifest records must have at least one
    video with an original prediction; recall below ``config.lam`` yields
    a novel entry flagged ``not_established``. See the module docstring
    for the full decision rule.
    """
    transform = TransformId.parse(transform)
    universe, with_pred, correct = _video_sets(log, manifest)
    for y in universe:
        if not with_pred[y]:
            raise UndefinedMetricError(
                f"recall undefined for class {y}: no videos with original predictions"
            )
    recall = {y: len(correct[y]) / len(with_pred[y]) for y in universe}
    gamma = _transfer_rows(log, correct, transform)

    entries: dict[int, ClassEntry] = {}
    flags: dict[int, list[str]] = {y: [] for y in universe}
    diag_parts: dict[int, dict] = {}
    for y in universe:
        omega_row = {}
        for y2 in universe:
            value = affinity(gamma, y, y2)
            if value > 0.0:
                omega_row[y2] = value
        omega_self = affinity(gamma, y, y)
        # argmax with ties resolved to the lowest class id
        candidate = universe[0]
        best = affinity(gamma, y, universe[0])
        for y2 in universe[1:]:
            value = affinity(gamma, y, y2)
            if value > best:
                candidate, best = y2, value
        established = recall[y] >= config.lam
        diag_parts[y] = {
            "recall": recall[y],
            "established": established,
            "omega_self": omega_self,
            "omega_row": omega_row,
            "candidate_target": candidate,
            "omega_target": best,
        }
        if not established:
            entries[y] = novel()
            flags[y].append("not_established")
        elif omega_self >= config.alpha:
            entries[y] = invariant()
        elif best >= config.alpha and affinity(gamma, candidate, candidate) < config.alpha:
            entries[y] = equivariant(candidate)
        else:
            entries[y] = novel()

    # demote one-sided equivariant claims so the emitted map stays
    # self-invertible
    conflicted = [
        y
        for y, entry in entries.items()
        if entry.kind is EntryKind.EQUIVARIANT
        and entries.get(entry.target) != equivariant(y)
    ]
    for y in conflicted:
        entries[y] = novel()
        flags[y].append("conflict")

    diagnostics = {
        y: ClassDiagnostic(class_id=y, flags=tuple(flags[y]), **diag_parts[y])
        for y in universe
    }
    return DiscoveryReport(
        transform=transform,
        config=config,
        map=ClassTransformMap(transform, entries),
        diagnostics=diagnostics,
    )


class ScoreCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int


def score_against_ground_truth(
    discovered: ClassTransformMap, truth: ClassTransformMap
) -> ScoreCounts:
    """Score extraction as binary detection of per-class mappings.

    A mapping means an invariant or equivariant entry. Per class: TP when
    truth has a mapping and the discovered entry matches it exactly; FN
    when truth has a mapping but discovery says novel; FP when discovery
    asserts a mapping that differs from truth's, or asserts one where
    truth is novel; TN when both say novel. The four counts partition the
    class set.
    """
    if set(discovered.entries) != set(truth.entries):
        only_d = sorted(set(discovered.entries) - set(truth.entries))
        only_t = sorted(set(truth.entries) - set(discovered.entries))
        raise ValidationError(
            f"class universes differ (only discovered: {only_d}, only truth: {only_t})"
        )
    tp = fp = fn = tn = 0
    for y, truth_entry in truth.entries.items():
        got = discovered.entries[y]
        truth_maps = truth_entry.kind is not EntryKind.NOVEL
        got_maps = got.kind is not EntryKind.NOVEL
        if truth_maps and got_maps:
            if got.kind is truth_entry.kind and got.target == truth_entry.target:
                tp += 1
            else:
                fp += 1
        elif truth_maps:
            fn += 1
        elif got_maps:
            fp += 1
        else:
            tn += 1
    return ScoreCounts(tp, fp, fn, tn)


@dataclass(frozen=True)
class GridPoint:
    lam: float
    alpha: float
    counts: ScoreCounts


@dataclass(frozen=True)
class SweepResult:
    best: GridPoint
    table: tuple[GridPoint, ...]


def sweep(
    log: PredictionLog,
    manifest: DatasetManifest,
    transform: TransformId | str,
    truth: ClassTransformMap,
    lambdas: Iterable[float],
    alphas: Iterable[float],
) -> SweepResult:
    """Grid-search thresholds, maximizing the true-positive count.

    Ties prefer higher TN, then lower ``lam``, then lower ``alpha``.
    """
    lambdas = list(lambdas)
    alphas = list(alphas)
    if not lambdas or not alphas:
        raise ConfigurationError("sweep grids must be non-empty")
    table = []
    best = None
    best_key = None
    for lam in lambdas:
        for alpha in alphas:
            report = extract_transform(
                log, manifest, transform, DiscoveryConfig(lam, alpha)
            )
            counts = score_against_ground_truth(report.map, truth)
            point = GridPoint(lam, alpha, counts)
            table.append(point)
            key = (counts.tp, counts.tn, -lam, -alpha)
            if best_key is None or key > best_key:
                best, best_key = point, key
    return SweepResult(best=best, table=tuple(table))
