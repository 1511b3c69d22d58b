"""Top-k accuracy, confusion matrices, and per-group breakdowns.

All metrics evaluate manifest records against one slice of a prediction
log (original, or transformed under a named clip transform). Records
without a prediction in the chosen slice are skipped; an empty evaluation
set is an error rather than a silent zero. Aggregation is pure, so
partitioned computation merges to bit-identical results.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigurationError, UndefinedMetricError, ValidationError
from .discovery import PredictionLog
from .manifest import ClassTransformMap, DatasetManifest
from .tensor import TransformId


def _evaluated(
    log: PredictionLog,
    manifest: DatasetManifest,
    variant: str,
    transform: TransformId | str | None,
) -> list[tuple[int, tuple[int, ...]]]:
    rankings = log.slice(variant, transform)
    return [
        (rec.class_id, rankings[rec.video_id])
        for rec in manifest.records
        if rec.video_id in rankings
    ]


def topk_accuracy(
    log: PredictionLog,
    manifest: DatasetManifest,
    k: int,
    class_filter: Iterable[int] | None = None,
    variant: str = "original",
    transform: TransformId | str | None = None,
) -> float:
    """Fraction of evaluated examples whose label is in the first k ranks."""
    if k < 1:
        raise ConfigurationError(f"k must be positive, got {k}")
    if class_filter is not None:
        class_filter = set(class_filter)
        unknown = class_filter - set(manifest.class_names)
        if unknown:
            raise ConfigurationError(
                f"class filter contains unknown classes {sorted(unknown)}"
            )
    pairs = _evaluated(log, manifest, variant, transform)
    if class_filter is not None:
        pairs = [(y, r) for y, r in pairs if y in class_filter]
    if not pairs:
        raise UndefinedMetricError("no examples to evaluate")
    hits = 0
    for y, ranking in pairs:
        if k > len(ranking):
            raise ConfigurationError(
                f"k={k} exceeds ranking length {len(ranking)}"
            )
        if y in ranking[:k]:
            hits += 1
    return hits / len(pairs)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Square count matrix: rows are true classes, columns top-1 predictions.

    ``excluded`` counts examples dropped because their label maps outside
    the class set under the requested label transform.
    """

    classes: tuple[int, ...]
    counts: np.ndarray
    excluded: int
    ordering: str

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> dict[int, int]:
        return {y: int(self.counts[i].sum()) for i, y in enumerate(self.classes)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("true_class," + ",".join(str(c) for c in self.classes) + "\n")
        for i, y in enumerate(self.classes):
            buf.write(str(y) + "," + ",".join(str(int(n)) for n in self.counts[i]) + "\n")
        return buf.getvalue()


def _class_order(
    manifest: DatasetManifest, cmap: ClassTransformMap | None
) -> tuple[tuple[int, ...], str]:
    universe = manifest.class_ids
    if cmap is None:
        return tuple(universe), "ascending"
    ordered: list[int] = []
    in_universe = set(universe)
    for low, high in cmap.equivariant_pairs():
        if low in in_universe and high in in_universe:
            ordered.extend((low, high))
    rest = [y for y in universe if y not in set(ordered)]
    return tuple(ordered + rest), "pairs-adjacent"


def confusion(
    log: PredictionLog,
    manifest: DatasetManifest,
    cmap: ClassTransformMap | None = None,
    apply_label_transform: bool = False,
    variant: str = "original",
    transform: TransformId | str | None = None,
) -> ConfusionMatrix:
    """Tabulate top-1 predictions against (optionally transformed) labels.

    With ``apply_label_transform`` set, each true label is first pushed
    through the map; examples of novel classes are excluded and counted.
    When a map is given, class ordering places equivariant pairs adjacent
    (pairs sorted by their lower member), remaining classes ascending.
    """
    if apply_label_transform and cmap is None:
        raise ConfigurationError("label transform requested without a class-transform map")
    order, ordering = _class_order(manifest, cmap)
    index = {y: i for i, y in enumerate(order)}
    counts = np.zeros((len(order), len(order)), dtype=np.int64)
    excluded = 0
    for y, ranking in _evaluated(log, manifest, variant, transform):
        if apply_label_transform:
            mapped = cmap.mapped(y)
            if mapped is None:
                excluded += 1
                continue
            y = mapped
        top1 = ranking[0]
        if y not in index:
            raise ValidationError(f"true class {y} outside the manifest class set")
        if top1 not in index:
            raise ValidationError(f"predicted class {top1} outside the manifest class set")
        counts[index[y], index[top1]] += 1
    return ConfusionMatrix(
        classes=order, counts=counts, excluded=excluded, ordering=ordering
    )


@dataclass(frozen=True)
class BreakdownRow:
    """Top-k accuracies for one named class group; empty groups carry None."""

    name: str
    n_examples: int
    accuracies: dict[int, float | None]


def breakdown(
    log: PredictionLog,
    manifest: DatasetManifest,
    groups: Mapping[str, Iterable[int]],
    ks: Iterable[int] = (1, 5),
    variant: str = "original",
    transform: TransformId | str | None = None,
) -> list[BreakdownRow]:
    """Per-group top-k accuracy table; groups may overlap.

    A group with no evaluated examples yields a flagged row (None
    accuracies) rather than an error.
    """
    ks = list(ks)
    pairs = _evaluated(log, manifest, variant, transform)
    known = set(manifest.class_names)
    rows = []
    for name, class_ids in groups.items():
        class_set = set(class_ids)
        unknown = class_set - known
        if unknown:
            raise ConfigurationError(
                f"group {name!r} contains unknown classes {sorted(unknown)}"
            )
        selected = [(y, r) for y, r in pairs if y in class_set]
        if not selected:
            rows.append(BreakdownRow(name, 0, {k: None for k in ks}))
            continue
        accs: dict[int, float | None] = {}
        for k in ks:
            hits = 0
            for y, ranking in selected:
                if k > len(ranking):
                    raise ConfigurationError(
                        f"k={k} exceeds ranking length {len(ranking)}"
                    )
                if y in ranking[:k]:
                    hits += 1
            accs[k] = hits / len(selected)
        rows.append(BreakdownRow(name, len(selected), accs))
    return rows


def breakdown_to_csv(rows: Iterable[BreakdownRow], ks: Iterable[int] = (1, 5)) -> str:
    ks = list(ks)
    buf = io.StringIO()
    buf.write("group,n," + ",".join(f"top{k}" for k in ks) + "\n")
    for row in rows:
        cells = [row.name, str(row.n_examples)]
        for k in ks:
            acc = row.accuracies.get(k)
            cells.append("n/a" if acc is None else f"{acc:.6f}")
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()
