"""Dataset manifests and per-class transform maps.

A manifest lists (video id, class id, split) records plus a class-name
table. A class-transform map records, for one clip transform, what
happens to each class label: it survives unchanged (invariant), swaps
with a counterpart class (equivariant), or leaves the dataset's label set
entirely (novel-generating). Both structures are immutable after load and
safe to share across threads.

On-disk formats:

* manifest: JSONL, one ``{"video_id", "class_id", "split"}`` object per
  line; class names in a sidecar JSON array indexed by class id.
* transform map: a single JSON object
  ``{"transform": "TR", "classes": {"0": {"kind": "invariant"},
  "1": {"kind": "equivariant", "target": 2},
  "5": {"kind": "novel", "realistic": true}}}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .errors import ValidationError
from .tensor import TransformId

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class VideoRecord:
    video_id: str
    class_id: int
    split: str


class DatasetManifest:
    """An immutable collection of video records plus the class-name table.

    When ``class_names`` is omitted, placeholder names are generated for
    the class ids present in the records.
    """

    def __init__(self, records, class_names=None):
        records = tuple(records)
        seen = set()
        for rec in records:
            if rec.video_id in seen:
                raise ValidationError(f"duplicate video_id {rec.video_id!r}")
            seen.add(rec.video_id)
            if rec.class_id < 0:
                raise ValidationError(
                    f"video {rec.video_id!r}: negative class_id {rec.class_id}"
                )
            if rec.split not in SPLITS:
                raise ValidationError(
                    f"video {rec.video_id!r}: unknown split {rec.split!r}"
                )
        if class_names is None:
            class_names = {r.class_id: f"class-{r.class_id}" for r in records}
        else:
            class_names = {int(k): str(v) for k, v in dict(class_names).items()}
            for rec in records:
                if rec.class_id not in class_names:
                    raise ValidationError(
                        f"video {rec.video_id!r}: class_id {rec.class_id} "
                        "missing from class-name table"
                    )
        self._records = records
        self._class_names = class_names
        self._by_video = {r.video_id: r for r in records}
        by_class: dict[int, list[str]] = {}
        for rec in records:
            by_class.setdefault(rec.class_id, []).append(rec.video_id)
        self._by_class = by_class

    @property
    def records(self) -> tuple[VideoRecord, ...]:
        return self._records

    @property
    def class_names(self) -> dict[int, str]:
        return dict(self._class_names)

    @property
    def class_ids(self) -> list[int]:
        """All known class ids (from the name table), ascending."""
        return sorted(self._class_names)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, video_id: str) -> bool:
        return video_id in self._by_video

    def class_of(self, video_id: str) -> int:
        try:
            return self._by_video[video_id].class_id
        except KeyError:
            raise ValidationError(f"unknown video_id {video_id!r}") from None

    def videos_of(self, class_id: int) -> list[str]:
        """Video ids of one class, in record order."""
        return list(self._by_class.get(class_id, ()))

    def record_classes(self) -> list[int]:
        """Class ids that actually occur in records, ascending."""
        return sorted(self._by_class)

    def filter_split(self, split: str) -> "DatasetManifest":
        if split not in SPLITS:
            raise ValidationError(f"unknown split {split!r}")
        kept = [r for r in self._records if r.split == split]
        return DatasetManifest(kept, self._class_names)

    def train_count(self, class_id: int) -> int:
        return sum(
            1 for v in self._by_class.get(class_id, ()) if self._by_video[v].split == "train"
        )


def load_class_names(path) -> dict[int, str]:
    """Read a class-name sidecar: a JSON array indexed by class id."""
    path = Path(path)
    try:
        names = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: invalid JSON: {err}") from None
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ValidationError(f"{path}: expected a JSON array of strings")
    return {i: n for i, n in enumerate(names)}


def load_manifest(path, class_names_path=None) -> DatasetManifest:
    """Parse a JSONL manifest, optionally with a class-name sidecar.

    Raises :class:`ValidationError` with the offending line number on
    parse problems, and on duplicate video ids or class ids missing from
    the sidecar.
    """
    path = Path(path)
    names = load_class_names(class_names_path) if class_names_path else None
    records = []
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
                rec = VideoRecord(
                    video_id=str(obj["video_id"]),
                    class_id=int(obj["class_id"]),
                    split=str(obj["split"]),
                )
            except (KeyError, TypeError, ValueError) as err:
                raise ValidationError(f"{path}:{lineno}: bad record: {err}") from None
            records.append(rec)
    return DatasetManifest(records, names)


def save_manifest(manifest: DatasetManifest, path) -> None:
    lines = [
        json.dumps(
            {"video_id": r.video_id, "class_id": r.class_id, "split": r.split},
            sort_keys=True,
        )
        for r in manifest.records
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


class EntryKind(str, Enum):
    INVARIANT = "invariant"
    EQUIVARIANT = "equivariant"
    NOVEL = "novel"


@dataclass(frozen=True)
class ClassEntry:
    """Outcome for one class under a clip transform."""

    kind: EntryKind
    target: int | None = None
    realistic: bool | None = None

    def __post_init__(self):
        if self.kind is EntryKind.EQUIVARIANT:
            if self.target is None:
                raise ValidationError("equivariant entry requires a target class")
        elif self.target is not None:
            raise ValidationError(f"{self.kind.value} entry must not carry a target")


def invariant() -> ClassEntry:
    return ClassEntry(EntryKind.INVARIANT)


def equivariant(target: int) -> ClassEntry:
    return ClassEntry(
        EntryKind.EQUIVARIANT, target=None if target is None else int(target)
    )


def novel(realistic: bool | None = None) -> ClassEntry:
    return ClassEntry(EntryKind.NOVEL, realistic=realistic)


@dataclass(frozen=True)
class ClassTransformMap:
    """Per-class label outcomes for one transform (truth or discovered)."""

    transform: TransformId
    entries: dict[int, ClassEntry]

    def __post_init__(self):
        object.__setattr__(self, "transform", TransformId.parse(self.transform))
        object.__setattr__(
            self, "entries", {int(k): v for k, v in dict(self.entries).items()}
        )

    @property
    def classes(self) -> list[int]:
        return sorted(self.entries)

    def mapped(self, class_id: int) -> int | None:
        """The transformed label for a class, or None when it leaves the set."""
        entry = self.entries.get(class_id)
        if entry is None or entry.kind is EntryKind.NOVEL:
            return None
        if entry.kind is EntryKind.INVARIANT:
            return class_id
        return entry.target

    def equivariant_pairs(self) -> list[tuple[int, int]]:
        """Canonical (low, high) equivariant pairs, sorted by the low member."""
        pairs = set()
        for y, entry in self.entries.items():
            if entry.kind is EntryKind.EQUIVARIANT and entry.target != y:
                pairs.add((min(y, entry.target), max(y, entry.target)))
        return sorted(pairs)


def validate_transform_map(
    cmap: ClassTransformMap, manifest: DatasetManifest
) -> list[str]:
    """Collect every invariant violation in ``cmap`` against ``manifest``.

    Violations are data, not failures: an empty list means the map is
    valid. Checked: entries for unknown classes, equivariant targets
    outside the class set, self-targeting entries, and asymmetric pairs
    (y maps to y' but y' does not map back to y).
    """
    known = set(manifest.class_names)
    violations = []
    for y in sorted(cmap.entries):
        entry = cmap.entries[y]
        if y not in known:
            violations.append(f"class {y}: not in the manifest class set")
        if entry.kind is not EntryKind.EQUIVARIANT:
            continue
        t = entry.target
        if t == y:
            violations.append(f"class {y}: equivariant entry targets itself")
            continue
        if t not in known:
            violations.append(f"class {y}: equivariant target {t} not in the manifest class set")
        back = cmap.entries.get(t)
        if back is None or back.kind is not EntryKind.EQUIVARIANT or back.target != y:
            violations.append(
                f"class {y}: equivariant target {t} does not map back to {y}"
            )
    return violations


def category_counts(cmap: ClassTransformMap) -> tuple[int, int, int, int]:
    """(invariant, equivariant, novel-realistic, novel-unrealistic) entry counts.

    Equivariant classes are counted per class, not per pair. Novel entries
    without an explicit ``realistic: true`` flag land in the unrealistic
    column.
    """
    n_inv = n_eq = n_real = n_unreal = 0
    for entry in cmap.entries.values():
        if entry.kind is EntryKind.INVARIANT:
            n_inv += 1
        elif entry.kind is EntryKind.EQUIVARIANT:
            n_eq += 1
        elif entry.realistic:
            n_real += 1
        else:
            n_unreal += 1
    return (n_inv, n_eq, n_real, n_unreal)


def transform_map_to_dict(cmap: ClassTransformMap) -> dict:
    classes = {}
    for y in sorted(cmap.entries):
        entry = cmap.entries[y]
        obj: dict = {"kind": entry.kind.value}
        if entry.kind is EntryKind.EQUIVARIANT:
            obj["target"] = entry.target
        elif entry.kind is EntryKind.NOVEL and entry.realistic is not None:
            obj["realistic"] = entry.realistic
        classes[str(y)] = obj
    return {"transform": cmap.transform.value, "classes": classes}


def transform_map_from_dict(obj: dict, source: str = "<dict>") -> ClassTransformMap:
    try:
        transform = TransformId.parse(obj["transform"])
        entries = {}
        for key, val in obj["classes"].items():
            kind = EntryKind(val["kind"])
            if kind is EntryKind.EQUIVARIANT:
                entries[int(key)] = equivariant(int(val["target"]))
            elif kind is EntryKind.NOVEL:
                entries[int(key)] = novel(val.get("realistic"))
            else:
                entries[int(key)] = invariant()
    except (KeyError, TypeError, ValueError) as err:
        raise ValidationError(f"{source}: bad transform map: {err}") from None
    return ClassTransformMap(transform, entries)


def load_transform_map(path) -> ClassTransformMap:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ValidationError(f"{path}: invalid JSON: {err}") from None
    return transform_map_from_dict(obj, source=str(path))


def save_transform_map(cmap: ClassTransformMap, path) -> None:
    Path(path).write_text(json.dumps(transform_map_to_dict(cmap), indent=2, sort_keys=True) + "\n")


_BUNDLED_MAPS = {
    "jester-hf": "jester_hf.json",
    "jester-tr": "jester_tr.json",
    "something-hf": "something_hf.json",
    "something-tr": "something_tr.json",
}
_BUNDLED_CLASS_NAMES = {"jester": "jester_classes.json"}


def bundled_map(name: str) -> ClassTransformMap:
    """Load one of the shipped ground-truth transform maps.

    Names: ``jester-hf``, ``jester-tr``, ``something-hf``,
    ``something-tr``. The Jester maps carry the full 27-class gesture
    taxonomy; the Something maps are structural (ids only), since only
    their per-category counts are established.
    """
    try:
        filename = _BUNDLED_MAPS[name]
    except KeyError:
        raise ValidationError(
            f"unknown bundled map {name!r}; choose from {sorted(_BUNDLED_MAPS)}"
        ) from None
    text = resources.files(__package__).joinpath(f"fixtures/{filename}").read_text()
    return transform_map_from_dict(json.loads(text), source=f"fixtures/{filename}")


def bundled_class_names(name: str) -> dict[int, str]:
    """Load a shipped class-name table (currently only ``jester``)."""
    try:
        filename = _BUNDLED_CLASS_NAMES[name]
    except KeyError:
        raise ValidationError(
            f"unknown bundled class names {name!r}; choose from "
            f"{sorted(_BUNDLED_CLASS_NAMES)}"
        ) from None
    text = resources.files(__package__).joinpath(f"fixtures/{filename}").read_text()
    names = json.loads(text)
    return {i: n for i, n in enumerate(names)}
