"""Building augmented and zero-shot manifests from class-transform maps.

Synthetic examples are manifest records referencing (source video,
transform); tensors are only materialized on demand by the CLI, since
manifests are cheap and clips are large. The seeded sampler at the bottom
provides the online-augmentation policy: each active transform is applied
independently with probability ``p`` and the label is pushed through the
corresponding class transforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, EmptySplitError, ValidationError
from .manifest import (
    ClassTransformMap,
    DatasetManifest,
    EntryKind,
    validate_transform_map,
)
from .tensor import TransformId

PROVENANCES = ("augment", "zeroshot")


def synthetic_video_id(source_video_id: str, transforms: Sequence[TransformId]) -> str:
    """Deterministic id for a transformed copy of a source video."""
    return source_video_id + "".join(f"~{t.value.lower()}" for t in transforms)


@dataclass(frozen=True)
class SyntheticExample:
    """A to-be-materialized transformed copy of a real video."""

    source_video_id: str
    applied_transform: TransformId
    assigned_class: int
    provenance: str

    def __post_init__(self):
        object.__setattr__(
            self, "applied_transform", TransformId.parse(self.applied_transform)
        )
        if self.provenance not in PROVENANCES:
            raise ValidationError(f"unknown provenance {self.provenance!r}")

    @property
    def video_id(self) -> str:
        return synthetic_video_id(self.source_video_id, [self.applied_transform])


def _require_valid(cmap: ClassTransformMap, manifest: DatasetManifest) -> None:
    violations = validate_transform_map(cmap, manifest)
    if violations:
        raise ValidationError(
            "invalid class-transform map: " + "; ".join(violations)
        )


def build_augmented(
    manifest: DatasetManifest, cmap: ClassTransformMap
) -> list[SyntheticExample]:
    """Target-conditional augmentation records for every training example.

    Each training video of an invariant class contributes one transformed
    copy with the same label; each training video of an equivariant class
    contributes one transformed copy labelled as the counterpart, so the
    two sides of a pair end up with equal support. Novel classes (and
    classes absent from the map) contribute nothing.
    """
    _require_valid(cmap, manifest)
    out = []
    for rec in manifest.records:
        if rec.split != "train":
            continue
        target = cmap.mapped(rec.class_id)
        if target is None:
            continue
        out.append(
            SyntheticExample(
                source_video_id=rec.video_id,
                applied_transform=cmap.transform,
                assigned_class=target,
                provenance="augment",
            )
        )
    return out


@dataclass(frozen=True)
class ZeroShotSplit:
    """An equivariant-pair dataset rewritten for zero-shot evaluation.

    Per pair, the class with more training examples is kept as the
    many-shot class; all real training examples of its counterpart are
    dropped and replaced by transformed many-shot examples, so the
    counterpart is learned without a single real training video. Val and
    test records of zero-shot classes are retained for evaluation.
    """

    transform: TransformId
    many_shot_classes: tuple[int, ...]
    zero_shot_classes: tuple[int, ...]
    retained: DatasetManifest
    synthesized: tuple[SyntheticExample, ...]


def build_zero_shot_subset(
    manifest: DatasetManifest,
    cmap: ClassTransformMap,
    transform: TransformId | str | None = None,
) -> ZeroShotSplit:
    """Construct the zero-shot split from the map's equivariant pairs.

    ``transform`` defaults to the map's transform and must match it when
    given. Ties in training support go to the lower class id. Raises
    :class:`EmptySplitError` when the map has no equivariant pairs.
    """
    if transform is not None and TransformId.parse(transform) is not cmap.transform:
        raise ConfigurationError(
            f"requested transform {TransformId.parse(transform).value} does not "
            f"match the map's {cmap.transform.value}"
        )
    _require_valid(cmap, manifest)
    pairs = cmap.equivariant_pairs()
    if not pairs:
        raise EmptySplitError("the class-transform map has no equivariant pairs")

    many_shot: list[int] = []
    zero_shot: list[int] = []
    counterpart: dict[int, int] = {}
    for low, high in pairs:
        n_low, n_high = manifest.train_count(low), manifest.train_count(high)
        many, zero = (high, low) if n_high > n_low else (low, high)
        many_shot.append(many)
        zero_shot.append(zero)
        counterpart[many] = zero

    zero_set = set(zero_shot)
    retained = [
        r
        for r in manifest.records
        if not (r.split == "train" and r.class_id in zero_set)
    ]
    synthesized = [
        SyntheticExample(
            source_video_id=r.video_id,
            applied_transform=cmap.transform,
            assigned_class=counterpart[r.class_id],
            provenance="zeroshot",
        )
        for r in manifest.records
        if r.split == "train" and r.class_id in counterpart
    ]
    return ZeroShotSplit(
        transform=cmap.transform,
        many_shot_classes=tuple(sorted(many_shot)),
        zero_shot_classes=tuple(sorted(zero_shot)),
        retained=DatasetManifest(retained, manifest.class_names),
        synthesized=tuple(synthesized),
    )


def save_synthetic_manifest(examples: Iterable[SyntheticExample], path) -> None:
    lines = [
        json.dumps(
            {
                "video_id": ex.video_id,
                "source": ex.source_video_id,
                "transform": ex.applied_transform.value,
                "class_id": ex.assigned_class,
                "origin": ex.provenance,
            },
            sort_keys=True,
        )
        for ex in examples
    ]
    Path(path).write_text("".join(line + "\n" for line in lines))


def load_synthetic_manifest(path) -> list[SyntheticExample]:
    path = Path(path)
    out = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    SyntheticExample(
                        source_video_id=str(obj["source"]),
                        applied_transform=TransformId.parse(obj["transform"]),
                        assigned_class=int(obj["class_id"]),
                        provenance=str(obj["origin"]),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as err:
                raise ValidationError(f"{path}:{lineno}: bad record: {err}") from None
    return out


@dataclass(frozen=True)
class SampledExample:
    """One sampler outcome: the (possibly transformed) video and its label."""

    video_id: str
    source_video_id: str
    class_id: int
    applied: tuple[TransformId, ...]

    @property
    def is_synthetic(self) -> bool:
        return bool(self.applied)


class AugmentationSampler:
    """Seeded per-example augmentation with label bookkeeping.

    One class-transform map per active transform, applied in the given
    order; each is switched on independently with probability ``p``. The
    label is pushed through the class transforms of whichever clips
    transforms fire. Identical (seed, call sequence) produces identical
    outcomes. Encountering a class that is novel (or unmapped) under any
    active transform is a hard error, raised before any randomness is
    consumed so the decision sequence stays seed-aligned.

    Parallel loaders should derive one sampler per worker via
    :meth:`for_worker` instead of sharing an instance.
    """

    def __init__(self, maps: Sequence[ClassTransformMap], p: float, seed: int):
        maps = list(maps)
        if not maps:
            raise ConfigurationError("sampler requires at least one class-transform map")
        transforms = [m.transform for m in maps]
        if len(set(transforms)) != len(transforms):
            raise ConfigurationError("duplicate transform in sampler maps")
        if not 0.0 <= p <= 1.0:
            raise ConfigurationError(f"p must lie in [0, 1], got {p}")
        self._maps = maps
        self._p = float(p)
        self._seed = seed
        self._rng = np.random.default_rng(seed)

    @classmethod
    def for_worker(
        cls,
        maps: Sequence[ClassTransformMap],
        p: float,
        master_seed: int,
        worker_index: int,
    ) -> "AugmentationSampler":
        """A sampler whose stream is derived from (master seed, worker index)."""
        sampler = cls(maps, p, 0)
        sampler._rng = np.random.default_rng(
            np.random.SeedSequence([int(master_seed), int(worker_index)])
        )
        return sampler

    @property
    def transforms(self) -> tuple[TransformId, ...]:
        return tuple(m.transform for m in self._maps)

    def _check_sampleable(self, class_id: int) -> None:
        # every label reachable under any on/off pattern must stay mapped
        reachable = {class_id}
        for cmap in self._maps:
            mapped = set()
            for label in reachable:
                entry = cmap.entries.get(label)
                if entry is None or entry.kind is EntryKind.NOVEL:
                    raise ValidationError(
                        f"class {label} has no label transform under "
                        f"{cmap.transform.value}; novel classes cannot be sampled"
                    )
                mapped.add(cmap.mapped(label))
            reachable |= mapped

    def sample(self, video_id: str, class_id: int) -> SampledExample:
        """Draw one augmentation decision per active transform."""
        self._check_sampleable(class_id)
        applied: list[TransformId] = []
        label = class_id
        for cmap in self._maps:
            if self._rng.random() < self._p:
                applied.append(cmap.transform)
                label = cmap.mapped(label)
        out_id = synthetic_video_id(video_id, applied) if applied else video_id
        return SampledExample(
            video_id=out_id,
            source_video_id=video_id,
            class_id=label,
            applied=tuple(applied),
        )
