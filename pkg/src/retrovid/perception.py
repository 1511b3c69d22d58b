"""Forced-choice study statistics: catch-trial QC and the reversibility test.

Submissions are per-worker batches of two-video choices. A known number of
catch trials is planted in each batch; submissions that miss too many are
dropped wholesale. Accepted non-catch choices aggregate into per-class
tallies of (trials, forward-time picks). A class counts as reversible when
its forward-time preference stays inside a three-sigma normal band around
an even coin flip.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import ValidationError


@dataclass(frozen=True)
class PairChoice:
    """One two-video decision. Catch trials record correctness instead of a class."""

    catch: bool
    class_id: int | None = None
    chose_forward: bool | None = None
    correct: bool | None = None

    def __post_init__(self):
        if self.catch:
            if self.correct is None:
                raise ValidationError("catch trial requires a correct flag")
        elif self.class_id is None or self.chose_forward is None:
            raise ValidationError("real trial requires class_id and chose_forward")


@dataclass(frozen=True)
class SubmissionRecord:
    worker_id: str
    choices: tuple[PairChoice, ...]

    @property
    def catch_total(self) -> int:
        return sum(1 for c in self.choices if c.catch)

    @property
    def catch_correct(self) -> int:
        return sum(1 for c in self.choices if c.catch and c.correct)


@dataclass(frozen=True)
class ClassTally:
    """Accepted trials for one class: n total, x forward-time picks."""

    class_id: int
    n: int
    x: int

    def __post_init__(self):
        if self.n < 0 or not 0 <= self.x <= self.n:
            raise ValidationError(
                f"class {self.class_id}: bad tally x={self.x}, n={self.n}"
            )


class Verdict(str, Enum):
    REVERSIBLE = "reversible"
    FORWARD_PREFERRED = "forward-preferred"
    REVERSED_PREFERRED = "reversed-preferred"


def qc_filter(
    submissions, k: int, min_correct: int
) -> list[SubmissionRecord]:
    """Keep submissions with at least ``min_correct`` of ``k`` catch trials right.

    Every submission must contain exactly ``k`` catch trials; anything
    else is malformed input. Accepted submissions pass through untouched.
    """
    accepted = []
    for sub in submissions:
        if sub.catch_total != k:
            raise ValidationError(
                f"submission {sub.worker_id!r}: expected {k} catch trials, "
                f"found {sub.catch_total}"
            )
        if sub.catch_correct >= min_correct:
            accepted.append(sub)
    return accepted


def tally(submissions) -> list[ClassTally]:
    """Aggregate non-catch choices into per-class tallies, ascending class id."""
    n: dict[int, int] = {}
    x: dict[int, int] = {}
    for sub in submissions:
        for choice in sub.choices:
            if choice.catch:
                continue
            n[choice.class_id] = n.get(choice.class_id, 0) + 1
            if choice.chose_forward:
                x[choice.class_id] = x.get(choice.class_id, 0) + 1
    return [ClassTally(y, n[y], x.get(y, 0)) for y in sorted(n)]


def reversibility_bounds(n: int) -> tuple[float, float]:
    """Three-sigma band around 0.5 for n fair coin flips, clamped to [0, 1].

    Uses the plain normal approximation (no continuity correction):
    sigma = sqrt(0.25 / n).
    """
    if n < 1:
        raise ValidationError(f"trial count must be positive, got {n}")
    sigma = math.sqrt(0.25 / n)
    return (max(0.0, 0.5 - 3.0 * sigma), min(1.0, 0.5 + 3.0 * sigma))


def classify_reversibility(t: ClassTally) -> Verdict:
    """Reversible iff the forward-choice proportion lies within the closed band."""
    lower, upper = reversibility_bounds(t.n)
    p = t.x / t.n
    if p > upper:
        return Verdict.FORWARD_PREFERRED
    if p < lower:
        return Verdict.REVERSED_PREFERRED
    return Verdict.REVERSIBLE


def load_tally_csv(path) -> list[ClassTally]:
    """Read ``class_id,n_trials,forward_choices`` rows (header required)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "class_id,n_trials,forward_choices":
        raise ValidationError(
            f"{path}: expected header 'class_id,n_trials,forward_choices'"
        )
    tallies = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValidationError(f"{path}:{lineno}: expected 3 columns")
        try:
            tallies.append(ClassTally(int(parts[0]), int(parts[1]), int(parts[2])))
        except ValueError as err:
            raise ValidationError(f"{path}:{lineno}: {err}") from None
    return tallies


def save_tally_csv(tallies, path) -> None:
    lines = ["class_id,n_trials,forward_choices"]
    lines += [f"{t.class_id},{t.n},{t.x}" for t in tallies]
    Path(path).write_text("\n".join(lines) + "\n")


def load_submissions(path) -> list[SubmissionRecord]:
    """Read submissions JSONL: one worker batch of pair choices per line."""
    path = Path(path)
    out = []
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
                choices = []
                for c in obj["pairs"]:
                    if c.get("catch"):
                        choices.append(PairChoice(catch=True, correct=bool(c["correct"])))
                    else:
                        choices.append(
                            PairChoice(
                                catch=False,
                                class_id=int(c["class_id"]),
                                chose_forward=bool(c["chose_forward"]),
                            )
                        )
                out.append(
                    SubmissionRecord(
                        worker_id=str(obj["worker_id"]), choices=tuple(choices)
                    )
                )
            except (KeyError, TypeError, ValueError) as err:
                raise ValidationError(f"{path}:{lineno}: bad submission: {err}") from None
    return out
