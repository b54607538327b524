"""Patient-level train/validation/test partitioning.

Subjects (not stays) are shuffled and partitioned, so every stay of a
subject lands in that subject's split and no identity straddles splits.
The shuffle uses numpy's PCG64 generator on the lexicographically sorted
subject list, making the assignment a pure function of
(subject set, ratios, seed), independent of cohort row order and platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SplitEmpty, SplitTooSmall
from .ingest import CohortTable

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitAssignment:
    by_subject: dict[str, str]
    by_stay: dict[str, str]
    counts: dict[str, dict[str, int]]
    ratios: tuple[float, float, float]
    seed: int

    def stays_in(self, split: str) -> set[str]:
        return {stay for stay, name in self.by_stay.items() if name == split}


def split_patients(cohort: CohortTable, ratios: tuple[float, float, float],
                   seed: int) -> SplitAssignment:
    """Assign subjects to train/val/test by the floor rule.

    The sorted unique subjects are shuffled; the first floor(r_train * P)
    go to train, the next floor(r_val * P) to val, and the remainder to
    test. Raises SplitTooSmall below three subjects and SplitEmpty if any
    split would receive no subjects.
    """
    subjects = sorted(set(cohort.subject_ids()))
    total = len(subjects)
    if total < 3:
        raise SplitTooSmall(f"need at least 3 distinct subjects, got {total}")

    n_train = math.floor(ratios[0] * total)
    n_val = math.floor(ratios[1] * total)
    n_test = total - n_train - n_val
    for name, count in zip(SPLITS, (n_train, n_val, n_test)):
        if count <= 0:
            raise SplitEmpty(f"split {name!r} would be empty for {total} subjects at {ratios}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(total)
    shuffled = [subjects[i] for i in order]

    by_subject: dict[str, str] = {}
    for i, subject in enumerate(shuffled):
        if i < n_train:
            by_subject[subject] = "train"
        elif i < n_train + n_val:
            by_subject[subject] = "val"
        else:
            by_subject[subject] = "test"

    by_stay = {r.stay_id: by_subject[r.subject_id] for r in cohort.records}
    counts = {name: {"patients": 0, "stays": 0} for name in SPLITS}
    for subject, name in by_subject.items():
        counts[name]["patients"] += 1
    for stay, name in by_stay.items():
        counts[name]["stays"] += 1

    return SplitAssignment(by_subject=by_subject, by_stay=by_stay, counts=counts,
                           ratios=tuple(ratios), seed=seed)
