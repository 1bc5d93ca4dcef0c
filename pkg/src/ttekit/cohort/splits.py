"""Held-out selection and censored-stratified k-fold assignment.

The held-out set is drawn uniformly without replacement.  The remaining
patients are split so that each fold carries nearly the same number of
uncensored (and censored) patients; event times are ignored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ttekit.cohort.records import PatientRecord
from ttekit.errors import DataValidationError

HOLDOUT = "holdout"


@dataclass
class FoldAssignment:
    assignment: dict[str, str]   # patient_id -> "holdout" | "fold1".."foldK"
    k: int
    seed: int | None = None

    def fold_ids(self, fold: int) -> list[str]:
        label = f"fold{fold}"
        return [pid for pid, a in self.assignment.items() if a == label]

    def holdout_ids(self) -> list[str]:
        return [pid for pid, a in self.assignment.items() if a == HOLDOUT]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["patient_id", "assignment"])
            for pid, label in self.assignment.items():
                w.writerow([pid, label])

    @classmethod
    def from_csv(cls, path) -> "FoldAssignment":
        assignment: dict[str, str] = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or set(reader.fieldnames) != {
                "patient_id",
                "assignment",
            }:
                raise DataValidationError(f"{path}: expected header patient_id,assignment")
            for row in reader:
                assignment[row["patient_id"]] = row["assignment"]
        folds = {a for a in assignment.values() if a != HOLDOUT}
        return cls(assignment=assignment, k=len(folds))


def holdout_split(
    records: list[PatientRecord], n_holdout: int, seed: int
) -> tuple[list[PatientRecord], list[PatientRecord]]:
    """(held-out, remaining), drawn uniformly without replacement."""
    if n_holdout >= len(records):
        raise DataValidationError(
            f"n_holdout={n_holdout} must be below the population size {len(records)}"
        )
    rng = np.random.default_rng(seed)
    order = sorted(range(len(records)), key=lambda i: records[i].patient_id)
    chosen = rng.choice(len(order), size=n_holdout, replace=False)
    chosen_set = {order[int(i)] for i in chosen}
    held = [records[i] for i in sorted(chosen_set)]
    rest = [records[i] for i in range(len(records)) if i not in chosen_set]
    return held, rest


def censored_stratified_kfold(
    records: list[PatientRecord], k: int = 5, seed: int = 0
) -> FoldAssignment:
    """Deal shuffled censored/uncensored strata round-robin into k folds."""
    if k < 2:
        raise DataValidationError(f"k must be >= 2, got {k}")
    if k > len(records):
        raise DataValidationError(
            f"k={k} exceeds the population size {len(records)}"
        )
    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    offset = 0
    for flag in (True, False):
        ids = sorted(r.patient_id for r in records if r.event_flag == flag)
        perm = rng.permutation(len(ids))
        # continue the round-robin where the previous stratum stopped so
        # total fold sizes stay balanced as well
        for pos, j in enumerate(perm):
            assignment[ids[int(j)]] = f"fold{(pos + offset) % k + 1}"
        offset = (offset + len(ids)) % k
    # keep the mapping ordered by input for reproducible serialization
    ordered = {r.patient_id: assignment[r.patient_id] for r in records}
    return FoldAssignment(assignment=ordered, k=k, seed=seed)


def split_cohort(
    records: list[PatientRecord], k: int, n_holdout: int, seed: int
) -> FoldAssignment:
    """Held-out draw followed by stratified folding of the remainder."""
    held, rest = holdout_split(records, n_holdout, seed)
    folded = censored_stratified_kfold(rest, k=k, seed=seed + 1)
    assignment: dict[str, str] = {}
    held_ids = {r.patient_id for r in held}
    for rec in records:
        if rec.patient_id in held_ids:
            assignment[rec.patient_id] = HOLDOUT
        else:
            assignment[rec.patient_id] = folded.assignment[rec.patient_id]
    return FoldAssignment(assignment=assignment, k=k, seed=seed)


def select_records(
    records: list[PatientRecord], fold_assignment: FoldAssignment, labels: set[str]
) -> list[PatientRecord]:
    return [
        r
        for r in records
        if fold_assignment.assignment.get(r.patient_id) in labels
    ]
