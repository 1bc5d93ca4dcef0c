"""Grid encoding with missingness bookkeeping.

Each patient becomes three features-by-timesteps matrices: preprocessed
values ``x`` (0 where missing), an observation mask ``m``, and ``delta``,
the days since the feature was last observed (0 at the first step, and at
step t equal to the grid gap plus the previous delta whenever the feature
was missing at t-1).

Preprocessing follows the feature roster: continuous labs/vitals are
z-scored with training-set mean/SD, age is divided by 100 and derived at
every step from the age at index, binaries pass through, and a comorbidity
diagnosis turns the feature on (observed, value 1) for the 100 days that
follow, after which it goes missing again.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ttekit.cohort.features import (
    COMORBIDITY_WINDOW_DAYS,
    KIND_BINARY,
    KIND_COMORBIDITY,
    KIND_CONTINUOUS,
    PREP_DIVIDE_100,
    PREP_IDENTITY,
    PREP_ZSCORE,
    FeatureSpec,
    roster_index,
)
from ttekit.cohort.grid import TimeGrid
from ttekit.cohort.records import PatientRecord
from ttekit.errors import DataValidationError

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25


@dataclass
class Norms:
    """Training-set preprocessing constants, aligned to a feature roster."""

    mean: dict[str, float]
    sd: dict[str, float]
    empirical_mean: dict[str, float]
    zero_sd: list[str] = field(default_factory=list)
    never_observed: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "sd": self.sd,
            "empirical_mean": self.empirical_mean,
            "zero_sd": self.zero_sd,
            "never_observed": self.never_observed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Norms":
        return cls(
            mean=dict(d["mean"]),
            sd=dict(d["sd"]),
            empirical_mean=dict(d["empirical_mean"]),
            zero_sd=list(d.get("zero_sd", [])),
            never_observed=list(d.get("never_observed", [])),
        )


@dataclass
class EncodedSequence:
    """One patient on the grid: x/m/delta plus the decay-to-mean anchors."""

    patient_id: str
    x: np.ndarray            # (F, T) preprocessed values, 0 where missing
    m: np.ndarray            # (F, T) 1 = observed
    delta: np.ndarray        # (F, T) days since last observation
    empirical_means: np.ndarray  # (F,)
    valid_steps: int         # steps strictly before event/censoring
    followup_end: int
    event_flag: bool


def _is_active_window(day: int, diagnosis_days: list[int]) -> bool:
    return any(d <= day <= d + COMORBIDITY_WINDOW_DAYS for d in diagnosis_days)


def compute_norms(
    records: list[PatientRecord],
    roster: list[FeatureSpec],
    grid: TimeGrid,
) -> Norms:
    """Per-feature raw mean/SD (sample, n-1) plus decay-to-mean anchors.

    The decay anchor of a z-scored feature is the mean of its preprocessed
    observed values (zero up to rounding by construction); comorbidities use
    the fraction of in-follow-up grid cells inside an active window, so the
    imputation decays a stale diagnosis toward the population prevalence.
    Held-out patients must not be passed here: norms belong to the training
    fold.
    """
    if not records:
        raise DataValidationError("compute_norms requires a nonempty training set")
    idx = roster_index(roster)
    raw_values: dict[str, list[float]] = {s.name: [] for s in roster}
    for rec in records:
        for day, name, value in rec.dynamic_observations:
            if name not in idx:
                raise DataValidationError(f"unknown feature in observations: {name!r}")
            raw_values[name].append(value)
        for day, name in rec.comorbidity_diagnoses:
            if name not in idx:
                raise DataValidationError(f"unknown comorbidity: {name!r}")

    mean: dict[str, float] = {}
    sd: dict[str, float] = {}
    emp: dict[str, float] = {}
    zero_sd: list[str] = []
    never: list[str] = []

    for spec in roster:
        name = spec.name
        if spec.static:
            vals = [
                rec.static_features[name]
                for rec in records
                if name in rec.static_features
            ]
            mean[name] = float(np.mean(vals)) if vals else 0.0
            sd[name] = 1.0
            emp[name] = mean[name]
            if not vals:
                never.append(name)
            continue
        if name == "age":
            ages = [rec.age_at_index for rec in records if rec.age_at_index is not None]
            mean[name] = float(np.mean(ages)) if ages else 0.0
            sd[name] = 1.0
            emp[name] = mean[name] / 100.0
            continue
        if spec.kind == KIND_COMORBIDITY:
            active = 0
            total = 0
            for rec in records:
                t_valid = grid.valid_steps(rec.followup_end)
                days = [d for d, n in rec.comorbidity_diagnoses if n == name]
                total += t_valid
                if days:
                    active += sum(
                        1
                        for t in range(t_valid)
                        if _is_active_window(grid.boundaries[t], days)
                    )
            mean[name] = 0.0
            sd[name] = 1.0
            emp[name] = active / total if total else 0.0
            continue
        vals = raw_values[name]
        if not vals:
            logger.warning("feature %r never observed in training; using mean 0, SD 1", name)
            never.append(name)
            mean[name] = 0.0
            sd[name] = 1.0
            emp[name] = 0.0
            continue
        arr = np.asarray(vals, dtype=float)
        mean[name] = float(arr.mean())
        sd[name] = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        if spec.preprocessing == PREP_ZSCORE:
            if sd[name] == 0.0:
                zero_sd.append(name)
                emp[name] = 0.0
            else:
                emp[name] = float(((arr - mean[name]) / sd[name]).mean())
        elif spec.preprocessing == PREP_DIVIDE_100:
            emp[name] = float(arr.mean()) / 100.0
        else:
            emp[name] = float(arr.mean())

    if zero_sd:
        logger.warning("features with zero SD mapped to 0 by z-score: %s", zero_sd)
    return Norms(mean=mean, sd=sd, empirical_mean=emp, zero_sd=zero_sd, never_observed=never)


def _preprocess(spec: FeatureSpec, value: float, norms: Norms) -> float:
    if spec.preprocessing == PREP_ZSCORE:
        s = norms.sd[spec.name]
        if s == 0.0:
            return 0.0
        return (value - norms.mean[spec.name]) / s
    if spec.preprocessing == PREP_DIVIDE_100:
        return value / 100.0
    assert spec.preprocessing == PREP_IDENTITY
    return value


def encode(
    record: PatientRecord,
    grid: TimeGrid,
    norms: Norms,
    roster: list[FeatureSpec],
) -> EncodedSequence:
    """Bucket raw observations onto the grid and preprocess them.

    Observations outside the grid range are clipped; when several land in
    one grid interval the latest wins.  Static features and age are
    replicated/derived at every step with mask 1.
    """
    idx = roster_index(roster)
    n_f = len(roster)
    n_t = grid.n_steps
    x = np.zeros((n_f, n_t))
    m = np.zeros((n_f, n_t))
    boundaries = grid.boundaries

    # latest-wins bucketing: (feature, step) -> (day, arrival order, value)
    best: dict[tuple[int, int], tuple[int, int, float]] = {}
    for order, (day, name, value) in enumerate(record.dynamic_observations):
        if name not in idx:
            raise DataValidationError(
                f"{record.patient_id}: unknown feature in observations: {name!r}"
            )
        spec = roster[idx[name]]
        if spec.static or spec.kind == KIND_COMORBIDITY:
            raise DataValidationError(
                f"{record.patient_id}: {name!r} cannot appear in dynamic observations"
            )
        step = grid.step_of_day(day)
        if step is None:
            continue
        key = (idx[name], step)
        prev = best.get(key)
        if prev is None or (day, order) >= (prev[0], prev[1]):
            best[key] = (day, order, value)

    for (f, t), (_day, _order, value) in best.items():
        spec = roster[f]
        x[f, t] = _preprocess(spec, value, norms)
        m[f, t] = 1.0

    # comorbidities: observed as 1 inside the 100-day window after a diagnosis
    diag_days: dict[str, list[int]] = {}
    for day, name in record.comorbidity_diagnoses:
        if name not in idx:
            raise DataValidationError(
                f"{record.patient_id}: unknown comorbidity: {name!r}"
            )
        if roster[idx[name]].kind != KIND_COMORBIDITY:
            raise DataValidationError(
                f"{record.patient_id}: {name!r} is not a comorbidity feature"
            )
        diag_days.setdefault(name, []).append(day)
    for name, days in diag_days.items():
        f = idx[name]
        for t in range(n_t):
            if _is_active_window(boundaries[t], days):
                x[f, t] = 1.0
                m[f, t] = 1.0

    # derived / static rows have mask 1 everywhere
    for spec in roster:
        f = idx[spec.name]
        if spec.name == "age":
            if record.age_at_index is not None:
                days = np.asarray(boundaries, dtype=float)
                x[f, :] = (record.age_at_index + days / DAYS_PER_YEAR) / 100.0
                m[f, :] = 1.0
        elif spec.static:
            if spec.name in record.static_features:
                x[f, :] = record.static_features[spec.name]
                m[f, :] = 1.0

    # delta recurrence: gap at t, plus previous delta if missing at t-1
    delta = np.zeros((n_f, n_t))
    gaps = grid.gaps_days()
    for t in range(1, n_t):
        carried = np.where(m[:, t - 1] == 0.0, delta[:, t - 1], 0.0)
        delta[:, t] = gaps[t] + carried

    emp = np.array([norms.empirical_mean[s.name] for s in roster])
    return EncodedSequence(
        patient_id=record.patient_id,
        x=x,
        m=m,
        delta=delta,
        empirical_means=emp,
        valid_steps=grid.valid_steps(record.followup_end),
        followup_end=record.followup_end,
        event_flag=record.event_flag,
    )


def encode_cohort(
    records: list[PatientRecord],
    grid: TimeGrid,
    norms: Norms,
    roster: list[FeatureSpec],
) -> list[EncodedSequence]:
    return [encode(rec, grid, norms, roster) for rec in records]


def stack_sequences(
    seqs: list[EncodedSequence],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Stack into (N, F, T) arrays plus the (N,) valid-step counts."""
    x = np.stack([s.x for s in seqs])
    m = np.stack([s.m for s in seqs])
    delta = np.stack([s.delta for s in seqs])
    t_valid = np.array([s.valid_steps for s in seqs], dtype=int)
    return x, m, delta, t_valid
