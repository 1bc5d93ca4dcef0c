"""Index-date design matrices for the static baseline models.

Dynamic labs/vitals use the closest measurement within one year before or
after the index date; comorbidities are flagged from any diagnosis within
ten years before it; age and the static binaries enter as raw values.
Missing cells come back as NaN and are filled by single mean imputation
with training-set means.
"""

from __future__ import annotations

import numpy as np

from ttekit.cohort.features import KIND_COMORBIDITY, FeatureSpec
from ttekit.cohort.records import PatientRecord

BASELINE_WINDOW_DAYS = 365
COMORBIDITY_LOOKBACK_DAYS = 3650


def baseline_matrix(
    records: list[PatientRecord], roster: list[FeatureSpec]
) -> tuple[np.ndarray, list[str]]:
    """(n, F) raw-value matrix with NaN for missing, plus column names."""
    names = [s.name for s in roster]
    out = np.full((len(records), len(roster)), np.nan)
    for i, rec in enumerate(records):
        for j, spec in enumerate(roster):
            if spec.static:
                if spec.name in rec.static_features:
                    out[i, j] = rec.static_features[spec.name]
            elif spec.name == "age":
                if rec.age_at_index is not None:
                    out[i, j] = rec.age_at_index
            elif spec.kind == KIND_COMORBIDITY:
                out[i, j] = float(
                    any(
                        name == spec.name and -COMORBIDITY_LOOKBACK_DAYS <= day <= 0
                        for day, name in rec.comorbidity_diagnoses
                    )
                )
            else:
                best: tuple[int, int, float] | None = None
                for day, name, value in rec.dynamic_observations:
                    if name != spec.name or abs(day) > BASELINE_WINDOW_DAYS:
                        continue
                    key = (abs(day), -day)
                    if best is None or key < (best[0], best[1]):
                        best = (abs(day), -day, value)
                if best is not None:
                    out[i, j] = best[2]
    return out, names


def mean_impute(
    x: np.ndarray, means: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Fill NaNs column-wise; reuse training means when given."""
    x = np.array(x, dtype=float)
    if means is None:
        with np.errstate(invalid="ignore"):
            means = np.nanmean(x, axis=0)
        means = np.where(np.isnan(means), 0.0, means)
    nan_rows, nan_cols = np.nonzero(np.isnan(x))
    x[nan_rows, nan_cols] = means[nan_cols]
    return x, means
