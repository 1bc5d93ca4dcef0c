"""Patient data model, grid encoding, splits, synthetic cohorts, and file IO."""

from ttekit.cohort.baseline import baseline_matrix, mean_impute
from ttekit.cohort.encoding import EncodedSequence, Norms, compute_norms, encode
from ttekit.cohort.features import FeatureSpec, default_roster, roster_hash
from ttekit.cohort.grid import TimeGrid, build_grid
from ttekit.cohort.io import (
    export_csv,
    export_jsonl,
    ingest_csv,
    ingest_jsonl,
)
from ttekit.cohort.records import PatientRecord
from ttekit.cohort.splits import FoldAssignment, censored_stratified_kfold, holdout_split
from ttekit.cohort.synth import CohortTruth, SyntheticConfig, generate_synthetic_cohort

__all__ = [
    "PatientRecord",
    "FeatureSpec",
    "default_roster",
    "roster_hash",
    "TimeGrid",
    "build_grid",
    "Norms",
    "compute_norms",
    "encode",
    "EncodedSequence",
    "FoldAssignment",
    "holdout_split",
    "censored_stratified_kfold",
    "SyntheticConfig",
    "CohortTruth",
    "generate_synthetic_cohort",
    "ingest_jsonl",
    "export_jsonl",
    "ingest_csv",
    "export_csv",
    "baseline_matrix",
    "mean_impute",
]
