"""Feature roster: names, kinds, and preprocessing rules.

The default panel has 19 features: 17 dynamic (six labs and two vitals,
z-scored; five comorbidities with a 100-day active window; age divided by
100; smoking and alcohol as sparse binaries; BMI z-scored) plus gender and
race as static binaries replicated across all timesteps.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

KIND_CONTINUOUS = "continuous"
KIND_BINARY = "binary"
KIND_COMORBIDITY = "comorbidity"

PREP_ZSCORE = "zscore"
PREP_DIVIDE_100 = "divide-by-100"
PREP_IDENTITY = "identity"

# Days a comorbidity diagnosis stays observed (value 1) before it goes
# missing again and the decay mechanism takes over.
COMORBIDITY_WINDOW_DAYS = 100


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    preprocessing: str
    static: bool = False


def default_roster() -> list[FeatureSpec]:
    return [
        FeatureSpec("egfr", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("albumin", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("phosphorus", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("calcium", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("uacr", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("bicarbonate", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("sbp", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("dbp", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("dm", KIND_COMORBIDITY, PREP_IDENTITY),
        FeatureSpec("chf", KIND_COMORBIDITY, PREP_IDENTITY),
        FeatureSpec("cad", KIND_COMORBIDITY, PREP_IDENTITY),
        FeatureSpec("cirrhosis", KIND_COMORBIDITY, PREP_IDENTITY),
        FeatureSpec("dyslipidemia", KIND_COMORBIDITY, PREP_IDENTITY),
        FeatureSpec("age", KIND_CONTINUOUS, PREP_DIVIDE_100),
        FeatureSpec("smoking", KIND_BINARY, PREP_IDENTITY),
        FeatureSpec("alcohol", KIND_BINARY, PREP_IDENTITY),
        FeatureSpec("bmi", KIND_CONTINUOUS, PREP_ZSCORE),
        FeatureSpec("gender", KIND_BINARY, PREP_IDENTITY, static=True),
        FeatureSpec("race", KIND_BINARY, PREP_IDENTITY, static=True),
    ]


def roster_index(roster: list[FeatureSpec]) -> dict[str, int]:
    return {spec.name: i for i, spec in enumerate(roster)}


def roster_hash(roster: list[FeatureSpec]) -> str:
    """Stable digest of the roster; checkpoints refuse to load on mismatch."""
    payload = ";".join(
        f"{s.name}:{s.kind}:{s.preprocessing}:{int(s.static)}" for s in roster
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def roster_to_dicts(roster: list[FeatureSpec]) -> list[dict]:
    return [
        {"name": s.name, "kind": s.kind, "preprocessing": s.preprocessing, "static": s.static}
        for s in roster
    ]


def roster_from_dicts(items: list[dict]) -> list[FeatureSpec]:
    return [
        FeatureSpec(d["name"], d["kind"], d["preprocessing"], bool(d["static"]))
        for d in items
    ]
