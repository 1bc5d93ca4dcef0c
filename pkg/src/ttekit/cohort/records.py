"""Raw patient records: timestamped observations plus the follow-up outcome."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ttekit.errors import DataValidationError


@dataclass
class PatientRecord:
    """One patient's raw timeline, all days relative to the index date.

    ``followup_end`` together with ``event_flag`` defines the observed
    time / event-indicator pair; ``event_flag`` true means the endpoint was
    reached at ``followup_end``, false means censoring there.
    """

    patient_id: str
    age_at_index: float | None
    static_features: dict[str, float] = field(default_factory=dict)
    dynamic_observations: list[tuple[int, str, float]] = field(default_factory=list)
    comorbidity_diagnoses: list[tuple[int, str]] = field(default_factory=list)
    followup_end: int = 1
    event_flag: bool = False
    event_type: str | None = None
    index_date: str | None = None

    @property
    def censored(self) -> bool:
        return not self.event_flag

    @property
    def followup_years(self) -> float:
        return self.followup_end / 365.25

    def validate(self) -> None:
        if not self.patient_id:
            raise DataValidationError("patient_id must be nonempty")
        if self.followup_end < 0:
            raise DataValidationError(
                f"{self.patient_id}: followup_end must be >= 0, got {self.followup_end}"
            )
        if self.age_at_index is not None and not math.isfinite(self.age_at_index):
            raise DataValidationError(f"{self.patient_id}: non-finite age_at_index")
        for day, name, value in self.dynamic_observations:
            if not math.isfinite(value):
                raise DataValidationError(
                    f"{self.patient_id}: non-finite value for {name} at day {day}"
                )
