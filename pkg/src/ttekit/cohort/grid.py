"""Non-uniform follow-up grid.

15-day spacing within half a year of the index date and 30-day spacing out
to three years before / five years after, 110 steps in total.  The dense
region is pinned to days [-180, +180]; the coarse regions run -1095..-195
and +210..+1800 so every consecutive gap is exactly 15 or 30 days and the
step count lands on 110.  The exact boundary list is frozen as a golden
file in the test suite.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np

N_STEPS = 110


@dataclass(frozen=True)
class TimeGrid:
    boundaries: tuple[int, ...]

    @property
    def n_steps(self) -> int:
        return len(self.boundaries)

    @property
    def start_day(self) -> int:
        return self.boundaries[0]

    @property
    def end_day(self) -> int:
        return self.boundaries[-1]

    def gaps_days(self) -> np.ndarray:
        """Elapsed days since the previous step; 0 at the first step."""
        b = np.asarray(self.boundaries, dtype=float)
        return np.concatenate([[0.0], np.diff(b)])

    def step_of_day(self, day: int) -> int | None:
        """Step whose boundary is the largest one <= day, None off-grid."""
        if day < self.boundaries[0] or day > self.boundaries[-1]:
            return None
        return bisect_right(self.boundaries, day) - 1

    def valid_steps(self, followup_end: int) -> int:
        """Number of steps strictly before the event/censoring day."""
        return bisect_left(self.boundaries, followup_end)


def build_grid() -> TimeGrid:
    left = range(-1095, -181, 30)      # -1095 .. -195
    inner = range(-180, 181, 15)       # -180 .. +180
    right = range(210, 1801, 30)       # +210 .. +1800
    boundaries = tuple(left) + tuple(inner) + tuple(right)
    assert len(boundaries) == N_STEPS
    return TimeGrid(boundaries=boundaries)
