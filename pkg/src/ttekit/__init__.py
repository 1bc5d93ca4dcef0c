"""Real-time individualized time-to-endpoint prediction toolkit.

A recurrent network with learned missingness decay that emits a
two-parameter Weibull survival distribution at every timestep, together
with accelerated-failure-time and multi-target logistic regression
baselines, a censoring-aware evaluation suite, and a synthetic cohort
generator to exercise everything end to end.
"""

__version__ = "0.1.0"

from ttekit.weibull import WeibullParams, best_guess, composite_loss, pdf, survival

__all__ = [
    "WeibullParams",
    "pdf",
    "survival",
    "best_guess",
    "composite_loss",
]
