"""Synthetic longitudinal cohorts with known ground truth.

Each patient gets piecewise-linear latent trajectories for the continuous
features (baseline level plus a per-patient yearly drift, observed with
noise on an irregular visit schedule and thinned by per-feature
missingness).  The true event time is Weibull with a per-patient log scale
driven by the time-averaged covariates over the five follow-up years, so a
model that integrates the whole trajectory can outrank one that only sees
the index-date snapshot.  The default effect map plants one pure-noise
feature (bicarbonate) for permutation-importance fixtures and one
inverted-U feature (sbp) for partial-dependence fixtures.

Censoring is administrative at five years plus a uniform random censor
time whose scale is tuned by bisection (at most 50 iterations) to hit the
requested censored fraction; if the target is unreachable the achieved
fraction is reported in the ground truth.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ttekit.cohort.features import (
    KIND_BINARY,
    KIND_COMORBIDITY,
    KIND_CONTINUOUS,
    FeatureSpec,
    default_roster,
)
from ttekit.cohort.records import PatientRecord

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
ADMIN_CENSOR_YEARS = 5.0
ADMIN_CENSOR_DAYS = 1825

# population mean and SD of the continuous feature levels
POPULATION = {
    "egfr": (25.0, 6.0),
    "albumin": (3.8, 0.5),
    "phosphorus": (4.2, 0.9),
    "calcium": (9.2, 0.7),
    "uacr": (300.0, 250.0),
    "bicarbonate": (24.0, 3.0),
    "sbp": (132.0, 16.0),
    "dbp": (72.0, 10.0),
    "bmi": (28.0, 5.0),
}

BINARY_PREVALENCE = {"smoking": 0.15, "alcohol": 0.10, "gender": 0.54, "race": 0.09}
COMORBIDITY_PREVALENCE = {
    "dm": 0.40,
    "chf": 0.30,
    "cad": 0.30,
    "cirrhosis": 0.08,
    "dyslipidemia": 0.50,
}

# visit cadence in days for the observation process
DEFAULT_CADENCE_DAYS = {
    "egfr": 40,
    "albumin": 40,
    "phosphorus": 45,
    "calcium": 45,
    "uacr": 60,
    "bicarbonate": 40,
    "sbp": 20,
    "dbp": 20,
    "bmi": 60,
    "smoking": 180,
    "alcohol": 180,
}

DEFAULT_MISSINGNESS = {
    "egfr": 0.25,
    "albumin": 0.30,
    "phosphorus": 0.35,
    "calcium": 0.35,
    "uacr": 0.50,
    "bicarbonate": 0.30,
    "sbp": 0.15,
    "dbp": 0.15,
    "bmi": 0.40,
    "smoking": 0.30,
    "alcohol": 0.30,
}


@dataclass(frozen=True)
class FeatureEffect:
    """Contribution of a feature's standardized time-average z to the log
    event-time scale: linear * z + quad * (z - center)^2."""

    linear: float = 0.0
    quad: float = 0.0
    center: float = 0.0

    def apply(self, z: float) -> float:
        d = z - self.center
        return self.linear * z + self.quad * d * d


def default_effects() -> dict[str, FeatureEffect]:
    return {
        "egfr": FeatureEffect(linear=0.35),
        "albumin": FeatureEffect(linear=0.30),
        "phosphorus": FeatureEffect(linear=-0.20),
        "calcium": FeatureEffect(linear=0.10),
        "uacr": FeatureEffect(linear=-0.15),
        "bicarbonate": FeatureEffect(),          # pure noise
        "sbp": FeatureEffect(quad=-0.35),        # inverted U
        "dbp": FeatureEffect(linear=-0.05),
        "bmi": FeatureEffect(linear=0.10),
        "age": FeatureEffect(linear=-0.03),      # per year over 75
        "smoking": FeatureEffect(linear=-0.25),
        "alcohol": FeatureEffect(linear=-0.05),
        "dm": FeatureEffect(linear=-0.10),
        "chf": FeatureEffect(linear=-0.50),
        "cad": FeatureEffect(linear=-0.25),
        "cirrhosis": FeatureEffect(linear=-0.35),
        "dyslipidemia": FeatureEffect(linear=0.05),
        "gender": FeatureEffect(linear=-0.10),
        "race": FeatureEffect(linear=0.05),
    }


@dataclass
class SyntheticConfig:
    n_patients: int = 1000
    censoring_target: float = 0.49
    kappa_event: float = 1.6
    base_log_scale: float = math.log(2.6)
    drift_sd: float = 0.40          # per-year slope SD, in feature-SD units
    observation_noise_sd: float = 0.25  # in feature-SD units
    missingness: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MISSINGNESS))
    cadence_days: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_CADENCE_DAYS))
    effects: dict[str, FeatureEffect] = field(default_factory=default_effects)
    max_tuning_iterations: int = 50


@dataclass
class PatientTruth:
    lambda_scale: float      # true Weibull scale (years)
    tau_years: float         # uncapped true event time
    censor_years: float      # random censor draw (before the 5y cap)
    risk: float              # -log lambda, higher = shorter expected survival
    zbar: dict[str, float]


@dataclass
class CohortTruth:
    kappa_event: float
    achieved_censoring: float
    censor_scale: float
    patients: dict[str, PatientTruth]

    def risk_of(self, patient_id: str) -> float:
        return self.patients[patient_id].risk

    def to_json(self, path) -> None:
        payload = {
            "kappa_event": self.kappa_event,
            "achieved_censoring": self.achieved_censoring,
            "censor_scale": self.censor_scale,
            "patients": {
                pid: {
                    "lambda_scale": t.lambda_scale,
                    "tau_years": t.tau_years,
                    "censor_years": t.censor_years,
                    "risk": t.risk,
                    "zbar": t.zbar,
                }
                for pid, t in self.patients.items()
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path) -> "CohortTruth":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            kappa_event=payload["kappa_event"],
            achieved_censoring=payload["achieved_censoring"],
            censor_scale=payload["censor_scale"],
            patients={
                pid: PatientTruth(
                    lambda_scale=d["lambda_scale"],
                    tau_years=d["tau_years"],
                    censor_years=d["censor_years"],
                    risk=d["risk"],
                    zbar=d["zbar"],
                )
                for pid, d in payload["patients"].items()
            },
        )


@dataclass
class _Latent:
    age: float
    gender: float
    race: float
    base: dict[str, float]
    slope: dict[str, float]
    binary_status: dict[str, float]
    comorbidities: dict[str, list[int]]
    censor_u: float
    zbar: dict[str, float]
    lambda_scale: float = 0.0
    tau_years: float = 0.0


def _draw_latents(config: SyntheticConfig, rng: np.random.Generator) -> list[_Latent]:
    latents = []
    for _ in range(config.n_patients):
        age = float(np.clip(rng.normal(75.0, 9.0), 40.0, 95.0))
        gender = float(rng.random() < BINARY_PREVALENCE["gender"])
        race = float(rng.random() < BINARY_PREVALENCE["race"])
        base: dict[str, float] = {}
        slope: dict[str, float] = {}
        for name, (mu, sd) in POPULATION.items():
            base[name] = float(rng.normal(mu, sd))
            slope[name] = float(rng.normal(0.0, config.drift_sd * sd))
        binary_status = {
            name: float(rng.random() < BINARY_PREVALENCE[name])
            for name in ("smoking", "alcohol")
        }
        comorbidities: dict[str, list[int]] = {}
        for name, prev in COMORBIDITY_PREVALENCE.items():
            if rng.random() < prev:
                first = int(rng.integers(-900, 1200))
                days = [first]
                if rng.random() < 0.4:
                    days.append(first + int(rng.integers(200, 700)))
                comorbidities[name] = days
        # standardized time-average over [0, 5y]: base + slope * 2.5
        zbar = {
            name: (base[name] + slope[name] * 2.5 - POPULATION[name][0])
            / POPULATION[name][1]
            for name in POPULATION
        }
        zbar["age"] = age - 75.0
        zbar["gender"] = gender
        zbar["race"] = race
        zbar["smoking"] = binary_status["smoking"]
        zbar["alcohol"] = binary_status["alcohol"]
        for name in COMORBIDITY_PREVALENCE:
            zbar[name] = float(name in comorbidities)
        latents.append(
            _Latent(
                age=age,
                gender=gender,
                race=race,
                base=base,
                slope=slope,
                binary_status=binary_status,
                comorbidities=comorbidities,
                censor_u=float(rng.random()),
                zbar=zbar,
            )
        )
    return latents


def _event_times(
    config: SyntheticConfig, latents: list[_Latent], rng: np.random.Generator
) -> None:
    for lat in latents:
        log_scale = config.base_log_scale
        for name, effect in config.effects.items():
            log_scale += effect.apply(lat.zbar.get(name, 0.0))
        lat.lambda_scale = math.exp(log_scale)
        u = rng.random()
        lat.tau_years = lat.lambda_scale * (-math.log(1.0 - u)) ** (1.0 / config.kappa_event)


def _censored_fraction(latents: list[_Latent], censor_scale: float) -> float:
    n_cens = 0
    for lat in latents:
        cens = min(censor_scale * lat.censor_u, ADMIN_CENSOR_YEARS)
        if cens < lat.tau_years:
            n_cens += 1
    return n_cens / len(latents)


def _tune_censoring(config: SyntheticConfig, latents: list[_Latent]) -> tuple[float, float]:
    """Bisect the uniform censor scale toward the target censored fraction."""
    target = config.censoring_target
    lo, hi = 0.01, 200.0
    f_hi = _censored_fraction(latents, hi)  # admin-only floor
    if f_hi >= target:
        logger.warning(
            "censoring target %.3f unreachable (administrative floor %.3f)", target, f_hi
        )
        return hi, f_hi
    scale = hi
    for _ in range(config.max_tuning_iterations):
        scale = 0.5 * (lo + hi)
        frac = _censored_fraction(latents, scale)
        if frac > target:
            lo = scale
        else:
            hi = scale
    achieved = _censored_fraction(latents, scale)
    return scale, achieved


def _observation_days(
    start: int, end: int, cadence: int, rng: np.random.Generator
) -> list[int]:
    if end < start:
        return []
    phase = int(rng.integers(0, cadence))
    days = []
    day = start + phase
    while day <= end:
        jitter = int(rng.integers(-3, 4)) if cadence > 7 else 0
        d = min(max(day + jitter, start), end)
        days.append(d)
        day += cadence
    return days


def generate_synthetic_cohort(
    config: SyntheticConfig, seed: int
) -> tuple[list[PatientRecord], CohortTruth]:
    """Generate records plus the ground truth used by oracle tests."""
    rng = np.random.default_rng(seed)
    latents = _draw_latents(config, rng)
    _event_times(config, latents, rng)
    censor_scale, achieved = _tune_censoring(config, latents)

    records: list[PatientRecord] = []
    truths: dict[str, PatientTruth] = {}
    n_digits = len(str(max(config.n_patients - 1, 1)))
    for i, lat in enumerate(latents):
        pid = f"p{i:0{n_digits}d}"
        censor_years = min(censor_scale * lat.censor_u, ADMIN_CENSOR_YEARS)
        tau_days = max(1, round(lat.tau_years * DAYS_PER_YEAR))
        cens_days = max(1, round(censor_years * DAYS_PER_YEAR))
        cens_days = min(cens_days, ADMIN_CENSOR_DAYS)
        event = tau_days <= cens_days
        followup_end = min(tau_days, cens_days)

        observations: list[tuple[int, str, float]] = []
        for name, (mu, sd) in POPULATION.items():
            cadence = config.cadence_days.get(name, 45)
            miss = config.missingness.get(name, 0.3)
            for day in _observation_days(-1095, followup_end, cadence, rng):
                if miss > 0.0 and rng.random() < miss:
                    continue
                t_years = day / DAYS_PER_YEAR
                value = (
                    lat.base[name]
                    + lat.slope[name] * t_years
                    + float(rng.normal(0.0, config.observation_noise_sd * sd))
                )
                observations.append((day, name, value))
        for name in ("smoking", "alcohol"):
            cadence = config.cadence_days.get(name, 180)
            miss = config.missingness.get(name, 0.3)
            for day in _observation_days(-1095, followup_end, cadence, rng):
                if miss > 0.0 and rng.random() < miss:
                    continue
                observations.append((day, name, lat.binary_status[name]))

        diagnoses = [
            (day, name)
            for name, days in sorted(lat.comorbidities.items())
            for day in days
            if day <= followup_end
        ]
        diagnoses.sort()
        observations.sort(key=lambda o: (o[0], o[1]))

        records.append(
            PatientRecord(
                patient_id=pid,
                age_at_index=lat.age,
                static_features={"gender": lat.gender, "race": lat.race},
                dynamic_observations=observations,
                comorbidity_diagnoses=diagnoses,
                followup_end=followup_end,
                event_flag=event,
                event_type="endpoint" if event else None,
            )
        )
        truths[pid] = PatientTruth(
            lambda_scale=lat.lambda_scale,
            tau_years=lat.tau_years,
            censor_years=censor_years,
            risk=-math.log(lat.lambda_scale),
            zbar=dict(lat.zbar),
        )

    achieved = sum(1 for r in records if not r.event_flag) / len(records)
    truth = CohortTruth(
        kappa_event=config.kappa_event,
        achieved_censoring=achieved,
        censor_scale=censor_scale,
        patients=truths,
    )
    return records, truth
