"""Model explainability: permutation importance and partial dependence.

Permutation importance reassigns the entire trajectory (value, mask, and
delta rows) of one feature among the held-out patients, keeping each
trajectory intact, and measures the concordance drop at every timestep and
horizon; with n_perm permutations of each of the k fold models this yields
n_perm * k replicates per point.

Partial dependence shifts the observed values of one feature (age by raw
years pre-scaling, z-scored features in z units) or swaps binary and
comorbidity features for an all-zero and a yearly-diagnosis variant,
leaving every other feature untouched, and reports the median predicted
median survival time across patients per shift, averaged over the fold
models.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ttekit.cohort.encoding import encode_cohort, stack_sequences
from ttekit.cohort.features import (
    COMORBIDITY_WINDOW_DAYS,
    KIND_COMORBIDITY,
    PREP_DIVIDE_100,
    PREP_ZSCORE,
    FeatureSpec,
)
from ttekit.cohort.records import PatientRecord
from ttekit.errors import DataValidationError
from ttekit.grud import GrudParameters, forward_batch
from ttekit.metrics import harrell_c

DAYS_PER_YEAR = 365.25

AGE_SHIFTS_YEARS = tuple(range(-20, 25, 5))
ZSCORE_SHIFTS = tuple(x * 0.5 for x in range(-4, 5))
BINARY_VARIANTS = ("original", "zero", "yearly")


@dataclass
class CheckpointContext:
    """One trained fold model plus everything needed to encode patients."""

    params: GrudParameters
    meta: dict  # roster, grid, norms, train_config

    @property
    def kappa_clamp(self) -> tuple[float, float] | None:
        tc = self.meta.get("train_config")
        if tc and tc.get("fixed_kappa"):
            center, half = tc["fixed_kappa"]
            return (center - half, center + half)
        return None


@dataclass
class ImportanceRow:
    feature: str
    timestep_day: int
    horizon_years: float
    delta_c_mean: float | None
    ci_low: float | None
    ci_high: float | None
    n_replicates: int


@dataclass
class PdpRow:
    feature: str
    shift: str
    raw_mean_after_shift: float | None
    followup_day: int
    pmst_median: float | None
    pmst_mean: float | None


def _feature_index(roster: list[FeatureSpec], name: str) -> int:
    for i, spec in enumerate(roster):
        if spec.name == name:
            return i
    raise DataValidationError(f"feature {name!r} not in the roster")


def _forward_arrays(ctx: CheckpointContext, records: list[PatientRecord]):
    grid = ctx.meta["grid"]
    seqs = encode_cohort(records, grid, ctx.meta["norms"], ctx.meta["roster"])
    x, m, delta, t_valid = stack_sequences(seqs)
    emp = seqs[0].empirical_means
    followups = np.array([s.followup_end for s in seqs], dtype=float)
    events = np.array([s.event_flag for s in seqs], dtype=bool)
    return x, m, delta, t_valid, emp, followups, events


def _trace(ctx: CheckpointContext, x, m, delta, emp, n_steps: int):
    grid = ctx.meta["grid"]
    t_full = np.full(x.shape[0], n_steps)
    return forward_batch(
        ctx.params, x[:, :, :n_steps], m[:, :, :n_steps], delta[:, :, :n_steps],
        grid.gaps_days()[:n_steps], t_full, emp,
        cache=False, kappa_clamp=ctx.kappa_clamp,
    )


def _survival_at(kappas, lambdas, horizon: float) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.exp(-np.power(horizon / lambdas, kappas))


def _cindex_map(
    kappas: np.ndarray,
    lambdas: np.ndarray,
    followups: np.ndarray,
    events: np.ndarray,
    boundaries: list[int],
    step_indices: list[int],
    horizons: list[float],
) -> dict[tuple[int, float], float | None]:
    out: dict[tuple[int, float], float | None] = {}
    for t in step_indices:
        day = boundaries[t]
        at_risk = followups > day
        idx = np.nonzero(at_risk)[0]
        rem = (followups[idx] - day) / DAYS_PER_YEAR
        ev = events[idx]
        for h in horizons:
            if idx.size == 0:
                out[(t, h)] = None
                continue
            scores = _survival_at(kappas[idx, t], lambdas[idx, t], h)
            try:
                out[(t, h)], _ = harrell_c(scores, rem, ev)
            except DataValidationError:
                out[(t, h)] = None
    return out


def permutation_importance(
    contexts: list[CheckpointContext],
    records: list[PatientRecord],
    feature: str,
    horizons: list[float],
    n_perm: int = 5,
    seed: int = 0,
    step_indices: list[int] | None = None,
) -> list[ImportanceRow]:
    """Mean concordance drop (before - after permutation) per timestep and
    horizon over n_perm * k replicates with a normal 95 percent interval."""
    if not records:
        raise DataValidationError("held-out set is empty")
    roster = contexts[0].meta["roster"]
    f = _feature_index(roster, feature)
    grid = contexts[0].meta["grid"]
    boundaries = list(grid.boundaries)
    if step_indices is None:
        step_indices = list(range(len(boundaries)))
    n_steps = max(step_indices) + 1

    replicates: dict[tuple[int, float], list[float]] = {
        (t, h): [] for t in step_indices for h in horizons
    }
    for k, ctx in enumerate(contexts):
        x, m, delta, t_valid, emp, followups, events = _forward_arrays(ctx, records)
        base = _trace(ctx, x, m, delta, emp, n_steps)
        before = _cindex_map(
            base.kappas, base.lambdas, followups, events, boundaries, step_indices, horizons
        )
        rng = np.random.default_rng(seed + 1009 * k)
        for _ in range(n_perm):
            perm = rng.permutation(x.shape[0])
            xp = x.copy()
            mp = m.copy()
            dp = delta.copy()
            xp[:, f, :] = x[perm, f, :]
            mp[:, f, :] = m[perm, f, :]
            dp[:, f, :] = delta[perm, f, :]
            after_trace = _trace(ctx, xp, mp, dp, emp, n_steps)
            after = _cindex_map(
                after_trace.kappas, after_trace.lambdas, followups, events,
                boundaries, step_indices, horizons,
            )
            for key, b in before.items():
                a = after[key]
                if b is not None and a is not None:
                    replicates[key].append(b - a)

    rows = []
    for t in step_indices:
        for h in horizons:
            vals = replicates[(t, h)]
            if not vals:
                rows.append(ImportanceRow(feature, boundaries[t], h, None, None, None, 0))
                continue
            arr = np.asarray(vals)
            mean = float(arr.mean())
            half = (
                1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size) if arr.size > 1 else 0.0
            )
            rows.append(
                ImportanceRow(feature, boundaries[t], h, mean, mean - half, mean + half, arr.size)
            )
    return rows


def _recompute_delta_row(m_row: np.ndarray, gaps: np.ndarray) -> np.ndarray:
    """Delta recurrence for one feature row over (N, T)."""
    n, n_t = m_row.shape
    delta = np.zeros((n, n_t))
    for t in range(1, n_t):
        carried = np.where(m_row[:, t - 1] == 0.0, delta[:, t - 1], 0.0)
        delta[:, t] = gaps[t] + carried
    return delta


def _binary_variant(
    spec: FeatureSpec,
    shape: tuple[int, int],
    boundaries: list[int],
    gaps: np.ndarray,
    variant: str,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(x_row, m_row, delta_row) for the all-zero / yearly-diagnosis case."""
    n, n_t = shape
    x_row = np.zeros((n, n_t))
    m_row = np.zeros((n, n_t))
    if variant == "yearly":
        for day in range(boundaries[0], boundaries[-1] + 1, 365):
            if spec.kind == KIND_COMORBIDITY:
                for t, b in enumerate(boundaries):
                    if day <= b <= day + COMORBIDITY_WINDOW_DAYS:
                        x_row[:, t] = 1.0
                        m_row[:, t] = 1.0
            else:
                t = None
                for ti, b in enumerate(boundaries):
                    if b <= day:
                        t = ti
                if t is not None:
                    x_row[:, t] = 1.0
                    m_row[:, t] = 1.0
    return x_row, m_row, _recompute_delta_row(m_row, gaps)


def partial_dependence(
    contexts: list[CheckpointContext],
    records: list[PatientRecord],
    feature: str,
    followup_days: list[int],
) -> list[PdpRow]:
    """PMST response to single-feature shifts at several follow-up times.

    Continuous features are shifted additively over their kind-specific
    grid; binary and comorbidity features are replaced by all-zero and
    yearly-diagnosis variants.  At each follow-up day, patients still under
    observation contribute the PMST of the step containing that day.
    """
    if not records:
        raise DataValidationError("held-out set is empty")
    roster = contexts[0].meta["roster"]
    f = _feature_index(roster, feature)
    spec = roster[f]
    grid = contexts[0].meta["grid"]
    boundaries = list(grid.boundaries)
    gaps = grid.gaps_days()
    steps = []
    for day in followup_days:
        step = grid.step_of_day(day)
        if step is None:
            raise DataValidationError(f"follow-up day {day} is outside the grid")
        steps.append(step)
    n_steps = max(steps) + 1

    if spec.preprocessing == PREP_DIVIDE_100 and not spec.static:
        shifts: list[tuple[str, float | str]] = [(str(s), s) for s in AGE_SHIFTS_YEARS]
    elif spec.preprocessing == PREP_ZSCORE:
        shifts = [(repr(float(s)), float(s)) for s in ZSCORE_SHIFTS]
    else:
        shifts = [(v, v) for v in BINARY_VARIANTS]

    # accumulate per (shift, day): list over contexts of (median, mean, raw_mean)
    acc: dict[tuple[str, int], list[tuple[float, float, float]]] = {}
    for ctx in contexts:
        norms = ctx.meta["norms"]
        x, m, delta, t_valid, emp, followups, events = _forward_arrays(ctx, records)
        for label, shift in shifts:
            xs, ms, ds = x, m, delta
            if isinstance(shift, (int, float)):
                if spec.preprocessing == PREP_DIVIDE_100:
                    enc_shift = float(shift) / 100.0
                    raw_scale, raw_off = 100.0, 0.0
                else:
                    enc_shift = float(shift)
                    raw_scale, raw_off = norms.sd[feature], norms.mean[feature]
                xs = x.copy()
                xs[:, f, :] = np.where(m[:, f, :] > 0, x[:, f, :] + enc_shift, x[:, f, :])
                observed = m[:, f, :] > 0
                raw_mean = (
                    float(xs[:, f, :][observed].mean()) * raw_scale + raw_off
                    if observed.any()
                    else math.nan
                )
            elif shift == "original":
                observed = m[:, f, :] > 0
                if spec.preprocessing == PREP_ZSCORE:
                    raw_scale, raw_off = norms.sd[feature], norms.mean[feature]
                else:
                    raw_scale, raw_off = 1.0, 0.0
                raw_mean = (
                    float(x[:, f, :][observed].mean()) * raw_scale + raw_off
                    if observed.any()
                    else math.nan
                )
            else:
                x_row, m_row, d_row = _binary_variant(
                    spec, (x.shape[0], x.shape[2]), boundaries, gaps, shift
                )
                xs = x.copy()
                ms = m.copy()
                ds = delta.copy()
                xs[:, f, :] = x_row
                ms[:, f, :] = m_row
                ds[:, f, :] = d_row
                observed = ms[:, f, :] > 0
                raw_mean = float(xs[:, f, :][observed].mean()) if observed.any() else 0.0

            trace = _trace(ctx, xs, ms, ds, emp, n_steps)
            with np.errstate(invalid="ignore"):
                pmst_all = trace.lambdas * np.exp(math.log(math.log(2.0)) / trace.kappas)
            for day, step in zip(followup_days, steps):
                at_risk = followups > day
                if not at_risk.any():
                    acc.setdefault((label, day), []).append((math.nan, math.nan, raw_mean))
                    continue
                vals = pmst_all[at_risk, step]
                acc.setdefault((label, day), []).append(
                    (float(np.median(vals)), float(vals.mean()), raw_mean)
                )

    rows = []
    for label, _ in shifts:
        for day in followup_days:
            entries = acc.get((label, day), [])
            med = [e[0] for e in entries if not math.isnan(e[0])]
            mn = [e[1] for e in entries if not math.isnan(e[1])]
            rw = [e[2] for e in entries if not math.isnan(e[2])]
            rows.append(
                PdpRow(
                    feature=feature,
                    shift=label,
                    raw_mean_after_shift=float(np.mean(rw)) if rw else None,
                    followup_day=day,
                    pmst_median=float(np.mean(med)) if med else None,
                    pmst_mean=float(np.mean(mn)) if mn else None,
                )
            )
    return rows


def importance_csv(rows: list[ImportanceRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "timestep_day", "horizon_years", "delta_c_mean", "ci_low", "ci_high"])
        for r in rows:
            w.writerow(
                [
                    r.feature,
                    r.timestep_day,
                    repr(r.horizon_years),
                    "" if r.delta_c_mean is None else repr(r.delta_c_mean),
                    "" if r.ci_low is None else repr(r.ci_low),
                    "" if r.ci_high is None else repr(r.ci_high),
                ]
            )


def pdp_csv(rows: list[PdpRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["feature", "shift", "raw_mean_after_shift", "followup_day", "pmst_median", "pmst_mean"]
        )
        for r in rows:
            w.writerow(
                [
                    r.feature,
                    r.shift,
                    "" if r.raw_mean_after_shift is None else repr(r.raw_mean_after_shift),
                    r.followup_day,
                    "" if r.pmst_median is None else repr(r.pmst_median),
                    "" if r.pmst_mean is None else repr(r.pmst_mean),
                ]
            )
