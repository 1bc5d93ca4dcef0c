"""Censoring-aware evaluation metrics and the follow-up time sweep.

Scores passed to the concordance metrics must be oriented so that higher
means longer predicted survival; AUROC instead takes predicted event
probabilities at the horizon.  The Brier score reweights by the censoring
distribution estimated with the reverse Kaplan-Meier (event and censoring
roles swapped), using the left limit at the event term.  Calibration is
the Hosmer-Lemeshow statistic over quantile bins of predicted survival,
compared against each bin's own Kaplan-Meier estimate, with a chi-square
reference on bins-minus-two degrees of freedom.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol

import numpy as np

from ttekit.errors import DataValidationError
from ttekit.weibull import WeibullParams, median, survival, upper_incomplete_gamma

DAYS_PER_YEAR = 365.25


def chi2_sf(x: float, df: int) -> float:
    """Upper tail of the chi-square distribution."""
    if x < 0.0 or df <= 0:
        raise ValueError("chi2_sf needs x >= 0 and df > 0")
    return upper_incomplete_gamma(df / 2.0, x / 2.0) / math.gamma(df / 2.0)


class KaplanMeier:
    """Product-limit estimator; right-continuous step function.

    Ties between events and censorings at the same time follow the
    standard convention: both are in the risk set for the drop at that
    time (events first).
    """

    def __init__(self, times: np.ndarray, events: np.ndarray):
        times = np.asarray(times, dtype=float)
        events = np.asarray(events, dtype=bool)
        if times.size == 0:
            raise DataValidationError("Kaplan-Meier needs a nonempty sample")
        if np.any(times <= 0.0):
            raise DataValidationError("Kaplan-Meier times must be positive")
        order = np.argsort(times, kind="stable")
        times = times[order]
        events = events[order]
        n = times.size
        drop_times: list[float] = []
        values: list[float] = []
        s = 1.0
        i = 0
        while i < n:
            t = times[i]
            j = i
            d = 0
            while j < n and times[j] == t:
                d += int(events[j])
                j += 1
            if d > 0:
                at_risk = n - i
                s *= 1.0 - d / at_risk
                drop_times.append(float(t))
                values.append(s)
            i = j
        self._drop_times = drop_times
        self._values = values

    def at(self, t: float) -> float:
        """S(t), right-continuous."""
        idx = bisect_right(self._drop_times, t)
        return 1.0 if idx == 0 else self._values[idx - 1]

    def before(self, t: float) -> float:
        """Left limit S(t-)."""
        idx = bisect_left(self._drop_times, t)
        return 1.0 if idx == 0 else self._values[idx - 1]


def kaplan_meier(times: np.ndarray, events: np.ndarray) -> KaplanMeier:
    return KaplanMeier(times, events)


def harrell_c(
    scores: np.ndarray, times: np.ndarray, events: np.ndarray
) -> tuple[float, int]:
    """Harrell's concordance; scores higher = longer predicted survival.

    Pairs (i, j) are comparable when tau_i < tau_j and i had the event;
    tied scores count one half.  Returns (C, comparable-pair count).
    """
    scores = np.asarray(scores, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    comp = (times[:, None] < times[None, :]) & events[:, None]
    n_comp = int(comp.sum())
    if n_comp == 0:
        raise DataValidationError("no comparable pairs")
    conc = int((comp & (scores[:, None] < scores[None, :])).sum())
    ties = int((comp & (scores[:, None] == scores[None, :])).sum())
    return (conc + 0.5 * ties) / n_comp, n_comp


def c_tau(
    scores: np.ndarray, times: np.ndarray, events: np.ndarray, tau: float
) -> tuple[float, int]:
    """Concordance after administratively censoring everyone at tau."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    capped = np.minimum(times, tau)
    kept = events & (times <= tau)
    return harrell_c(scores, capped, kept)


def horizon_auroc(
    event_probs: np.ndarray, times: np.ndarray, events: np.ndarray, tau_star: float
) -> tuple[float, int]:
    """Mann-Whitney AUROC for event-by-horizon, tie-corrected.

    Positives had the event at or before the horizon; patients censored
    before it are excluded; everyone surviving past it is a negative.
    Returns (AUROC, number of patients used).
    """
    event_probs = np.asarray(event_probs, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    pos = events & (times <= tau_star)
    neg = times > tau_star
    if not pos.any():
        raise DataValidationError("no positive cases at this horizon")
    if not neg.any():
        raise DataValidationError("no negative cases at this horizon")
    p = event_probs[pos][:, None]
    q = event_probs[neg][None, :]
    wins = int((p > q).sum())
    ties = int((p == q).sum())
    n_pairs = p.size * q.size
    return (wins + 0.5 * ties) / n_pairs, int(pos.sum() + neg.sum())


@dataclass
class L1Block:
    mean_abs: float
    median_abs: float
    sd_abs: float | None
    mean_over: float | None    # mean of positive (prediction - tau) errors
    mean_under: float | None   # mean magnitude of negative errors
    n: int


@dataclass
class L1Losses:
    uncensored: L1Block | None
    margin_mean: float | None  # censored |BG - PMST| average
    n_censored: int


def l1_losses(
    pmst: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    bg_totals: np.ndarray | None = None,
) -> L1Losses:
    """Point-estimate errors: absolute L1 over uncensored patients with
    over/under breakdowns, and the Best-Guess margin loss over censored
    patients when their BG values are supplied."""
    pmst = np.asarray(pmst, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    block = None
    if events.any():
        diff = pmst[events] - times[events]
        absd = np.abs(diff)
        over = diff[diff > 0.0]
        under = diff[diff < 0.0]
        block = L1Block(
            mean_abs=float(absd.mean()),
            median_abs=float(np.median(absd)),
            sd_abs=float(absd.std(ddof=1)) if absd.size > 1 else None,
            mean_over=float(over.mean()) if over.size else None,
            mean_under=float(-under.mean()) if under.size else None,
            n=int(events.sum()),
        )
    margin = None
    n_cens = int((~events).sum())
    if bg_totals is not None and n_cens > 0:
        bg = np.asarray(bg_totals, dtype=float)
        margin = float(np.abs(bg[~events] - pmst[~events]).mean())
    return L1Losses(uncensored=block, margin_mean=margin, n_censored=n_cens)


@dataclass
class HosmerLemeshow:
    statistic: float
    p_value: float
    bins: list[dict]
    clamped_bins: int


def hosmer_lemeshow(
    surv_probs: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    tau_star: float,
    n_bins: int = 10,
) -> HosmerLemeshow:
    """One-horizon calibration against per-bin Kaplan-Meier survival.

    Patients are sorted by predicted survival and split into near-equal
    bins (remainders fill the leading bins).  Each bin contributes
    (n_b (1 - KM_b) - n_b pbar_b)^2 / (n_b pbar_b (1 - pbar_b)) with
    pbar_b the mean predicted event probability; degenerate pbar values
    are clamped to 1e-8 and counted.
    """
    surv_probs = np.asarray(surv_probs, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    n = surv_probs.size
    if n < n_bins:
        raise DataValidationError(f"need at least {n_bins} patients, got {n}")
    order = np.argsort(surv_probs, kind="stable")
    base, rem = divmod(n, n_bins)
    stat = 0.0
    clamped = 0
    bins = []
    start = 0
    for b in range(n_bins):
        size = base + (1 if b < rem else 0)
        idx = order[start : start + size]
        start += size
        n_b = idx.size
        p_bar = float((1.0 - surv_probs[idx]).mean())
        km_b = KaplanMeier(times[idx], events[idx]).at(tau_star)
        if p_bar <= 0.0 or p_bar >= 1.0:
            clamped += 1
            p_bar = min(max(p_bar, 1e-8), 1.0 - 1e-8)
        observed = n_b * (1.0 - km_b)
        expected = n_b * p_bar
        stat += (observed - expected) ** 2 / (n_b * p_bar * (1.0 - p_bar))
        bins.append({"n": n_b, "p_bar": p_bar, "km": km_b})
    df = n_bins - 2
    p_value = chi2_sf(stat, df) if df >= 1 else math.nan
    return HosmerLemeshow(statistic=stat, p_value=p_value, bins=bins, clamped_bins=clamped)


def brier(
    surv_probs: np.ndarray,
    times: np.ndarray,
    events: np.ndarray,
    tau_star: float,
) -> tuple[float, int]:
    """Inverse-probability-of-censoring weighted Brier score at a horizon.

    Events by the horizon contribute S-hat^2 / G(tau-), survivors
    (1 - S-hat)^2 / G(tau*); patients censored before the horizon
    contribute zero.  Patients whose weight denominator vanishes are
    dropped; returns (score, dropped count).
    """
    surv_probs = np.asarray(surv_probs, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    g = KaplanMeier(times, ~events)
    g_star = g.at(tau_star)
    total = 0.0
    dropped = 0
    kept = 0
    for s_hat, t, d in zip(surv_probs, times, events):
        if d and t <= tau_star:
            g_t = g.before(t)
            if g_t <= 0.0:
                dropped += 1
                continue
            total += (s_hat * s_hat) / g_t
            kept += 1
        elif t > tau_star:
            if g_star <= 0.0:
                dropped += 1
                continue
            total += (1.0 - s_hat) ** 2 / g_star
            kept += 1
        else:
            kept += 1   # censored before the horizon: zero contribution
    if kept == 0:
        raise DataValidationError("no usable patients for the Brier score")
    return total / kept, dropped


def parkes_serious_error(pmst: np.ndarray, times: np.ndarray) -> float:
    """Fraction of uncensored patients whose actual time is more than
    double or less than half the prediction (strict inequalities)."""
    pmst = np.asarray(pmst, dtype=float)
    times = np.asarray(times, dtype=float)
    if pmst.size == 0:
        raise DataValidationError("no uncensored patients")
    serious = (times > 2.0 * pmst) | (times < 0.5 * pmst)
    return float(serious.mean())


class PredictionSource(Protocol):
    """One trained model's predictions for an encoded evaluation cohort."""

    def survival_at(self, i: int, step: int, horizon_years: float) -> float: ...

    def pmst(self, i: int, step: int) -> float: ...


class WeibullTraceSource:
    """Per-timestep (kappa, lambda) trajectories, one row per patient."""

    def __init__(self, kappas: np.ndarray, lambdas: np.ndarray):
        self.kappas = kappas
        self.lambdas = lambdas

    def _params(self, i: int, step: int) -> WeibullParams:
        return WeibullParams(
            kappa=float(self.kappas[i, step]), lambda_=float(self.lambdas[i, step])
        )

    def survival_at(self, i: int, step: int, horizon_years: float) -> float:
        return survival(self._params(i, step), horizon_years)

    def pmst(self, i: int, step: int) -> float:
        return median(self._params(i, step))


class StaticWeibullSource:
    """A single index-date Weibull per patient (AFT-style)."""

    def __init__(self, params: list[WeibullParams]):
        self.params = params

    def survival_at(self, i: int, step: int, horizon_years: float) -> float:
        return survival(self.params[i], horizon_years)

    def pmst(self, i: int, step: int) -> float:
        return median(self.params[i])


class DiscreteCurveSource:
    """Stepwise survival curves on a fixed time grid (MTLR-style).

    Survival between grid points is interpolated linearly from (0, 1)
    through the curve; beyond the last point the last value holds.
    """

    def __init__(self, curves: np.ndarray, times: np.ndarray, pmsts: np.ndarray):
        self.curves = np.asarray(curves, dtype=float)
        self.times = np.concatenate([[0.0], np.asarray(times, dtype=float)])
        self.pmsts = np.asarray(pmsts, dtype=float)

    def survival_at(self, i: int, step: int, horizon_years: float) -> float:
        vals = np.concatenate([[1.0], self.curves[i]])
        if horizon_years >= self.times[-1]:
            return float(vals[-1])
        return float(np.interp(horizon_years, self.times, vals))

    def pmst(self, i: int, step: int) -> float:
        return float(self.pmsts[i])


@dataclass
class ModelGroup:
    """k checkpoints of one model family, aggregated mean +/- CI."""

    model_id: str
    members: list[PredictionSource]
    static: bool = False   # evaluate only at the index-date timestep


@dataclass
class EvalRow:
    timestep_day: int
    horizon_years: float
    metric: str
    model_id: str
    value: float | None
    ci_low: float | None
    ci_high: float | None
    n_effective: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(
                [
                    "timestep_day",
                    "horizon_years",
                    "metric",
                    "model_id",
                    "value",
                    "ci_low",
                    "ci_high",
                    "n_effective",
                ]
            )
            for r in self.rows:
                w.writerow(
                    [
                        r.timestep_day,
                        repr(r.horizon_years),
                        r.metric,
                        r.model_id,
                        "" if r.value is None else repr(r.value),
                        "" if r.ci_low is None else repr(r.ci_low),
                        "" if r.ci_high is None else repr(r.ci_high),
                        r.n_effective,
                    ]
                )

    def lookup(
        self, metric: str, model_id: str, horizon: float | None = None
    ) -> dict[int, float]:
        out: dict[int, float] = {}
        for r in self.rows:
            if r.metric != metric or r.model_id != model_id or r.value is None:
                continue
            if horizon is not None and r.horizon_years != horizon:
                continue
            out[r.timestep_day] = r.value
        return out


SWEEP_METRICS = ("c_index", "c_tau", "auroc", "brier", "hl", "l1", "parkes")


def _one_metric(
    metric: str,
    source: PredictionSource,
    idx: np.ndarray,
    step: int,
    horizon: float,
    rem_times: np.ndarray,
    rem_events: np.ndarray,
) -> float:
    if metric in ("c_index", "c_tau", "auroc", "brier", "hl"):
        s_h = np.array([source.survival_at(int(i), step, horizon) for i in idx])
        if metric == "c_index":
            return harrell_c(s_h, rem_times, rem_events)[0]
        if metric == "c_tau":
            return c_tau(s_h, rem_times, rem_events, horizon)[0]
        if metric == "auroc":
            return horizon_auroc(1.0 - s_h, rem_times, rem_events, horizon)[0]
        if metric == "brier":
            return brier(s_h, rem_times, rem_events, horizon)[0]
        return hosmer_lemeshow(s_h, rem_times, rem_events, horizon).statistic
    pm = np.array([source.pmst(int(i), step) for i in idx])
    if metric == "l1":
        block = l1_losses(pm, rem_times, rem_events).uncensored
        if block is None:
            raise DataValidationError("no uncensored patients")
        return block.mean_abs
    if metric == "parkes":
        if not rem_events.any():
            raise DataValidationError("no uncensored patients")
        return parkes_serious_error(pm[rem_events], rem_times[rem_events])
    raise DataValidationError(f"unknown metric {metric!r}")


def time_sweep(
    groups: list[ModelGroup],
    followup_days: np.ndarray,
    event_flags: np.ndarray,
    grid_boundaries: Iterable[int],
    horizons: Iterable[float],
    metrics: Iterable[str] = SWEEP_METRICS,
    step_indices: Iterable[int] | None = None,
) -> EvalReport:
    """Metric-versus-follow-up-time table.

    At each grid timestep the risk set is every patient whose follow-up
    extends past that day; remaining times are measured from the step.
    Predictions may use only data up to the step (trace sources guarantee
    this by construction).  Group values are the mean over the k members
    with a normal-approximation 95 percent interval; a failed metric
    (empty risk set, single class) yields a marker row with no value.
    """
    followup_days = np.asarray(followup_days, dtype=float)
    event_flags = np.asarray(event_flags, dtype=bool)
    boundaries = list(grid_boundaries)
    horizons = list(horizons)
    metrics = list(metrics)
    if step_indices is None:
        step_indices = range(len(boundaries))
    index_step = max(
        (t for t, b in enumerate(boundaries) if b <= 0), default=0
    )

    report = EvalReport()
    for t in step_indices:
        day = boundaries[t]
        at_risk = followup_days > day
        idx = np.nonzero(at_risk)[0]
        rem_times = (followup_days[idx] - day) / DAYS_PER_YEAR
        rem_events = event_flags[idx]
        for group in groups:
            if group.static and t != index_step:
                continue
            for horizon in horizons:
                for metric in metrics:
                    values = []
                    failed = idx.size == 0
                    if not failed:
                        for source in group.members:
                            try:
                                values.append(
                                    _one_metric(
                                        metric, source, idx, t, horizon, rem_times, rem_events
                                    )
                                )
                            except DataValidationError:
                                failed = True
                                break
                    if failed:
                        report.rows.append(
                            EvalRow(day, horizon, metric, group.model_id,
                                    None, None, None, int(idx.size))
                        )
                        continue
                    arr = np.asarray(values)
                    mean = float(arr.mean())
                    if arr.size > 1:
                        half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(arr.size)
                    else:
                        half = 0.0
                    report.rows.append(
                        EvalRow(day, horizon, metric, group.model_id,
                                mean, mean - half, mean + half, int(idx.size))
                    )
    return report
