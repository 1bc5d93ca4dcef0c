"""Target construction, batch training, and the streaming prediction entry.

Targets: for an uncensored patient the per-step target is the remaining
time to the event; for a censored patient it starts from the Best-Guess
conditional expectation (exponential shape, scale approximated by the
discrete baseline's mean survival time, truncated to five years) and
decreases by the elapsed grid time, floored at one day.  Per-patient
weights are 1 when uncensored and censoring-time/5-years otherwise.

The batch loss is the weighted sum of per-timestep composite losses
divided by the total number of contributing timesteps.  Training uses the
adaptive-moment stepper with a maintained maximum second moment, a global
gradient-norm clip, and an early stop that fires when validation loss
exceeds training loss by more than the configured relative gap for two
consecutive epochs, always returning the best-validation snapshot.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ttekit.cohort.encoding import (
    EncodedSequence,
    Norms,
    compute_norms,
    encode_cohort,
    stack_sequences,
)
from ttekit.cohort.features import FeatureSpec, default_roster
from ttekit.cohort.grid import TimeGrid, build_grid
from ttekit.cohort.records import PatientRecord
from ttekit.cohort.splits import FoldAssignment, select_records
from ttekit.errors import DataValidationError, NumericalFailure
from ttekit.grud import (
    BatchTrace,
    GrudParameters,
    backward_batch,
    forward,
    forward_batch,
    init_parameters,
)
from ttekit.optim import AmsGrad, clip_global_norm
from ttekit.weibull import (
    WeibullParams,
    best_guess,
    composite_loss_arrays,
    composite_loss_grad_arrays,
    median,
    survival,
)

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25
TAU_FLOOR_YEARS = 1.0 / DAYS_PER_YEAR
BG_CAP_YEARS = 5.0
LOSS_CLIP = 1e6
DIVERGENCE_LIMIT = 1e5


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 500
    grad_clip_norm: float = 1.0
    early_stop_gap: float = 0.04
    hidden: int = 40
    seed: int = 0
    tau_floor: float = TAU_FLOOR_YEARS
    fixed_kappa: tuple[float, float] | None = None
    early_stop_enabled: bool = True
    dropout: float = 0.0

    def validate(self) -> None:
        for name in ("learning_rate", "epochs", "batch_size", "grad_clip_norm", "hidden", "tau_floor"):
            if getattr(self, name) <= 0:
                raise DataValidationError(f"TrainConfig.{name} must be positive")
        if not 0.0 < self.early_stop_gap < 1.0:
            raise DataValidationError("early_stop_gap must lie in (0, 1)")
        if self.dropout != 0.0:
            raise DataValidationError("dropout is a config hook only; it must stay 0")
        if self.fixed_kappa is not None:
            center, half = self.fixed_kappa
            if center <= 0 or half <= 0 or center - half <= 0:
                raise DataValidationError("fixed_kappa needs a positive center +/- halfwidth")

    @property
    def kappa_clamp(self) -> tuple[float, float] | None:
        if self.fixed_kappa is None:
            return None
        center, half = self.fixed_kappa
        return (center - half, center + half)

    def to_file(self, path) -> None:
        lines = [
            f"learning_rate={self.learning_rate!r}",
            f"epochs={self.epochs}",
            f"batch_size={self.batch_size}",
            f"grad_clip_norm={self.grad_clip_norm!r}",
            f"early_stop_gap={self.early_stop_gap!r}",
            f"hidden={self.hidden}",
            f"seed={self.seed}",
            f"tau_floor={self.tau_floor!r}",
            "fixed_kappa=" + ("" if self.fixed_kappa is None else f"{self.fixed_kappa[0]!r},{self.fixed_kappa[1]!r}"),
            f"early_stop_enabled={'true' if self.early_stop_enabled else 'false'}",
            f"dropout={self.dropout!r}",
        ]
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        values: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataValidationError(f"{path}: line {lineno}: expected key=value")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
        cfg = cls()
        for key, value in values.items():
            if key == "fixed_kappa":
                if value:
                    center, half = (float(v) for v in value.split(","))
                    cfg.fixed_kappa = (center, half)
                else:
                    cfg.fixed_kappa = None
            elif key == "early_stop_enabled":
                cfg.early_stop_enabled = value.lower() in ("1", "true", "yes")
            elif key in ("epochs", "batch_size", "hidden", "seed"):
                setattr(cfg, key, int(value))
            elif key in ("learning_rate", "grad_clip_norm", "early_stop_gap", "tau_floor", "dropout"):
                setattr(cfg, key, float(value))
            else:
                raise DataValidationError(f"{path}: unknown config key {key!r}")
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "grad_clip_norm": self.grad_clip_norm,
            "early_stop_gap": self.early_stop_gap,
            "hidden": self.hidden,
            "seed": self.seed,
            "tau_floor": self.tau_floor,
            "fixed_kappa": list(self.fixed_kappa) if self.fixed_kappa else None,
            "early_stop_enabled": self.early_stop_enabled,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        cfg = cls(**{**d, "fixed_kappa": tuple(d["fixed_kappa"]) if d.get("fixed_kappa") else None})
        cfg.validate()
        return cfg


def censoring_weight(t_c_years: float) -> float:
    """Per-patient weight: 1 when uncensored, censoring time over five
    years (capped at 1) otherwise."""
    return min(t_c_years / 5.0, 1.0)


@dataclass
class TrainingTarget:
    patient_id: str
    taus: np.ndarray        # (T_i,) remaining years, strictly decreasing
    weight: float
    censored: bool
    bg_total: float | None = None

    @property
    def t_valid(self) -> int:
        return len(self.taus)


def build_targets(
    records: list[PatientRecord],
    grid: TimeGrid,
    mean_survival: Callable[[PatientRecord], float] | None = None,
    tau_floor: float = TAU_FLOOR_YEARS,
) -> list[TrainingTarget]:
    """Per-patient remaining-time targets and weights.

    ``mean_survival`` supplies the censored patients' Best-Guess scale (the
    discrete baseline's mean survival time in years) and is required as
    soon as the cohort contains a censored patient.
    """
    boundaries = np.asarray(grid.boundaries, dtype=float)
    targets = []
    for rec in records:
        t_i = grid.valid_steps(rec.followup_end)
        if t_i == 0:
            logger.warning("%s: no valid timesteps, skipping", rec.patient_id)
            continue
        days = boundaries[:t_i]
        if rec.event_flag:
            taus = np.maximum((rec.followup_end - days) / DAYS_PER_YEAR, tau_floor)
            targets.append(
                TrainingTarget(
                    patient_id=rec.patient_id, taus=taus, weight=1.0, censored=False
                )
            )
        else:
            if mean_survival is None:
                raise DataValidationError(
                    f"{rec.patient_id} is censored but no mean-survival source was given"
                )
            scale = mean_survival(rec)
            if scale <= 0.0:
                raise DataValidationError(
                    f"{rec.patient_id}: mean survival must be positive, got {scale}"
                )
            c_years = rec.followup_end / DAYS_PER_YEAR
            bg_total = min(best_guess(WeibullParams(1.0, scale), c_years), BG_CAP_YEARS)
            elapsed = (days - days[0]) / DAYS_PER_YEAR
            taus = np.maximum(bg_total - elapsed, tau_floor)
            targets.append(
                TrainingTarget(
                    patient_id=rec.patient_id,
                    taus=taus,
                    weight=censoring_weight(c_years),
                    censored=True,
                    bg_total=bg_total,
                )
            )
    return targets


def stack_targets(
    targets: list[TrainingTarget], n_steps: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(tau (N, T) padded with 1.0, weights (N,), t_valid (N,))."""
    n = len(targets)
    tau = np.ones((n, n_steps))
    w = np.empty(n)
    t_valid = np.empty(n, dtype=int)
    for i, tgt in enumerate(targets):
        tau[i, : tgt.t_valid] = tgt.taus
        w[i] = tgt.weight
        t_valid[i] = tgt.t_valid
    return tau, w, t_valid


def _masked_loss(
    trace: BatchTrace,
    tau: np.ndarray,
    weights: np.ndarray,
    t_valid: np.ndarray,
) -> tuple[float, np.ndarray, np.ndarray, int, float]:
    """Weighted clipped loss plus per-step gradient coefficients.

    Returns (mean loss, d kappa, d lambda, clipped count, sum of T_i).
    """
    n, n_t = trace.kappas.shape
    valid = np.arange(n_t)[None, :] < t_valid[:, None]
    neglog, msle = composite_loss_arrays(trace.kappas, trace.lambdas, tau)
    total = neglog + msle
    bad = valid & (~np.isfinite(total) | (total > LOSS_CLIP))
    total = np.where(bad, LOSS_CLIP, total)
    sum_t = float(t_valid.sum())
    loss = float((weights[:, None] * np.where(valid, total, 0.0)).sum() / sum_t)

    dk, dl = composite_loss_grad_arrays(trace.kappas, trace.lambdas, tau)
    coeff = (weights / sum_t)[:, None]
    live = valid & ~bad
    d_kappa = np.where(live, coeff * dk, 0.0)
    d_lambda = np.where(live, coeff * dl, 0.0)
    # pathological parameters can also break the gradient alone
    nonfinite = ~np.isfinite(d_kappa) | ~np.isfinite(d_lambda)
    d_kappa = np.where(nonfinite, 0.0, d_kappa)
    d_lambda = np.where(nonfinite, 0.0, d_lambda)
    return loss, d_kappa, d_lambda, int(bad.sum()), sum_t


def batch_loss(
    params: GrudParameters,
    batch: list[tuple[EncodedSequence, TrainingTarget]],
    gaps_days: np.ndarray | None = None,
    kappa_clamp: tuple[float, float] | None = None,
) -> float:
    """Mean weighted composite loss over a batch of encoded patients."""
    if not batch:
        raise DataValidationError("batch_loss needs a nonempty batch")
    seqs = [s for s, _ in batch]
    targets = [t for _, t in batch]
    if gaps_days is None:
        gaps_days = build_grid().gaps_days()
    x, m, delta, _ = stack_sequences(seqs)
    tau, w, t_valid = stack_targets(targets, x.shape[2])
    trace = forward_batch(
        params, x, m, delta, gaps_days, t_valid, seqs[0].empirical_means,
        cache=False, kappa_clamp=kappa_clamp,
    )
    loss, _, _, _, _ = _masked_loss(trace, tau, w, t_valid)
    return loss


@dataclass
class EpochRow:
    fold: int
    epoch: int
    train_loss: float
    val_loss: float
    stopped: bool


@dataclass
class FoldModel:
    fold: int
    params: GrudParameters
    norms: Norms
    best_val_loss: float
    clipped_losses: int


@dataclass
class TrainResult:
    models: list[FoldModel]
    curve: list[EpochRow] = field(default_factory=list)


def _train_epochs(
    params: GrudParameters,
    train_data: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray],
    val_data: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None,
    emp_means: np.ndarray,
    gaps_days: np.ndarray,
    config: TrainConfig,
    fold: int,
    curve: list[EpochRow],
) -> tuple[GrudParameters, float, int]:
    """Shared epoch loop; returns (best params, best val loss, clip count)."""
    x, m, delta, tau, w, t_valid = train_data
    n = x.shape[0]
    rng = np.random.default_rng(config.seed + 7919 * fold)
    opt = AmsGrad(lr=config.learning_rate)
    clamp = config.kappa_clamp
    clipped = 0
    best_params = params.copy()
    best_val = math.inf
    consecutive = 0

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        w_sum = 0.0
        t_sum = 0.0
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start : start + config.batch_size])
            trace = forward_batch(
                params, x[idx], m[idx], delta[idx], gaps_days, t_valid[idx],
                emp_means, cache=True, kappa_clamp=clamp,
            )
            loss, dk, dl, n_bad, sum_t = _masked_loss(trace, tau[idx], w[idx], t_valid[idx])
            clipped += n_bad
            grads = backward_batch(params, trace, dk, dl)
            clip_global_norm(grads, config.grad_clip_norm)
            opt.step(params.arrays(), grads)
            w_sum += loss * sum_t
            t_sum += sum_t
        train_loss = w_sum / t_sum
        if not math.isfinite(train_loss) or train_loss > DIVERGENCE_LIMIT:
            raise NumericalFailure(
                f"fold {fold}: training diverged at epoch {epoch} (mean loss {train_loss:.3g})"
            )
        if not params.all_finite():
            raise NumericalFailure(f"fold {fold}: non-finite parameters after epoch {epoch}")

        if val_data is not None:
            vx, vm, vd, vtau, vw, vt = val_data
            vtrace = forward_batch(
                params, vx, vm, vd, gaps_days, vt, emp_means, cache=False, kappa_clamp=clamp
            )
            val_loss, _, _, _, _ = _masked_loss(vtrace, vtau, vw, vt)
            if val_loss < best_val:
                best_val = val_loss
                best_params = params.copy()
            gap = (val_loss - train_loss) / train_loss
            consecutive = consecutive + 1 if gap > config.early_stop_gap else 0
            stop = config.early_stop_enabled and consecutive >= 2
        else:
            val_loss = math.nan
            best_params = params.copy()
            stop = False
        curve.append(EpochRow(fold=fold, epoch=epoch, train_loss=train_loss,
                              val_loss=val_loss, stopped=stop))
        if stop:
            logger.info("fold %d: early stop at epoch %d", fold, epoch)
            break
    return best_params, best_val, clipped


def _prepare_arrays(
    records: list[PatientRecord],
    targets: list[TrainingTarget],
    norms: Norms,
    roster: list[FeatureSpec],
    grid: TimeGrid,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    by_id = {t.patient_id: t for t in targets}
    kept = [r for r in records if r.patient_id in by_id]
    seqs = encode_cohort(kept, grid, norms, roster)
    x, m, delta, _ = stack_sequences(seqs)
    tau, w, t_valid = stack_targets([by_id[r.patient_id] for r in kept], grid.n_steps)
    return x, m, delta, tau, w, t_valid


def train_single(
    train_records: list[PatientRecord],
    config: TrainConfig,
    val_records: list[PatientRecord] | None = None,
    roster: list[FeatureSpec] | None = None,
    grid: TimeGrid | None = None,
    mean_survival: Callable[[PatientRecord], float] | None = None,
    fold: int = 0,
    curve: list[EpochRow] | None = None,
) -> FoldModel:
    """Train one model on explicit train/validation record sets."""
    config.validate()
    roster = roster or default_roster()
    grid = grid or build_grid()
    if not train_records:
        raise DataValidationError("no training records")
    norms = compute_norms(train_records, roster, grid)
    targets = build_targets(train_records, grid, mean_survival, config.tau_floor)
    data = _prepare_arrays(train_records, targets, norms, roster, grid)
    val_data = None
    if val_records:
        val_targets = build_targets(val_records, grid, mean_survival, config.tau_floor)
        val_data = _prepare_arrays(val_records, val_targets, norms, roster, grid)

    mean_target = float(np.concatenate([t.taus for t in targets]).mean())
    kappa_init = config.fixed_kappa[0] if config.fixed_kappa else 1.0
    params = init_parameters(
        len(roster), config.hidden, seed=config.seed + 104729 * fold,
        kappa_init=kappa_init, lambda_init=mean_target,
    )
    emp = np.array([norms.empirical_mean[s.name] for s in roster])
    if curve is None:
        curve = []
    best_params, best_val, clipped = _train_epochs(
        params, data, val_data, emp, grid.gaps_days(), config, fold, curve
    )
    return FoldModel(
        fold=fold, params=best_params, norms=norms,
        best_val_loss=best_val, clipped_losses=clipped,
    )


def train(
    records: list[PatientRecord],
    folds: FoldAssignment,
    config: TrainConfig,
    roster: list[FeatureSpec] | None = None,
    grid: TimeGrid | None = None,
    mean_survival_by_fold: dict[int, Callable[[PatientRecord], float]] | None = None,
) -> TrainResult:
    """K-fold training: per fold, k-2 chunks train, one validates, one is
    held for testing; fold f keeps the best-validation checkpoint."""
    config.validate()
    k = folds.k
    if k < 3:
        raise DataValidationError("k-fold training needs k >= 3 (k-2 train chunks)")
    curve: list[EpochRow] = []
    models = []
    for f in range(1, k + 1):
        val_chunk = f % k + 1
        train_labels = {f"fold{j}" for j in range(1, k + 1) if j not in (f, val_chunk)}
        train_records = select_records(records, folds, train_labels)
        val_records = select_records(records, folds, {f"fold{val_chunk}"})
        mean_survival = None
        if mean_survival_by_fold is not None:
            mean_survival = mean_survival_by_fold.get(f)
        model = train_single(
            train_records,
            config,
            val_records=val_records,
            roster=roster,
            grid=grid,
            mean_survival=mean_survival,
            fold=f,
            curve=curve,
        )
        models.append(model)
    return TrainResult(models=models, curve=curve)


@dataclass
class StreamPrediction:
    patient_id: str
    step: int
    day: int
    kappa: float
    lambda_: float
    pmst_years: float
    survival_at: dict[float, float]


def predict_stream(
    params: GrudParameters,
    meta: dict,
    record: PatientRecord,
    horizons: list[float],
    upto_day: int | None = None,
) -> StreamPrediction:
    """Run the recurrence over the observed prefix and report the latest
    distribution, its median (PMST), and survival at each horizon."""
    grid: TimeGrid = meta["grid"]
    roster = meta["roster"]
    norms: Norms = meta["norms"]
    clamp = None
    tc = meta.get("train_config")
    if tc and tc.get("fixed_kappa"):
        center, half = tc["fixed_kappa"]
        clamp = (center - half, center + half)
    if upto_day is None:
        if not record.dynamic_observations and not record.comorbidity_diagnoses:
            raise DataValidationError(f"{record.patient_id}: nothing observed yet")
        days = [d for d, _, _ in record.dynamic_observations]
        days += [d for d, _ in record.comorbidity_diagnoses]
        upto_day = max(days)
    step = grid.step_of_day(upto_day)
    if step is None:
        raise DataValidationError(
            f"{record.patient_id}: day {upto_day} is outside the grid"
        )
    probe = PatientRecord(
        patient_id=record.patient_id,
        age_at_index=record.age_at_index,
        static_features=record.static_features,
        dynamic_observations=record.dynamic_observations,
        comorbidity_diagnoses=record.comorbidity_diagnoses,
        followup_end=grid.end_day + 1,  # encode the full horizon
        event_flag=False,
    )
    from ttekit.cohort.encoding import encode

    seq = encode(probe, grid, norms, roster)
    trace = forward(
        params, seq, cache=False, kappa_clamp=clamp,
        gaps_days=grid.gaps_days(), n_steps=step + 1,
    )
    p = trace.params_at(step)
    return StreamPrediction(
        patient_id=record.patient_id,
        step=step,
        day=upto_day,
        kappa=p.kappa,
        lambda_=p.lambda_,
        pmst_years=median(p),
        survival_at={h: survival(p, h) for h in horizons},
    )
