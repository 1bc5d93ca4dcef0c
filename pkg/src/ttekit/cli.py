"""Command-line surface for the full pipeline.

Subcommands: ``cohort generate``, ``prep encode``, ``train grud``,
``train aft``, ``train mtlr``, ``eval sweep``, ``explain importance``,
``explain pdp``, ``predict stream``.  Exit codes: 0 success, 1 usage
error, 2 data/validation error, 3 numerical failure.  Every stochastic
command requires ``--seed`` and derives all randomness from it; every
command writes a manifest with content hashes next to its outputs.
stdout carries data only, diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ttekit.aft import AftModel, aft_fit, aft_predict, coefficient_table
from ttekit.analysis import (
    CheckpointContext,
    importance_csv,
    partial_dependence,
    pdp_csv,
    permutation_importance,
)
from ttekit.cohort.baseline import baseline_matrix, mean_impute
from ttekit.cohort.encoding import compute_norms, encode_cohort, stack_sequences
from ttekit.cohort.features import KIND_COMORBIDITY, default_roster, roster_index
from ttekit.cohort.grid import build_grid
from ttekit.cohort.io import export_jsonl, ingest_jsonl
from ttekit.cohort.records import PatientRecord
from ttekit.cohort.splits import HOLDOUT, FoldAssignment, select_records, split_cohort
from ttekit.cohort.synth import SyntheticConfig, generate_synthetic_cohort
from ttekit.errors import DataValidationError, NumericalFailure
from ttekit.grud import forward_batch, load_checkpoint, save_checkpoint
from ttekit.metrics import (
    SWEEP_METRICS,
    DiscreteCurveSource,
    EvalReport,
    ModelGroup,
    StaticWeibullSource,
    WeibullTraceSource,
    time_sweep,
)
from ttekit.mtlr import MtlrModel, mtlr_fit, mtlr_point_estimates, mtlr_survival
from ttekit.training import TrainConfig, predict_stream, train
from ttekit.weibull import WeibullParams

logger = logging.getLogger("ttekit")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise _UsageError(message)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_anchor: Path, command: str, args: argparse.Namespace,
                    inputs: list[Path], outputs: list[Path]) -> None:
    manifest = {
        "command": command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "inputs": {str(p): _sha256(p) for p in inputs if p and p.exists()},
        "outputs": [str(p) for p in outputs],
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    path = (
        out_anchor / "manifest.json"
        if out_anchor.is_dir()
        else out_anchor.with_suffix(out_anchor.suffix + ".manifest.json")
    )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise _UsageError(f"expected a comma-separated float list, got {text!r}") from exc


# ---------------------------------------------------------------------------
# cohort generate


def _cmd_cohort_generate(args: argparse.Namespace) -> int:
    config = SyntheticConfig(n_patients=args.n, censoring_target=args.censoring)
    records, truth = generate_synthetic_cohort(config, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    export_jsonl(records, out)
    truth_path = Path(args.truth_out) if args.truth_out else out.with_suffix(".truth.json")
    truth.to_json(truth_path)
    _write_manifest(out, "cohort generate", args, [], [out, truth_path])
    logger.info(
        "generated %d patients, censored fraction %.3f", len(records), truth.achieved_censoring
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# prep encode


def _cmd_prep_encode(args: argparse.Namespace) -> int:
    cohort_path = Path(args.cohort)
    records = ingest_jsonl(cohort_path)
    folds = split_cohort(records, k=args.k, n_holdout=args.holdout, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    folds_path = out_dir / "folds.csv"
    folds.to_csv(folds_path)

    roster = default_roster()
    grid = build_grid()
    non_holdout = select_records(records, folds, {f"fold{j}" for j in range(1, args.k + 1)})
    norms = compute_norms(non_holdout, roster, grid)
    norms_path = out_dir / "norms.csv"
    with open(norms_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "mean", "sd", "empirical_mean"])
        for spec in roster:
            w.writerow(
                [
                    spec.name,
                    repr(norms.mean[spec.name]),
                    repr(norms.sd[spec.name]),
                    repr(norms.empirical_mean[spec.name]),
                ]
            )
    grid_path = out_dir / "grid.csv"
    with open(grid_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "day"])
        for t, day in enumerate(grid.boundaries):
            w.writerow([t, day])
    _write_manifest(out_dir, "prep encode", args, [cohort_path],
                    [folds_path, norms_path, grid_path])
    return EXIT_OK


# ---------------------------------------------------------------------------
# train mtlr / aft / grud


def _fold_train_records(records, folds: FoldAssignment, fold: int):
    k = folds.k
    val_chunk = fold % k + 1
    train_labels = {f"fold{j}" for j in range(1, k + 1) if j not in (fold, val_chunk)}
    return (
        select_records(records, folds, train_labels),
        select_records(records, folds, {f"fold{val_chunk}"}),
    )


def _tabular(records, roster):
    x_raw, names = baseline_matrix(records, roster)
    tau = np.array([r.followup_years for r in records])
    events = np.array([r.event_flag for r in records], dtype=bool)
    return x_raw, names, tau, events


def _cmd_train_mtlr(args: argparse.Namespace) -> int:
    records = ingest_jsonl(Path(args.cohort))
    folds = FoldAssignment.from_csv(Path(args.folds))
    roster = default_roster()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for f in range(1, folds.k + 1):
        train_records, _ = _fold_train_records(records, folds, f)
        x_raw, names, tau, events = _tabular(train_records, roster)
        x, means = mean_impute(x_raw)
        model = mtlr_fit(x, tau, events, l2_strength=args.l2, feature_names=names)
        model.impute_means = means
        path = out_dir / f"mtlr_fold{f}.json"
        model.to_json(path)
        outputs.append(path)
        logger.info("fold %d: MTLR converged in %d iterations", f, model.n_iter)
    _write_manifest(out_dir, "train mtlr", args, [Path(args.cohort), Path(args.folds)], outputs)
    return EXIT_OK


def _cmd_train_aft(args: argparse.Namespace) -> int:
    records = ingest_jsonl(Path(args.cohort))
    folds = FoldAssignment.from_csv(Path(args.folds))
    roster = default_roster()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    betas = []
    ses = []
    names = None
    for f in range(1, folds.k + 1):
        train_records, _ = _fold_train_records(records, folds, f)
        x_raw, names, tau, events = _tabular(train_records, roster)
        x, means = mean_impute(x_raw)
        model = aft_fit(x, tau, events, feature_names=names)
        model.impute_means = means
        path = out_dir / f"aft_fold{f}.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(model.to_dict(), fh)
        table = out_dir / f"aft_fold{f}_coefficients.csv"
        coefficient_table(model, table)
        outputs += [path, table]
        betas.append(model.beta)
        ses.append(model.std_errors[: len(model.beta)])
        logger.info("fold %d: AFT converged in %d iterations, sigma %.4f", f, model.n_iter, model.sigma)
    pooled = out_dir / "coefficients.csv"
    with open(pooled, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "coefficient", "std_error"])
        mean_beta = np.mean(betas, axis=0)
        mean_se = np.mean(ses, axis=0)
        for i, name in enumerate(["intercept"] + list(names)):
            w.writerow([name, repr(float(mean_beta[i])), repr(float(mean_se[i]))])
    outputs.append(pooled)
    _write_manifest(out_dir, "train aft", args, [Path(args.cohort), Path(args.folds)], outputs)
    return EXIT_OK


def _load_mtlr_dir(mtlr_dir: Path, k: int) -> dict[int, MtlrModel]:
    models = {}
    for f in range(1, k + 1):
        path = mtlr_dir / f"mtlr_fold{f}.json"
        if not path.exists():
            raise DataValidationError(f"missing MTLR model for fold {f}: {path}")
        models[f] = MtlrModel.from_json(path)
    return models


def _mean_survival_fn(model: MtlrModel, roster):
    idx = roster_index(roster)

    def fn(record: PatientRecord) -> float:
        x_raw, _ = baseline_matrix([record], roster)
        x, _ = mean_impute(x_raw, model.impute_means)
        return mtlr_point_estimates(model, x[0])["mean"]

    return fn


def _cmd_train_grud(args: argparse.Namespace) -> int:
    records = ingest_jsonl(Path(args.cohort))
    folds = FoldAssignment.from_csv(Path(args.folds))
    roster = default_roster()
    grid = build_grid()
    config = TrainConfig.from_file(Path(args.config)) if args.config else TrainConfig()
    config.seed = args.seed
    if args.epochs is not None:
        config.epochs = args.epochs
    if args.fixed_kappa:
        center, half = _parse_floats(args.fixed_kappa)
        config.fixed_kappa = (center, half)
    config.validate()

    mean_survival_by_fold = None
    any_censored = any(not r.event_flag for r in records)
    if args.mtlr_dir:
        mtlr_models = _load_mtlr_dir(Path(args.mtlr_dir), folds.k)
        mean_survival_by_fold = {
            f: _mean_survival_fn(m, roster) for f, m in mtlr_models.items()
        }
    elif any_censored:
        raise DataValidationError(
            "cohort has censored patients: --mtlr-dir is required for Best-Guess targets"
        )

    result = train(records, folds, config, roster=roster, grid=grid,
                   mean_survival_by_fold=mean_survival_by_fold)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    for model in result.models:
        path = out_dir / f"grud_fold{model.fold}.json"
        save_checkpoint(
            model.params,
            {
                "roster": roster,
                "grid": grid,
                "norms": model.norms,
                "train_config": config.to_dict(),
                "seed": config.seed,
                "fold": model.fold,
            },
            path,
        )
        outputs.append(path)
    curves = out_dir / "loss_curves.csv"
    with open(curves, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fold", "epoch", "train_loss", "val_loss", "stopped"])
        for row in result.curve:
            w.writerow(
                [row.fold, row.epoch, repr(row.train_loss), repr(row.val_loss), int(row.stopped)]
            )
    outputs.append(curves)
    inputs = [Path(args.cohort), Path(args.folds)]
    if args.config:
        inputs.append(Path(args.config))
    _write_manifest(out_dir, "train grud", args, inputs, outputs)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval sweep


def _load_contexts(grud_dir: Path) -> list[CheckpointContext]:
    paths = sorted(grud_dir.glob("grud_fold*.json"))
    if not paths:
        raise DataValidationError(f"no grud_fold*.json checkpoints under {grud_dir}")
    contexts = []
    for p in paths:
        params, meta = load_checkpoint(p)
        contexts.append(CheckpointContext(params=params, meta=meta))
    return contexts


def _grud_group(contexts, records) -> ModelGroup:
    members = []
    for ctx in contexts:
        grid = ctx.meta["grid"]
        seqs = encode_cohort(records, grid, ctx.meta["norms"], ctx.meta["roster"])
        x, m, delta, _ = stack_sequences(seqs)
        t_full = np.full(x.shape[0], grid.n_steps)
        trace = forward_batch(
            ctx.params, x, m, delta, grid.gaps_days(), t_full,
            seqs[0].empirical_means, cache=False, kappa_clamp=ctx.kappa_clamp,
        )
        members.append(WeibullTraceSource(trace.kappas, trace.lambdas))
    return ModelGroup(model_id="grud", members=members, static=False)


def _aft_group(aft_dir: Path, records, roster) -> ModelGroup:
    members = []
    for path in sorted(aft_dir.glob("aft_fold*.json")):
        with open(path, encoding="utf-8") as fh:
            model = AftModel.from_dict(json.load(fh))
        x_raw, _ = baseline_matrix(records, roster)
        x, _ = mean_impute(x_raw, model.impute_means)
        members.append(StaticWeibullSource([aft_predict(model, row) for row in x]))
    if not members:
        raise DataValidationError(f"no aft_fold*.json models under {aft_dir}")
    return ModelGroup(model_id="aft", members=members, static=True)


def _mtlr_group(mtlr_dir: Path, records, roster) -> ModelGroup:
    members = []
    for path in sorted(mtlr_dir.glob("mtlr_fold*.json")):
        model = MtlrModel.from_json(path)
        x_raw, _ = baseline_matrix(records, roster)
        x, _ = mean_impute(x_raw, model.impute_means)
        curves = np.stack([mtlr_survival(model, row) for row in x])
        pmsts = np.array([mtlr_point_estimates(model, row)["pmst"] for row in x])
        members.append(DiscreteCurveSource(curves, model.times, pmsts))
    if not members:
        raise DataValidationError(f"no mtlr_fold*.json models under {mtlr_dir}")
    return ModelGroup(model_id="mtlr", members=members, static=True)


def _cmd_eval_sweep(args: argparse.Namespace) -> int:
    records = ingest_jsonl(Path(args.cohort))
    folds = FoldAssignment.from_csv(Path(args.folds))
    roster = default_roster()
    if args.subset == "holdout":
        subset = select_records(records, folds, {HOLDOUT})
    else:
        subset = select_records(records, folds, {args.subset})
    if not subset:
        raise DataValidationError(f"no patients in subset {args.subset!r}")

    contexts = _load_contexts(Path(args.grud_dir))
    grid = contexts[0].meta["grid"]
    groups = [_grud_group(contexts, subset)]
    if args.aft_dir:
        groups.append(_aft_group(Path(args.aft_dir), subset, roster))
    if args.mtlr_dir:
        groups.append(_mtlr_group(Path(args.mtlr_dir), subset, roster))

    followups = np.array([r.followup_end for r in subset], dtype=float)
    events = np.array([r.event_flag for r in subset], dtype=bool)
    step_indices = list(range(0, grid.n_steps, args.step_stride))
    report = time_sweep(
        groups,
        followups,
        events,
        grid.boundaries,
        horizons=_parse_floats(args.horizons),
        metrics=[m.strip() for m in args.metrics.split(",") if m.strip()],
        step_indices=step_indices,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(out)
    inputs = [Path(args.cohort), Path(args.folds)]
    _write_manifest(out, "eval sweep", args, inputs, [out])
    return EXIT_OK


# ---------------------------------------------------------------------------
# explain


def _cmd_explain_importance(args: argparse.Namespace) -> int:
    records = ingest_jsonl(Path(args.cohort))
    folds = FoldAssignment.from_csv(Path(args.folds))
    heldout = select_records(records, folds, {HOLDOUT})
    contexts = _load_contexts(Path(args.grud_dir))
    grid = contexts[0].meta["grid"]
    step_indices = (
        [int(s) for s in args.steps.split(",")] if args.steps
        else list(range(0, grid.n_steps, args.step_stride))
    )
    rows = permutation_importance(
        contexts,
        heldout,
        args.feature,
        horizons=_parse_floats(args.horizons),
        n_perm=args.n_perm,
        seed=args.seed,
        step_indices=step_indices,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    importance_csv(rows, out)
    _write_manifest(out, "explain importance", args, [Path(args.cohort), Path(args.folds)], [out])
    return EXIT_OK


def _cmd_explain_pdp(args: argparse.Namespace) -> int:
    records = ingest_jsonl(Path(args.cohort))
    folds = FoldAssignment.from_csv(Path(args.folds))
    heldout = select_records(records, folds, {HOLDOUT})
    contexts = _load_contexts(Path(args.grud_dir))
    days = [int(d) for d in args.followup_days.split(",")]
    rows = partial_dependence(contexts, heldout, args.feature, days)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    pdp_csv(rows, out)
    _write_manifest(out, "explain pdp", args, [Path(args.cohort), Path(args.folds)], [out])
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict stream


def _cmd_predict_stream(args: argparse.Namespace) -> int:
    params, meta = load_checkpoint(Path(args.checkpoint))
    horizons = _parse_floats(args.horizons)
    roster = meta["roster"]
    idx = roster_index(roster)
    state: dict[str, PatientRecord] = {}
    last_day: dict[str, int] = {}

    for lineno, line in enumerate(sys.stdin, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            print(f"line {lineno}: expected patient_id,day,feature,value", file=sys.stderr)
            continue
        pid, day_s, feature, value_s = parts
        try:
            day = int(day_s)
            value = float(value_s)
        except ValueError:
            print(f"line {lineno}: malformed day or value", file=sys.stderr)
            continue
        rec = state.setdefault(
            pid, PatientRecord(patient_id=pid, age_at_index=None, followup_end=1)
        )
        if feature == "age_at_index":
            rec.age_at_index = value
        elif feature in ("gender", "race"):
            rec.static_features[feature] = value
        elif feature in idx and roster[idx[feature]].kind == KIND_COMORBIDITY:
            rec.comorbidity_diagnoses.append((day, feature))
        elif feature in idx and not roster[idx[feature]].static and feature != "age":
            rec.dynamic_observations.append((day, feature, value))
        else:
            print(f"line {lineno}: unknown or non-streamable feature {feature!r}", file=sys.stderr)
            continue
        last_day[pid] = max(last_day.get(pid, day), day)
        try:
            pred = predict_stream(params, meta, rec, horizons, upto_day=last_day[pid])
        except DataValidationError as exc:
            print(f"line {lineno}: {exc}", file=sys.stderr)
            continue
        s_cols = ",".join(repr(pred.survival_at[h]) for h in horizons)
        print(
            f"{pid},{day},{pred.kappa!r},{pred.lambda_!r},{pred.pmst_years!r},{s_cols}",
            flush=True,
        )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="ttekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    cohort = sub.add_parser("cohort", parents=[], help="cohort utilities")
    cohort_sub = cohort.add_subparsers(dest="subcommand", required=True)
    gen = cohort_sub.add_parser("generate", help="generate a synthetic cohort")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--censoring", type=float, default=0.49)
    gen.add_argument("--truth-out", default=None)
    gen.set_defaults(func=_cmd_cohort_generate)

    prep = sub.add_parser("prep", help="preprocessing utilities")
    prep_sub = prep.add_subparsers(dest="subcommand", required=True)
    enc = prep_sub.add_parser("encode", help="fold assignment, norms, and grid tables")
    enc.add_argument("--cohort", required=True)
    enc.add_argument("--seed", type=int, required=True)
    enc.add_argument("--k", type=int, default=5)
    enc.add_argument("--holdout", type=int, required=True)
    enc.add_argument("--out-dir", required=True)
    enc.set_defaults(func=_cmd_prep_encode)

    tr = sub.add_parser("train", help="model training")
    tr_sub = tr.add_subparsers(dest="subcommand", required=True)
    tg = tr_sub.add_parser("grud", help="train the recurrent Weibull model per fold")
    tg.add_argument("--cohort", required=True)
    tg.add_argument("--folds", required=True)
    tg.add_argument("--out-dir", required=True)
    tg.add_argument("--seed", type=int, required=True)
    tg.add_argument("--config", default=None)
    tg.add_argument("--epochs", type=int, default=None)
    tg.add_argument("--mtlr-dir", default=None)
    tg.add_argument("--fixed-kappa", default=None, metavar="CENTER,HALFWIDTH")
    tg.set_defaults(func=_cmd_train_grud)
    ta = tr_sub.add_parser("aft", help="fit the accelerated failure time baseline per fold")
    ta.add_argument("--cohort", required=True)
    ta.add_argument("--folds", required=True)
    ta.add_argument("--out-dir", required=True)
    ta.set_defaults(func=_cmd_train_aft)
    tm = tr_sub.add_parser("mtlr", help="fit the multi-target logistic baseline per fold")
    tm.add_argument("--cohort", required=True)
    tm.add_argument("--folds", required=True)
    tm.add_argument("--out-dir", required=True)
    tm.add_argument("--l2", type=float, default=1.0)
    tm.set_defaults(func=_cmd_train_mtlr)

    ev = sub.add_parser("eval", help="evaluation")
    ev_sub = ev.add_subparsers(dest="subcommand", required=True)
    sw = ev_sub.add_parser("sweep", help="metrics across follow-up time")
    sw.add_argument("--cohort", required=True)
    sw.add_argument("--folds", required=True)
    sw.add_argument("--grud-dir", required=True)
    sw.add_argument("--aft-dir", default=None)
    sw.add_argument("--mtlr-dir", default=None)
    sw.add_argument("--out", required=True)
    sw.add_argument("--horizons", default="1,3,5")
    sw.add_argument("--metrics", default=",".join(SWEEP_METRICS))
    sw.add_argument("--subset", default="holdout")
    sw.add_argument("--step-stride", type=int, default=1)
    sw.set_defaults(func=_cmd_eval_sweep)

    ex = sub.add_parser("explain", help="explainability reports")
    ex_sub = ex.add_subparsers(dest="subcommand", required=True)
    imp = ex_sub.add_parser("importance", help="permutation feature importance")
    imp.add_argument("--cohort", required=True)
    imp.add_argument("--folds", required=True)
    imp.add_argument("--grud-dir", required=True)
    imp.add_argument("--feature", required=True)
    imp.add_argument("--out", required=True)
    imp.add_argument("--seed", type=int, required=True)
    imp.add_argument("--n-perm", type=int, default=5)
    imp.add_argument("--horizons", default="1,3,5")
    imp.add_argument("--steps", default=None, help="comma-separated step indices")
    imp.add_argument("--step-stride", type=int, default=10)
    imp.set_defaults(func=_cmd_explain_importance)
    pdp = ex_sub.add_parser("pdp", help="partial dependence on PMST")
    pdp.add_argument("--cohort", required=True)
    pdp.add_argument("--folds", required=True)
    pdp.add_argument("--grud-dir", required=True)
    pdp.add_argument("--feature", required=True)
    pdp.add_argument("--out", required=True)
    pdp.add_argument("--followup-days", default="-730,-365,0,365,730,1095,1460")
    pdp.set_defaults(func=_cmd_explain_pdp)

    pr = sub.add_parser("predict", help="prediction")
    pr_sub = pr.add_subparsers(dest="subcommand", required=True)
    st = pr_sub.add_parser("stream", help="line-by-line streaming predictions")
    st.add_argument("--checkpoint", required=True)
    st.add_argument("--horizons", default="1,3,5")
    st.set_defaults(func=_cmd_predict_stream)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
