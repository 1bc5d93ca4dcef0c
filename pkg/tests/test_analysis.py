"""Permutation importance and partial dependence bookkeeping."""

import numpy as np
import pytest

from ttekit.analysis import (
    CheckpointContext,
    ImportanceRow,
    PdpRow,
    importance_csv,
    partial_dependence,
    pdp_csv,
    permutation_importance,
)
from ttekit.cohort.encoding import encode_cohort, stack_sequences
from ttekit.cohort.features import default_roster
from ttekit.cohort.grid import build_grid
from ttekit.cohort.synth import SyntheticConfig, generate_synthetic_cohort
from ttekit.errors import DataValidationError
from ttekit.training import TrainConfig, train_single

GRID = build_grid()
ROSTER = default_roster()


@pytest.fixture(scope="module")
def trained():
    cfg = SyntheticConfig(n_patients=60, censoring_target=0.0)
    records, _ = generate_synthetic_cohort(cfg, seed=20)
    records = [r for r in records if r.event_flag]
    tc = TrainConfig(epochs=2, batch_size=32, hidden=6, seed=5)
    model = train_single(records, tc)
    ctx = CheckpointContext(
        params=model.params,
        meta={
            "roster": ROSTER,
            "grid": GRID,
            "norms": model.norms,
            "train_config": tc.to_dict(),
        },
    )
    heldout, _ = generate_synthetic_cohort(SyntheticConfig(n_patients=40), seed=21)
    return ctx, heldout


INDEX_STEP = GRID.boundaries.index(0)


class TestPermutationImportance:
    def test_identity_permutation_is_exact_zero(self, trained):
        ctx, heldout = trained
        # n_perm with a single patient cohort: any permutation is identity
        rows = permutation_importance(
            [ctx], heldout[:1], "sbp", horizons=[3.0], n_perm=2, seed=0,
            step_indices=[INDEX_STEP],
        )
        # single patient: concordance undefined, rows carry no value
        assert all(r.delta_c_mean is None for r in rows)

    def test_permuted_rows_preserve_trajectory_multiset(self, trained):
        ctx, heldout = trained
        seqs = encode_cohort(heldout, GRID, ctx.meta["norms"], ROSTER)
        x, m, delta, _ = stack_sequences(seqs)
        f = [s.name for s in ROSTER].index("sbp")
        rng = np.random.default_rng(3)
        perm = rng.permutation(x.shape[0])
        xp = x[perm, f, :]
        original = {tuple(row) for row in x[:, f, :]}
        permuted = {tuple(row) for row in xp}
        assert original == permuted

    def test_replicate_count(self, trained):
        ctx, heldout = trained
        rows = permutation_importance(
            [ctx, ctx], heldout, "sbp", horizons=[3.0], n_perm=3, seed=0,
            step_indices=[INDEX_STEP],
        )
        assert rows[0].n_replicates == 6  # n_perm * k

    def test_unknown_feature_rejected(self, trained):
        ctx, heldout = trained
        with pytest.raises(DataValidationError):
            permutation_importance([ctx], heldout, "nope", horizons=[1.0])

    def test_deterministic_given_seed(self, trained):
        ctx, heldout = trained
        a = permutation_importance(
            [ctx], heldout, "egfr", horizons=[3.0], n_perm=2, seed=9,
            step_indices=[INDEX_STEP],
        )
        b = permutation_importance(
            [ctx], heldout, "egfr", horizons=[3.0], n_perm=2, seed=9,
            step_indices=[INDEX_STEP],
        )
        assert a == b

    def test_csv_writer(self, trained, tmp_path):
        rows = [ImportanceRow("sbp", 0, 3.0, 0.01, 0.0, 0.02, 25)]
        path = tmp_path / "imp.csv"
        importance_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "feature,timestep_day,horizon_years,delta_c_mean,ci_low,ci_high"
        assert len(lines) == 2


class TestPartialDependence:
    def test_zero_shift_identical_to_original(self, trained):
        ctx, heldout = trained
        rows = partial_dependence([ctx], heldout, "sbp", followup_days=[0])
        by_shift = {r.shift: r for r in rows}
        zero = by_shift["0.0"]
        # re-run untouched forward for the same day
        again = partial_dependence([ctx], heldout, "sbp", followup_days=[0])
        zero2 = {r.shift: r for r in again}["0.0"]
        assert zero.pmst_median == zero2.pmst_median
        # the zero shift must match a direct unshifted evaluation
        assert zero.pmst_median is not None

    def test_zscore_shift_grid(self, trained):
        ctx, heldout = trained
        rows = partial_dependence([ctx], heldout, "sbp", followup_days=[0])
        shifts = sorted({float(r.shift) for r in rows})
        assert shifts == [x * 0.5 for x in range(-4, 5)]

    def test_age_shift_grid(self, trained):
        ctx, heldout = trained
        rows = partial_dependence([ctx], heldout, "age", followup_days=[0])
        shifts = sorted({int(r.shift) for r in rows})
        assert shifts == list(range(-20, 25, 5))

    def test_binary_variants(self, trained):
        ctx, heldout = trained
        rows = partial_dependence([ctx], heldout, "chf", followup_days=[0])
        assert {r.shift for r in rows} == {"original", "zero", "yearly"}

    def test_raw_mean_tracks_shift(self, trained):
        ctx, heldout = trained
        rows = partial_dependence([ctx], heldout, "sbp", followup_days=[0])
        by_shift = {float(r.shift): r.raw_mean_after_shift for r in rows}
        sd = ctx.meta["norms"].sd["sbp"]
        assert by_shift[2.0] - by_shift[0.0] == pytest.approx(2.0 * sd, rel=1e-9)

    def test_other_features_untouched(self, trained):
        # shifting sbp must not move a dbp-only summary: compare forward
        # outputs with the dbp row zeroed out in both cases
        ctx, heldout = trained
        seqs = encode_cohort(heldout, GRID, ctx.meta["norms"], ROSTER)
        x, m, delta, _ = stack_sequences(seqs)
        f_sbp = [s.name for s in ROSTER].index("sbp")
        x2 = x.copy()
        x2[:, f_sbp, :] += 1.0
        others = [i for i in range(len(ROSTER)) if i != f_sbp]
        assert (x2[:, others, :] == x[:, others, :]).all()

    def test_csv_writer(self, tmp_path):
        rows = [PdpRow("sbp", "0.5", 140.0, 0, 2.5, 2.6)]
        path = tmp_path / "pdp.csv"
        pdp_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == (
            "feature,shift,raw_mean_after_shift,followup_day,pmst_median,pmst_mean"
        )
        assert len(lines) == 2

    def test_offgrid_followup_day_rejected(self, trained):
        ctx, heldout = trained
        with pytest.raises(DataValidationError):
            partial_dependence([ctx], heldout, "sbp", followup_days=[4000])
