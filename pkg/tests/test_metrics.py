"""Evaluation metrics against independent brute-force oracles."""

import math

import numpy as np
import pytest

from ttekit.errors import DataValidationError
from ttekit.metrics import (
    DiscreteCurveSource,
    EvalReport,
    KaplanMeier,
    ModelGroup,
    StaticWeibullSource,
    WeibullTraceSource,
    brier,
    c_tau,
    chi2_sf,
    harrell_c,
    horizon_auroc,
    hosmer_lemeshow,
    kaplan_meier,
    l1_losses,
    parkes_serious_error,
    time_sweep,
)
from ttekit.weibull import WeibullParams, median, survival


# -- independent oracles (literal loops, own KM) ----------------------------


def km_oracle(times, events, t):
    """Hand product-limit: walk unique times, events drop the curve."""
    s = 1.0
    for u in sorted(set(times)):
        if u > t:
            break
        d = sum(1 for ti, ei in zip(times, events) if ti == u and ei)
        n = sum(1 for ti in times if ti >= u)
        if d:
            s *= 1.0 - d / n
    return s


def km_oracle_left(times, events, t):
    s = 1.0
    for u in sorted(set(times)):
        if u >= t:
            break
        d = sum(1 for ti, ei in zip(times, events) if ti == u and ei)
        n = sum(1 for ti in times if ti >= u)
        if d:
            s *= 1.0 - d / n
    return s


def cindex_oracle(scores, times, events):
    conc = ties = comp = 0
    n = len(times)
    for i in range(n):
        for j in range(n):
            if times[i] < times[j] and events[i]:
                comp += 1
                if scores[i] < scores[j]:
                    conc += 1
                elif scores[i] == scores[j]:
                    ties += 1
    return (conc + 0.5 * ties) / comp, comp


def auroc_oracle(event_probs, times, events, tau_star):
    pos = [p for p, t, e in zip(event_probs, times, events) if e and t <= tau_star]
    neg = [p for p, t, e in zip(event_probs, times, events) if t > tau_star]
    wins = ties = 0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1
            elif a == b:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def brier_oracle(surv_probs, times, events, tau_star):
    total = 0.0
    kept = 0
    for s, t, d in zip(surv_probs, times, events):
        if d and t <= tau_star:
            g = km_oracle_left(times, [not e for e in events], t)
            total += s * s / g
            kept += 1
        elif t > tau_star:
            g = km_oracle(times, [not e for e in events], tau_star)
            total += (1.0 - s) ** 2 / g
            kept += 1
        else:
            kept += 1
    return total / kept


def _random_cohort(rng, n=200, censor_frac=0.4):
    times = rng.uniform(0.1, 8.0, n)
    events = rng.random(n) > censor_frac
    scores = rng.normal(0.0, 1.0, n)
    return scores, times, events


class TestKaplanMeier:
    def test_all_events(self):
        km = kaplan_meier([1.0, 2.0, 3.0], [True, True, True])
        assert km.at(0.5) == 1.0
        assert km.at(1.0) == pytest.approx(2 / 3)
        assert km.at(2.5) == pytest.approx(1 / 3)
        assert km.at(3.0) == 0.0

    def test_mixed_censoring(self):
        km = kaplan_meier([1.0, 2.0, 3.0], [True, False, True])
        assert km.at(1.0) == pytest.approx(2 / 3)
        assert km.at(2.9) == pytest.approx(2 / 3)
        assert km.at(3.0) == pytest.approx(0.0)

    def test_all_censored_flat(self):
        km = kaplan_meier([1.0, 2.0, 3.0], [False, False, False])
        for t in (0.5, 1.5, 10.0):
            assert km.at(t) == 1.0

    def test_tie_convention_events_first(self):
        # event and censor at the same time: both sit in the risk set
        km = kaplan_meier([1.0, 1.0, 2.0], [True, False, True])
        assert km.at(1.0) == pytest.approx(1.0 - 1.0 / 3.0)

    def test_matches_oracle_random(self, rng):
        for _ in range(20):
            _, times, events = _random_cohort(rng, 80)
            km = kaplan_meier(times, events)
            for t in rng.uniform(0.0, 9.0, 10):
                assert km.at(t) == pytest.approx(km_oracle(times, events, t), abs=1e-12)
                assert km.before(t) == pytest.approx(km_oracle_left(times, events, t), abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DataValidationError):
            kaplan_meier([], [])


class TestHarrellC:
    def test_perfect_ranking(self):
        c, n = harrell_c([1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [True, True, True])
        assert c == 1.0 and n == 3

    def test_all_ties(self):
        c, _ = harrell_c([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], [True, True, True])
        assert c == 0.5

    def test_matches_oracle_exactly(self, rng):
        for seed in range(20):
            local = np.random.default_rng(seed)
            scores, times, events = _random_cohort(local)
            mine, n_mine = harrell_c(scores, times, events)
            oracle, n_oracle = cindex_oracle(scores, times, events)
            assert mine == oracle
            assert n_mine == n_oracle

    def test_antisymmetric_without_ties(self, rng):
        scores, times, events = _random_cohort(rng, 120)
        c_pos, _ = harrell_c(scores, times, events)
        c_neg, _ = harrell_c(-scores, times, events)
        assert c_pos + c_neg == pytest.approx(1.0, abs=1e-12)

    def test_reordering_invariance(self, rng):
        scores, times, events = _random_cohort(rng, 90)
        perm = rng.permutation(90)
        a, _ = harrell_c(scores, times, events)
        b, _ = harrell_c(scores[perm], times[perm], events[perm])
        assert a == pytest.approx(b, abs=1e-15)

    def test_monotone_transform_invariance(self, rng):
        scores, times, events = _random_cohort(rng, 90)
        a, _ = harrell_c(scores, times, events)
        b, _ = harrell_c(np.exp(scores), times, events)
        assert a == b

    def test_no_comparable_pairs_rejected(self):
        with pytest.raises(DataValidationError):
            harrell_c([1.0, 2.0], [1.0, 2.0], [False, False])


class TestCTau:
    def test_beyond_last_event_is_plain_c(self, rng):
        scores, times, events = _random_cohort(rng, 100)
        plain = harrell_c(scores, times, events)
        capped = c_tau(scores, times, events, times.max() + 1.0)
        assert plain == capped
        inf_capped = c_tau(scores, times, events, math.inf)
        assert plain == inf_capped

    def test_below_first_event_rejected(self, rng):
        scores, times, events = _random_cohort(rng, 50)
        with pytest.raises(DataValidationError):
            c_tau(scores, times, events, times.min() / 2.0)

    def test_matches_transformed_oracle(self, rng):
        for seed in range(10):
            local = np.random.default_rng(seed + 100)
            scores, times, events = _random_cohort(local)
            tau = 3.0
            capped_t = np.minimum(times, tau)
            capped_e = events & (times <= tau)
            oracle, _ = cindex_oracle(scores, capped_t, capped_e)
            mine, _ = c_tau(scores, times, events, tau)
            assert mine == oracle


class TestHorizonAuroc:
    def test_perfect_separation(self):
        probs = [0.9, 0.8, 0.1, 0.2]
        times = [0.5, 1.0, 4.0, 5.0]
        events = [True, True, False, False]
        auc, _ = horizon_auroc(probs, times, events, 2.0)
        assert auc == 1.0

    def test_constant_probabilities(self):
        auc, _ = horizon_auroc([0.5] * 6, [1, 1, 1, 5, 5, 5], [True] * 6, 2.0)
        assert auc == 0.5

    def test_censored_before_horizon_excluded(self):
        probs = [0.9, 0.7, 0.1]
        times = [1.0, 1.5, 4.0]
        events = [True, False, False]
        auc, n_used = horizon_auroc(probs, times, events, 2.0)
        assert n_used == 2  # the patient censored at 1.5 is dropped

    def test_matches_oracle(self, rng):
        for seed in range(20):
            local = np.random.default_rng(seed + 300)
            scores, times, events = _random_cohort(local, n=500)
            probs = 1.0 / (1.0 + np.exp(-scores))
            mine, _ = horizon_auroc(probs, times, events, 3.0)
            oracle = auroc_oracle(probs.tolist(), times.tolist(), events.tolist(), 3.0)
            assert mine == oracle

    def test_single_class_rejected(self):
        with pytest.raises(DataValidationError, match="positive"):
            horizon_auroc([0.5, 0.4], [5.0, 6.0], [False, False], 2.0)
        with pytest.raises(DataValidationError, match="negative"):
            horizon_auroc([0.5, 0.4], [0.5, 0.6], [True, True], 2.0)


class TestL1Losses:
    def test_perfect_predictions(self):
        out = l1_losses([1.0, 2.0], [1.0, 2.0], [True, True])
        assert out.uncensored.mean_abs == 0.0
        assert out.uncensored.mean_over is None
        assert out.uncensored.mean_under is None

    def test_uniform_overestimate(self):
        out = l1_losses([2.0, 3.0], [1.0, 2.0], [True, True])
        assert out.uncensored.mean_abs == 1.0
        assert out.uncensored.mean_over == 1.0
        assert out.uncensored.mean_under is None

    def test_margin_against_best_guess(self):
        out = l1_losses(
            [2.0, 3.0], [1.0, 2.0], [False, False], bg_totals=[4.0, 3.5]
        )
        assert out.uncensored is None
        assert out.margin_mean == pytest.approx((2.0 + 0.5) / 2.0)

    def test_matches_direct_averaging(self, rng):
        pmst = rng.uniform(0.1, 6.0, 150)
        times = rng.uniform(0.1, 6.0, 150)
        events = rng.random(150) > 0.4
        out = l1_losses(pmst, times, events)
        diffs = [p - t for p, t, e in zip(pmst, times, events) if e]
        assert out.uncensored.mean_abs == pytest.approx(np.mean(np.abs(diffs)), abs=1e-12)
        assert out.uncensored.median_abs == pytest.approx(np.median(np.abs(diffs)), abs=1e-12)
        over = [d for d in diffs if d > 0]
        under = [-d for d in diffs if d < 0]
        assert out.uncensored.mean_over == pytest.approx(np.mean(over), abs=1e-12)
        assert out.uncensored.mean_under == pytest.approx(np.mean(under), abs=1e-12)


class TestHosmerLemeshow:
    def test_zero_when_predictions_match_km(self):
        # two bins of five; set every prediction to the bin's observed rate
        times = [0.5, 0.6, 0.7, 3.0, 4.0, 0.4, 2.0, 3.5, 4.5, 5.0]
        events = [True] * 10
        tau = 2.5
        lo = [1.0 - km_oracle(times[:5], events[:5], tau)] * 5
        hi = [1.0 - km_oracle(times[5:], events[5:], tau)] * 5
        # order: ascending survival probability puts the low-survival bin first
        surv = [1.0 - p for p in lo] + [1.0 - p for p in hi]
        out = hosmer_lemeshow(surv, times, events, tau, n_bins=2)
        assert out.statistic == pytest.approx(0.0, abs=1e-18)

    def test_hand_computed_two_bins(self):
        # 20 patients, constant prediction 0.3 event probability;
        # bin KM observed: first ten all events by tau, last ten none
        times = [0.5] * 10 + [5.0] * 10
        events = [True] * 20
        surv = [0.7] * 20
        tau = 1.0
        out = hosmer_lemeshow(surv, times, events, tau, n_bins=2)
        # stable sort keeps input order: bin1 all events (KM=0), bin2 none
        t1 = (10 * (1 - 0.0) - 10 * 0.3) ** 2 / (10 * 0.3 * 0.7)
        t2 = (10 * (1 - 1.0) - 10 * 0.3) ** 2 / (10 * 0.3 * 0.7)
        assert out.statistic == pytest.approx(t1 + t2, rel=1e-12)

    def test_doubling_population_doubles_statistic(self):
        times = [0.5] * 10 + [5.0] * 10
        events = [True] * 20
        surv = [0.7] * 20
        one = hosmer_lemeshow(surv, times, events, 1.0, n_bins=2).statistic
        # duplicate each bin contiguously so the stable sort doubles both
        times2 = [0.5] * 20 + [5.0] * 20
        two = hosmer_lemeshow(surv * 2, times2, events * 2, 1.0, n_bins=2).statistic
        assert two == pytest.approx(2.0 * one, rel=1e-12)

    def test_degenerate_bin_clamped(self):
        times = [0.5] * 10 + [5.0] * 10
        events = [True] * 20
        surv = [1.0] * 10 + [0.0] * 10  # p_bar of 0 and 1
        out = hosmer_lemeshow(surv, times, events, 1.0, n_bins=2)
        assert out.clamped_bins == 2
        assert math.isfinite(out.statistic)

    def test_remainder_spread_to_leading_bins(self):
        rng = np.random.default_rng(0)
        n = 23
        out = hosmer_lemeshow(
            rng.random(n), rng.uniform(0.5, 5, n), rng.random(n) > 0.3, 2.0, n_bins=10
        )
        sizes = [b["n"] for b in out.bins]
        assert sizes == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]

    def test_population_below_bins_rejected(self):
        with pytest.raises(DataValidationError):
            hosmer_lemeshow([0.5] * 5, [1.0] * 5, [True] * 5, 1.0, n_bins=10)

    def test_chi2_reference(self):
        # chi-square survival at df=8 against scipy
        from scipy.stats import chi2

        for x in (0.5, 3.0, 10.0, 25.0):
            assert chi2_sf(x, 8) == pytest.approx(chi2.sf(x, 8), rel=1e-10)


class TestBrier:
    def test_perfect_no_censoring(self):
        times = [0.5, 0.7, 4.0, 5.0]
        events = [True, True, True, True]
        surv = [0.0, 0.0, 1.0, 1.0]
        score, dropped = brier(surv, times, events, 2.0)
        assert score == 0.0 and dropped == 0

    def test_constant_half_no_censoring(self):
        times = [0.5, 0.7, 4.0, 5.0]
        events = [True] * 4
        score, _ = brier([0.5] * 4, times, events, 2.0)
        assert score == 0.25

    def test_censored_before_horizon_contributes_zero(self):
        times = [1.0, 4.0]
        events = [False, True]
        score, _ = brier([0.2, 0.9], times, events, 2.0)
        oracle = brier_oracle([0.2, 0.9], times, events, 2.0)
        assert score == pytest.approx(oracle, rel=1e-12)

    def test_matches_literal_oracle(self, rng):
        for seed in range(20):
            local = np.random.default_rng(seed + 900)
            n = 200
            times = local.uniform(0.1, 8.0, n)
            events = local.random(n) > 0.3
            surv = local.random(n)
            mine, _ = brier(surv, times, events, 3.0)
            oracle = brier_oracle(surv.tolist(), times.tolist(), events.tolist(), 3.0)
            assert mine == pytest.approx(oracle, rel=1e-12)

    def test_uncensored_reduces_to_mse(self, rng):
        n = 100
        times = rng.uniform(0.1, 8.0, n)
        events = np.ones(n, dtype=bool)
        surv = rng.random(n)
        mine, _ = brier(surv, times, events, 3.0)
        indicator = (times <= 3.0).astype(float)
        mse = float(np.mean((indicator - (1.0 - surv)) ** 2))
        assert mine == pytest.approx(mse, rel=1e-12)


class TestParkes:
    def test_definition(self):
        assert parkes_serious_error([1.0], [2.5]) == 1.0
        assert parkes_serious_error([1.0], [2.0]) == 0.0  # strict boundary
        assert parkes_serious_error([1.0], [0.5]) == 0.0
        assert parkes_serious_error([1.0], [0.49]) == 1.0

    def test_perfect_predictor(self, rng):
        times = rng.uniform(0.5, 5.0, 50)
        assert parkes_serious_error(times, times) == 0.0


class TestTimeSweep:
    def _cohort(self, rng, n=60):
        followups = rng.integers(50, 1800, n).astype(float)
        events = rng.random(n) > 0.4
        return followups, events

    def _boundaries(self):
        return [-60, -30, 0, 30, 60, 90]

    def test_report_shape(self, rng):
        followups, events = self._cohort(rng)
        n = len(followups)
        kappas = np.full((n, 6), 1.5)
        lambdas = rng.uniform(0.5, 5.0, (n, 6))
        group = ModelGroup("m", [WeibullTraceSource(kappas, lambdas)])
        report = time_sweep(
            [group], followups, events, self._boundaries(), horizons=[1.0, 3.0],
            metrics=["c_index", "brier"],
        )
        assert len(report.rows) == 6 * 2 * 2

    def test_single_member_zero_width_interval(self, rng):
        followups, events = self._cohort(rng)
        n = len(followups)
        src = WeibullTraceSource(np.full((n, 6), 1.5), rng.uniform(0.5, 5.0, (n, 6)))
        report = time_sweep(
            [ModelGroup("m", [src])], followups, events, self._boundaries(),
            horizons=[1.0], metrics=["c_index"],
        )
        for row in report.rows:
            if row.value is not None:
                assert row.ci_low == row.value == row.ci_high

    def test_oracle_scores_near_perfect(self, rng):
        # deterministic event times equal to the per-patient scale: the
        # true-scale model ranks every risk set perfectly
        n = 300
        lam = rng.uniform(0.5, 8.0, n)
        followups = np.minimum(lam * 365.25, 1800.0)
        events = np.ones(n, dtype=bool)
        # a moderate shape keeps S(h) strictly monotone in lambda (no
        # float saturation at 1.0, hence no tied scores)
        kappas = np.full((n, 6), 2.0)
        lambdas = np.tile(lam[:, None], (1, 6))
        group = ModelGroup("oracle", [WeibullTraceSource(kappas, lambdas)])
        report = time_sweep(
            [group], followups, events, self._boundaries(), horizons=[3.0],
            metrics=["c_index"],
        )
        assert any(row.value is not None for row in report.rows)
        for row in report.rows:
            if row.value is not None:
                assert row.value > 0.99

    def test_static_group_only_at_index(self, rng):
        followups, events = self._cohort(rng)
        n = len(followups)
        params = [WeibullParams(1.5, float(l)) for l in rng.uniform(1.0, 5.0, n)]
        group = ModelGroup("aft", [StaticWeibullSource(params)], static=True)
        report = time_sweep(
            [group], followups, events, self._boundaries(), horizons=[1.0],
            metrics=["c_index"],
        )
        days = {row.timestep_day for row in report.rows}
        assert days == {0}

    def test_empty_risk_set_marker(self, rng):
        followups = np.array([10.0, 20.0, 30.0])
        events = np.array([True, True, True])
        src = WeibullTraceSource(np.full((3, 6), 1.5), np.full((3, 6), 2.0))
        report = time_sweep(
            [ModelGroup("m", [src])], followups, events, self._boundaries(),
            horizons=[1.0], metrics=["c_index"],
        )
        late = [r for r in report.rows if r.timestep_day >= 30]
        assert late and all(r.value is None for r in late)

    def test_discrete_curve_source(self):
        curves = np.array([[0.9, 0.8, 0.7, 0.6, 0.5], [0.5, 0.4, 0.3, 0.2, 0.1]])
        src = DiscreteCurveSource(curves, np.arange(1.0, 6.0), np.array([5.0, 1.0]))
        assert src.survival_at(0, 0, 3.0) == pytest.approx(0.7)
        assert src.survival_at(0, 0, 1.5) == pytest.approx(0.85)
        assert src.survival_at(1, 0, 7.0) == pytest.approx(0.1)
        assert src.pmst(0, 0) == 5.0

    def test_csv_roundtrippable_shape(self, rng, tmp_path):
        followups, events = self._cohort(rng)
        n = len(followups)
        src = WeibullTraceSource(np.full((n, 6), 1.5), rng.uniform(0.5, 5.0, (n, 6)))
        report = time_sweep(
            [ModelGroup("m", [src])], followups, events, self._boundaries(),
            horizons=[1.0], metrics=["c_index", "l1", "parkes"],
        )
        path = tmp_path / "report.csv"
        report.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("timestep_day,horizon_years,metric")
        assert len(lines) == 1 + len(report.rows)


class TestWeibullTraceSource:
    def test_matches_scalar_functions(self, rng):
        kappas = rng.uniform(0.5, 4.0, (5, 3))
        lambdas = rng.uniform(0.5, 6.0, (5, 3))
        src = WeibullTraceSource(kappas, lambdas)
        p = WeibullParams(float(kappas[2, 1]), float(lambdas[2, 1]))
        assert src.survival_at(2, 1, 2.5) == pytest.approx(survival(p, 2.5), rel=1e-15)
        assert src.pmst(2, 1) == pytest.approx(median(p), rel=1e-15)
