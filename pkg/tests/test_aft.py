"""Accelerated failure time: likelihood identities, Newton fit, recovery."""

import math

import numpy as np
import pytest

from ttekit.aft import AftModel, aft_fit, aft_loglik, aft_predict, coefficient_table
from ttekit.errors import DataValidationError, NumericalFailure
from ttekit.weibull import WeibullParams, median, pdf, survival


def _gumbel_min(rng, size):
    # eps with density exp(eps) exp(-exp(eps))
    return np.log(-np.log(rng.random(size)))


def _simulate(rng, n, beta, sigma, censor_scale=None):
    p = len(beta) - 1
    x = rng.normal(0.0, 1.0, (n, p))
    log_tau = beta[0] + x @ beta[1:] + sigma * _gumbel_min(rng, n)
    tau = np.exp(log_tau)
    if censor_scale is None:
        return x, tau, np.ones(n, dtype=bool)
    c = censor_scale * rng.random(n)
    events = tau <= c
    return x, np.minimum(tau, c), events


def _weibull_form_loglik(beta, sigma, x, tau, events):
    # independent route through the Weibull density and survival
    xd = np.hstack([np.ones((x.shape[0], 1)), x])
    total = 0.0
    for xi, t, d in zip(xd, tau, events):
        p = WeibullParams(kappa=1.0 / sigma, lambda_=math.exp(float(xi @ beta)))
        total += math.log(pdf(p, t)) if d else math.log(survival(p, t))
    return total


class TestLoglik:
    def test_exponential_unit_point(self):
        # intercept-only, sigma 1, one uncensored tau = 1 at beta0 = 0
        ll = aft_loglik(np.array([0.0]), 1.0, np.zeros((1, 0)), np.array([1.0]), np.array([True]))
        assert ll == pytest.approx(-1.0, abs=1e-12)

    def test_censored_at_scale(self):
        # one censored observation at tau = lambda contributes -1
        ll = aft_loglik(
            np.array([math.log(2.5)]), 1.0, np.zeros((1, 0)), np.array([2.5]), np.array([False])
        )
        assert ll == pytest.approx(-1.0, abs=1e-12)

    def test_matches_weibull_route(self):
        rng = np.random.default_rng(5)
        x, tau, events = _simulate(rng, 40, np.array([0.4, 0.5, -0.3]), 0.7, censor_scale=4.0)
        beta = np.array([0.3, 0.4, -0.2])
        sigma = 0.8
        mine = aft_loglik(beta, sigma, x, tau, events)
        other = _weibull_form_loglik(beta, sigma, x, tau, events)
        assert mine == pytest.approx(other, rel=1e-12)

    def test_rejects_nonpositive_times(self):
        with pytest.raises(DataValidationError):
            aft_loglik(np.array([0.0]), 1.0, np.zeros((1, 0)), np.array([0.0]), np.array([True]))

    def test_gradient_matches_fd(self):
        from ttekit.aft import _design, _grad_hess

        rng = np.random.default_rng(17)
        x, tau, events = _simulate(rng, 60, np.array([0.2, 0.5]), 0.6, censor_scale=3.0)
        xd = _design(x)
        log_tau = np.log(tau)
        for _ in range(20):
            psi = np.concatenate([rng.normal(0, 0.5, 2), rng.normal(0, 0.3, 1)])
            _, grad, _ = _grad_hess(psi, xd, log_tau, events, None)
            step = 1e-6
            for j in range(len(psi)):
                up = psi.copy(); up[j] += step
                dn = psi.copy(); dn[j] -= step
                ll_up, _, _ = _grad_hess(up, xd, log_tau, events, None)
                ll_dn, _, _ = _grad_hess(dn, xd, log_tau, events, None)
                fd = (ll_up - ll_dn) / (2 * step)
                assert grad[j] == pytest.approx(fd, rel=1e-6, abs=1e-8), j

    def test_hessian_matches_fd_of_gradient(self):
        from ttekit.aft import _design, _grad_hess

        rng = np.random.default_rng(23)
        x, tau, events = _simulate(rng, 50, np.array([0.1, -0.4]), 0.9, censor_scale=3.0)
        xd = _design(x)
        log_tau = np.log(tau)
        psi = np.array([0.2, -0.1, 0.05])
        _, _, hess = _grad_hess(psi, xd, log_tau, events, None)
        step = 1e-6
        for j in range(len(psi)):
            up = psi.copy(); up[j] += step
            dn = psi.copy(); dn[j] -= step
            _, g_up, _ = _grad_hess(up, xd, log_tau, events, None)
            _, g_dn, _ = _grad_hess(dn, xd, log_tau, events, None)
            fd_col = (g_up - g_dn) / (2 * step)
            np.testing.assert_allclose(hess[:, j], fd_col, rtol=1e-5, atol=1e-6)


class TestFit:
    def test_exponential_closed_form(self):
        # sigma fixed at 1, intercept only: exp(beta0) is the sample mean
        rng = np.random.default_rng(2)
        tau = rng.exponential(3.0, 500)
        model = aft_fit(np.zeros((500, 0)), tau, np.ones(500, dtype=bool), fix_sigma=1.0)
        assert math.exp(model.beta[0]) == pytest.approx(tau.mean(), rel=1e-8)
        assert model.sigma == 1.0

    def test_parameter_recovery(self):
        rng = np.random.default_rng(31)
        beta = np.array([1.0, 0.5, -0.3])
        x, tau, events = _simulate(rng, 5000, beta, 0.7, censor_scale=9.0)
        assert 0.25 < 1 - events.mean() < 0.36
        model = aft_fit(x, tau, events, feature_names=["f1", "f2"])
        np.testing.assert_allclose(model.beta, beta, atol=0.05)
        assert model.sigma == pytest.approx(0.7, abs=0.05)

    def test_duplicated_rows_scale_standard_errors(self):
        rng = np.random.default_rng(7)
        x, tau, events = _simulate(rng, 400, np.array([0.5, 0.4]), 0.8)
        m1 = aft_fit(x, tau, events)
        m2 = aft_fit(np.vstack([x, x]), np.concatenate([tau, tau]), np.concatenate([events, events]))
        np.testing.assert_allclose(m2.beta, m1.beta, atol=1e-6)
        np.testing.assert_allclose(m2.std_errors, m1.std_errors / math.sqrt(2.0), rtol=1e-4)

    def test_line_search_never_decreases_loglik(self):
        from ttekit.aft import _design, _grad_hess

        rng = np.random.default_rng(11)
        x, tau, events = _simulate(rng, 300, np.array([0.3, 0.6]), 0.5, censor_scale=4.0)
        # replicate the Newton loop and watch the objective
        xd = _design(x)
        log_tau = np.log(tau)
        psi = np.zeros(3)
        psi[0] = float(log_tau.mean())
        ll_prev = -np.inf
        for _ in range(60):
            ll, grad, hess = _grad_hess(psi, xd, log_tau, events, None)
            assert ll >= ll_prev - 1e-9
            ll_prev = ll
            if np.max(np.abs(grad)) < 1e-8:
                break
            direction = np.linalg.solve(-hess, grad)
            step = 1.0
            while True:
                ll_new, _, _ = _grad_hess(psi + step * direction, xd, log_tau, events, None)
                if ll_new >= ll + 1e-4 * step * float(grad @ direction):
                    break
                step *= 0.5
            psi = psi + step * direction

    def test_constant_zero_column_rejected(self):
        x = np.zeros((20, 1))
        with pytest.raises(DataValidationError, match="constant-zero"):
            aft_fit(x, np.ones(20), np.ones(20, dtype=bool))

    def test_nonconvergence_reports_gradient(self):
        rng = np.random.default_rng(3)
        x, tau, events = _simulate(rng, 100, np.array([0.5, 0.2]), 0.7)
        with pytest.raises(NumericalFailure, match="gradient"):
            aft_fit(x, tau, events, max_iter=1)


class TestPredict:
    def _model(self):
        rng = np.random.default_rng(13)
        x, tau, events = _simulate(rng, 800, np.array([0.8, 0.5, 0.0]), 0.6)
        return aft_fit(x, tau, events, feature_names=["a", "b"])

    def test_zero_vector_gives_intercept_scale(self):
        model = self._model()
        p = aft_predict(model, np.zeros(2))
        assert p.lambda_ == pytest.approx(math.exp(model.beta[0]), rel=1e-12)

    def test_null_feature_irrelevant(self):
        model = self._model()
        model.beta[2] = 0.0
        p1 = aft_predict(model, np.array([0.5, 1.0]))
        p2 = aft_predict(model, np.array([0.5, -4.0]))
        assert p1 == p2

    def test_shared_shape_across_patients(self):
        model = self._model()
        rng = np.random.default_rng(0)
        kappas = {aft_predict(model, rng.normal(0, 1, 2)).kappa for _ in range(20)}
        assert len(kappas) == 1

    def test_median_closed_form(self):
        model = self._model()
        x = np.array([0.3, -0.2])
        p = aft_predict(model, x)
        expected = math.exp(model.beta[0] + x @ model.beta[1:]) * math.log(2.0) ** model.sigma
        assert median(p) == pytest.approx(expected, rel=1e-12)

    def test_coefficient_table(self, tmp_path):
        model = self._model()
        path = tmp_path / "coef.csv"
        coefficient_table(model, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "feature,coefficient,std_error,p_value"
        assert len(lines) == 4  # intercept + 2 features

    def test_roundtrip_dict(self):
        model = self._model()
        clone = AftModel.from_dict(model.to_dict())
        np.testing.assert_array_equal(clone.beta, model.beta)
        assert clone.sigma == model.sigma
