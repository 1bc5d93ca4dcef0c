"""Weibull accelerated-failure-time baseline.

The model is ln(tau) = x'beta + sigma * eps with eps following the extreme
value density f(eps) = exp(eps) exp(-exp(eps)), which makes the survival
time Weibull with scale exp(x'beta) and a shape 1/sigma shared by every
patient.  With z = (ln tau - x'beta)/sigma and u = e^z the censored
log-likelihood is

    uncensored:  -ln sigma - ln tau + z - u
    censored:    -u

Both the gradient and the observed information are analytic; the fit is a
damped Newton ascent over (beta, ln sigma) with an Armijo line search, and
standard errors come from the inverse observed information at the optimum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from ttekit.errors import DataValidationError, NumericalFailure
from ttekit.weibull import WeibullParams

_ARMIJO = 1e-4


@dataclass
class AftModel:
    feature_names: list[str]        # without the intercept
    beta: np.ndarray                # (p+1,), intercept first
    sigma: float
    std_errors: np.ndarray          # (p+1,) or (p+2,) incl. ln sigma when free
    p_values: np.ndarray            # (p+1,)
    loglik: float
    n_iter: int
    fixed_sigma: bool = False
    impute_means: np.ndarray | None = None  # training-fold fill values

    @property
    def kappa(self) -> float:
        return 1.0 / self.sigma

    def to_dict(self) -> dict:
        return {
            "feature_names": self.feature_names,
            "beta": [float(b) for b in self.beta],
            "sigma": self.sigma,
            "std_errors": [float(s) for s in self.std_errors],
            "p_values": [float(p) for p in self.p_values],
            "loglik": self.loglik,
            "n_iter": self.n_iter,
            "fixed_sigma": self.fixed_sigma,
            "impute_means": None
            if self.impute_means is None
            else [float(v) for v in self.impute_means],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AftModel":
        return cls(
            feature_names=list(d["feature_names"]),
            beta=np.asarray(d["beta"], dtype=float),
            sigma=float(d["sigma"]),
            std_errors=np.asarray(d["std_errors"], dtype=float),
            p_values=np.asarray(d["p_values"], dtype=float),
            loglik=float(d["loglik"]),
            n_iter=int(d["n_iter"]),
            fixed_sigma=bool(d["fixed_sigma"]),
            impute_means=None
            if d.get("impute_means") is None
            else np.asarray(d["impute_means"], dtype=float),
        )


def _design(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise DataValidationError("X must be a 2-D design matrix")
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _check_inputs(x: np.ndarray, tau: np.ndarray, events: np.ndarray) -> None:
    if np.any(tau <= 0.0):
        raise DataValidationError("survival times must be positive")
    if x.shape[0] != tau.shape[0] or tau.shape[0] != events.shape[0]:
        raise DataValidationError("X, tau, and events must have matching lengths")
    zero_cols = np.nonzero(~np.any(x != 0.0, axis=0))[0]
    if zero_cols.size:
        raise DataValidationError(f"constant-zero column(s) in X: {zero_cols.tolist()}")


def aft_loglik(
    beta: np.ndarray,
    sigma: float,
    x: np.ndarray,
    tau: np.ndarray,
    events: np.ndarray,
    add_intercept: bool = True,
) -> float:
    """Censored log-likelihood in the extreme-value formulation."""
    tau = np.asarray(tau, dtype=float)
    events = np.asarray(events, dtype=bool)
    xd = _design(x) if add_intercept else np.asarray(x, dtype=float)
    if np.any(tau <= 0.0):
        raise DataValidationError("survival times must be positive")
    z = (np.log(tau) - xd @ beta) / sigma
    with np.errstate(over="ignore"):
        u = np.exp(z)
    if not np.isfinite(u).all():
        return -math.inf
    ll = -u.sum()
    ll += float((z[events] - math.log(sigma) - np.log(tau[events])).sum())
    return float(ll)


def _grad_hess(
    psi: np.ndarray,
    xd: np.ndarray,
    log_tau: np.ndarray,
    events: np.ndarray,
    fix_sigma: float | None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """(loglik, gradient, Hessian) over (beta, ln sigma) or beta alone."""
    p = xd.shape[1]
    beta = psi[:p]
    sigma = fix_sigma if fix_sigma is not None else math.exp(psi[p])
    z = (log_tau - xd @ beta) / sigma
    with np.errstate(over="ignore"):
        u = np.exp(z)
    if not np.isfinite(u).all():
        return -math.inf, np.zeros_like(psi), np.eye(len(psi))
    n_unc = int(events.sum())
    ll = float(-u.sum() + z[events].sum()) - n_unc * math.log(sigma) - float(log_tau[events].sum())

    a = np.where(events, 1.0 - u, -u)       # d ell / d z
    b = -u                                  # d2 ell / d z2
    g_beta = -(xd * a[:, None]).sum(axis=0) / sigma
    h_bb = (xd * b[:, None]).T @ xd / (sigma * sigma)
    if fix_sigma is not None:
        return ll, g_beta, h_bb
    g_theta = float(-(a * z).sum() - n_unc)
    h_bt = (xd * (z * b + a)[:, None]).sum(axis=0) / sigma
    h_tt = float((z * a + z * z * b).sum())
    grad = np.concatenate([g_beta, [g_theta]])
    hess = np.zeros((p + 1, p + 1))
    hess[:p, :p] = h_bb
    hess[:p, p] = h_bt
    hess[p, :p] = h_bt
    hess[p, p] = h_tt
    return ll, grad, hess


def aft_fit(
    x: np.ndarray,
    tau: np.ndarray,
    events: np.ndarray,
    feature_names: list[str] | None = None,
    fix_sigma: float | None = None,
    max_iter: int = 200,
    tol: float = 1e-8,
) -> AftModel:
    """Damped Newton MLE over (beta, ln sigma).

    Converges when the gradient infinity-norm drops below ``tol``; raises
    on non-convergence or a singular observed information matrix.  Missing
    covariates must already be mean-imputed.
    """
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    events = np.asarray(events, dtype=bool)
    _check_inputs(x, tau, events)
    xd = _design(x)
    log_tau = np.log(tau)
    p = xd.shape[1]
    n_psi = p if fix_sigma is not None else p + 1
    psi = np.zeros(n_psi)
    psi[0] = float(log_tau.mean())

    ll, grad, hess = _grad_hess(psi, xd, log_tau, events, fix_sigma)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        if np.max(np.abs(grad)) < tol:
            break
        try:
            direction = np.linalg.solve(-hess, grad)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("singular observed information during Newton step") from exc
        slope = float(grad @ direction)
        if slope <= 0.0:
            direction = grad / (np.linalg.norm(grad) + 1.0)
            slope = float(grad @ direction)
        step = 1.0
        for _ in range(50):
            trial = psi + step * direction
            ll_new, grad_new, hess_new = _grad_hess(trial, xd, log_tau, events, fix_sigma)
            if ll_new >= ll + _ARMIJO * step * slope:
                break
            step *= 0.5
        else:
            raise NumericalFailure(
                f"line search stalled at iteration {n_iter} (grad norm {np.max(np.abs(grad)):.3g})"
            )
        psi, ll, grad, hess = trial, ll_new, grad_new, hess_new
    else:
        raise NumericalFailure(
            f"no convergence in {max_iter} iterations; final gradient norm "
            f"{np.max(np.abs(grad)):.3g}"
        )

    try:
        cov = np.linalg.inv(-hess)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure("singular observed information at the optimum") from exc
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    beta = psi[:p]
    sigma = fix_sigma if fix_sigma is not None else math.exp(psi[p])
    se_beta = se[:p]
    with np.errstate(divide="ignore", invalid="ignore"):
        zscores = np.where(se_beta > 0.0, beta / se_beta, np.inf)
    p_values = np.array([math.erfc(abs(z) / math.sqrt(2.0)) for z in zscores])
    if feature_names is None:
        feature_names = [f"x{i}" for i in range(x.shape[1])]
    return AftModel(
        feature_names=list(feature_names),
        beta=beta,
        sigma=float(sigma),
        std_errors=se,
        p_values=p_values,
        loglik=ll,
        n_iter=n_iter,
        fixed_sigma=fix_sigma is not None,
    )


def aft_predict(model: AftModel, x: np.ndarray) -> WeibullParams:
    """Per-patient Weibull: scale exp(x'beta), shape 1/sigma shared by all."""
    x = np.asarray(x, dtype=float)
    lam = math.exp(float(model.beta[0] + x @ model.beta[1:]))
    return WeibullParams(kappa=model.kappa, lambda_=lam)


def coefficient_table(model: AftModel, path) -> None:
    """Table-style CSV: feature,coefficient,std_error,p_value."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["feature", "coefficient", "std_error", "p_value"])
        names = ["intercept"] + list(model.feature_names)
        for i, name in enumerate(names):
            w.writerow(
                [
                    name,
                    repr(float(model.beta[i])),
                    repr(float(model.std_errors[i])),
                    repr(float(model.p_values[i])),
                ]
            )
