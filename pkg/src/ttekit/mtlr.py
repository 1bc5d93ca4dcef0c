"""Multi-target logistic regression over yearly time points.

One coefficient vector per time point (default integer years 1..5).  A
patient whose event falls in interval j (intervals are (t_j, t_{j+1}] with
t_0 = 0 and the last one open-ended) has probability

    P(j | x) = exp(f(x, j)) / sum_k exp(f(x, k)),
    f(x, k)  = sum_{i > k} (theta_i . x + b_i)

over the m+1 monotone survival sequences.  Censored patients marginalize
over every interval from the one containing the censoring time onward
(that interval included).  The fit is gradient ascent with the same
adaptive-moment stepper used for network training, an L2 penalty on the
coefficients, and internal feature standardization so the penalty and the
step sizes are scale-free.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ttekit.errors import DataValidationError, NumericalFailure
from ttekit.optim import AmsGrad

DEFAULT_TIMES = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass
class MtlrModel:
    theta: np.ndarray          # (m, F) in standardized feature space
    bias: np.ndarray           # (m,)
    times: np.ndarray          # (m,) strictly increasing, years
    l2_strength: float
    feature_means: np.ndarray  # (F,)
    feature_sds: np.ndarray    # (F,)
    feature_names: list[str] = field(default_factory=list)
    n_iter: int = 0
    impute_means: np.ndarray | None = None  # training-fold fill values

    @property
    def m(self) -> int:
        return len(self.times)

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.feature_means) / self.feature_sds

    def to_json(self, path) -> None:
        payload = {
            "theta": self.theta.tolist(),
            "bias": self.bias.tolist(),
            "times": self.times.tolist(),
            "l2_strength": self.l2_strength,
            "feature_means": self.feature_means.tolist(),
            "feature_sds": self.feature_sds.tolist(),
            "feature_names": self.feature_names,
            "n_iter": self.n_iter,
            "impute_means": None
            if self.impute_means is None
            else self.impute_means.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def from_json(cls, path) -> "MtlrModel":
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
        return cls(
            theta=np.asarray(d["theta"], dtype=float),
            bias=np.asarray(d["bias"], dtype=float),
            times=np.asarray(d["times"], dtype=float),
            l2_strength=float(d["l2_strength"]),
            feature_means=np.asarray(d["feature_means"], dtype=float),
            feature_sds=np.asarray(d["feature_sds"], dtype=float),
            feature_names=list(d["feature_names"]),
            n_iter=int(d["n_iter"]),
            impute_means=None
            if d.get("impute_means") is None
            else np.asarray(d["impute_means"], dtype=float),
        )


def interval_index(times: np.ndarray, tau: float) -> int:
    """Index of the interval containing tau: #{t_k < tau}, in 0..m."""
    return int(np.searchsorted(times, tau, side="left"))


def _sequence_scores(theta: np.ndarray, bias: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """f(x, k) for k = 0..m as an (n, m+1) matrix; xs is standardized."""
    s = xs @ theta.T + bias          # (n, m)
    rev = np.cumsum(s[:, ::-1], axis=1)[:, ::-1]
    return np.hstack([rev, np.zeros((s.shape[0], 1))])


def _logsumexp(a: np.ndarray, axis: int = 1) -> np.ndarray:
    mx = a.max(axis=axis, keepdims=True)
    return (mx + np.log(np.exp(a - mx).sum(axis=axis, keepdims=True))).squeeze(axis)


def mtlr_sequence_logprob(model: MtlrModel, x: np.ndarray, j: int) -> float:
    """Log probability that the event lands in interval j of 0..m."""
    if not 0 <= j <= model.m:
        raise DataValidationError(f"interval index {j} outside 0..{model.m}")
    xs = model.standardize(np.asarray(x, dtype=float)[None, :])
    f = _sequence_scores(model.theta, model.bias, xs)
    return float(f[0, j] - _logsumexp(f)[0])


def mtlr_survival(model: MtlrModel, x: np.ndarray) -> np.ndarray:
    """Stepwise S(t_1)..S(t_m): tail mass over the later intervals."""
    xs = model.standardize(np.asarray(x, dtype=float)[None, :])
    f = _sequence_scores(model.theta, model.bias, xs)
    p = np.exp(f - _logsumexp(f)[:, None])[0]
    return np.cumsum(p[::-1])[::-1][1:]


def mtlr_point_estimates(model: MtlrModel, x: np.ndarray) -> dict[str, float]:
    """Mean survival (piecewise-linear, truncated at t_m) and PMST.

    The survival curve is taken linear through (0, 1), (t_1, S_1), ...,
    (t_m, S_m); the PMST is the interpolated crossing of S = 0.5, capped
    at t_m whenever the curve never reaches it.
    """
    s = mtlr_survival(model, x)
    times = np.concatenate([[0.0], model.times])
    vals = np.concatenate([[1.0], s])
    mean = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(times)))
    pmst = float(model.times[-1])
    for k in range(1, len(vals)):
        if vals[k] <= 0.5:
            pmst = float(
                times[k - 1]
                + (vals[k - 1] - 0.5) * (times[k] - times[k - 1]) / (vals[k - 1] - vals[k])
            )
            break
    return {"mean": mean, "pmst": pmst}


def _loglik_and_grad(
    theta: np.ndarray,
    bias: np.ndarray,
    xs: np.ndarray,
    intervals: np.ndarray,
    censored: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean penalized log-likelihood and its gradient.

    Per patient the allowed-interval posterior is compared with the model
    distribution; the gradient in each coordinate is a difference of the
    two cumulative distributions over intervals.
    """
    n, m_plus = xs.shape[0], theta.shape[0] + 1
    f = _sequence_scores(theta, bias, xs)
    log_z = _logsumexp(f)
    p = np.exp(f - log_z[:, None])

    allowed = np.zeros((n, m_plus), dtype=bool)
    rows = np.arange(n)
    allowed[rows, intervals] = True
    cens_rows = np.nonzero(censored)[0]
    for i in cens_rows:
        allowed[i, intervals[i]:] = True

    masked = np.where(allowed, f, -np.inf)
    log_num = _logsumexp(masked)
    ll = float((log_num - log_z).mean()) - (l2 / n) * float(np.sum(theta * theta))

    p_tilde = np.where(allowed, np.exp(masked - log_num[:, None]), 0.0)
    q = np.cumsum(p_tilde - p, axis=1)[:, :-1]     # (n, m)
    grad_theta = q.T @ xs / n - 2.0 * (l2 / n) * theta
    grad_bias = q.sum(axis=0) / n
    return ll, grad_theta, grad_bias


def mtlr_fit(
    x: np.ndarray,
    tau: np.ndarray,
    events: np.ndarray,
    l2_strength: float = 1.0,
    times: np.ndarray | None = None,
    feature_names: list[str] | None = None,
    learning_rate: float = 0.05,
    max_iter: int = 5000,
    tol: float = 1e-6,
) -> MtlrModel:
    """Gradient-ascent MLE; converges at gradient infinity-norm < ``tol``
    (on the mean-normalized objective) and rejects past ``max_iter``."""
    x = np.asarray(x, dtype=float)
    tau = np.asarray(tau, dtype=float)
    events = np.asarray(events, dtype=bool)
    if np.any(tau <= 0.0):
        raise DataValidationError("survival times must be positive")
    t = np.asarray(times if times is not None else DEFAULT_TIMES, dtype=float)
    if np.any(np.diff(t) <= 0.0) or t[0] <= 0.0:
        raise DataValidationError("time grid must be positive and strictly increasing")

    means = x.mean(axis=0)
    sds = x.std(axis=0, ddof=0)
    sds = np.where(sds == 0.0, 1.0, sds)
    xs = (x - means) / sds

    m = len(t)
    intervals = np.array([interval_index(t, v) for v in tau])
    censored = ~events
    theta = np.zeros((m, xs.shape[1]))
    bias = np.zeros(m)
    opt = AmsGrad(lr=learning_rate)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        ll, g_theta, g_bias = _loglik_and_grad(theta, bias, xs, intervals, censored, l2_strength)
        gnorm = max(float(np.abs(g_theta).max()), float(np.abs(g_bias).max()))
        if gnorm < tol:
            break
        opt.step({"theta": theta, "bias": bias}, {"theta": -g_theta, "bias": -g_bias})
    else:
        raise NumericalFailure(
            f"MTLR fit did not converge in {max_iter} iterations (grad norm {gnorm:.3g})"
        )
    return MtlrModel(
        theta=theta,
        bias=bias,
        times=t,
        l2_strength=l2_strength,
        feature_means=means,
        feature_sds=sds,
        feature_names=list(feature_names) if feature_names else [],
        n_iter=n_iter,
    )


def survival_curve_csv(model: MtlrModel, x: np.ndarray, patient_ids: list[str], path) -> None:
    """Per-patient stepwise survival: patient_id,t_years,S rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["patient_id", "t_years", "S"])
        for pid, row in zip(patient_ids, np.asarray(x, dtype=float)):
            s = mtlr_survival(model, row)
            for t, v in zip(model.times, s):
                w.writerow([pid, repr(float(t)), repr(float(v))])
