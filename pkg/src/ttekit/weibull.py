"""Two-parameter Weibull mathematics for per-timestep survival output.

Parameterization (shape kappa, scale lambda, time tau >= 0, all times in
years):

    f(tau) = (kappa/lambda) (tau/lambda)^(kappa-1) exp(-(tau/lambda)^kappa)
    S(tau) = exp(-(tau/lambda)^kappa)
    h(tau) = (kappa/lambda) (tau/lambda)^(kappa-1)        so f = h * S

    Median = lambda (ln 2)^(1/kappa)
    Mode   = lambda ((kappa-1)/kappa)^(1/kappa)   for kappa >= 1 (0 at 1,
             undefined below 1)
    Mean   = lambda Gamma(1 + 1/kappa)

The training loss for one (prediction, target) pair is the negative log
density plus the squared log error between the target and the predicted
median.  Minimizing either piece alone leaves a one-parameter family of
(kappa, lambda) solutions; the two families cross at a single shape value
kappa = 1/(1 - ln 2), which is why the composite loss pins both parameters.
Both loss pieces and their analytic partials live here so the recurrent
network, the training loop, and the gradient checks share one
implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)

_MAX_GAMMA_ITER = 500


@dataclass(frozen=True)
class WeibullParams:
    """Shape ``kappa`` (dimensionless) and scale ``lambda_`` (years)."""

    kappa: float
    lambda_: float

    def __post_init__(self) -> None:
        k, lam = self.kappa, self.lambda_
        if not (math.isfinite(k) and math.isfinite(lam)):
            raise ValueError(f"non-finite Weibull parameters kappa={k} lambda={lam}")
        if k <= 0.0 or lam <= 0.0:
            raise ValueError(f"Weibull parameters must be positive, got kappa={k} lambda={lam}")


@dataclass(frozen=True)
class WeibullSummaries:
    median: float
    mode: float | None
    mean: float


@dataclass(frozen=True)
class LossTerms:
    """Per-timestep loss split: ``total = neglog + msle`` exactly.

    ``neglog`` may be negative (density above one) or non-finite when the
    density underflows; callers that train on these values are expected to
    clip and count non-finite entries rather than fail.
    """

    neglog: float
    msle: float

    @property
    def total(self) -> float:
        return self.neglog + self.msle

    @property
    def finite(self) -> bool:
        return math.isfinite(self.neglog) and math.isfinite(self.msle)


def _pow_ratio(tau: float, lam: float, kappa: float) -> float:
    """(tau/lam)**kappa for tau > 0, +inf on overflow."""
    try:
        return math.exp(kappa * math.log(tau / lam))
    except OverflowError:
        return math.inf


def pdf(p: WeibullParams, tau: float) -> float:
    """Density per year at ``tau``.

    For kappa < 1 the density diverges at tau = 0; the returned +inf is the
    singular-value flag.
    """
    if tau < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    k, lam = p.kappa, p.lambda_
    if tau == 0.0:
        if k < 1.0:
            return math.inf
        return 1.0 / lam if k == 1.0 else 0.0
    q = _pow_ratio(tau, lam, k)
    log_f = math.log(k / lam) + (k - 1.0) * math.log(tau / lam) - q
    try:
        return math.exp(log_f)
    except OverflowError:
        return math.inf


def survival(p: WeibullParams, tau: float) -> float:
    """P(event after ``tau``) = exp(-(tau/lambda)^kappa)."""
    if tau < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    if tau == 0.0:
        return 1.0
    return math.exp(-_pow_ratio(tau, p.lambda_, p.kappa))


def hazard(p: WeibullParams, tau: float) -> float:
    """Instantaneous event rate (kappa/lambda)(tau/lambda)^(kappa-1)."""
    if tau < 0.0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    k, lam = p.kappa, p.lambda_
    if tau == 0.0:
        if k < 1.0:
            return math.inf
        return 1.0 / lam if k == 1.0 else 0.0
    return math.exp(math.log(k / lam) + (k - 1.0) * math.log(tau / lam))


def median(p: WeibullParams) -> float:
    return p.lambda_ * math.exp(math.log(LN2) / p.kappa)


def summaries(p: WeibullParams) -> WeibullSummaries:
    """Median, mode (absent below kappa = 1, zero at kappa = 1), and mean."""
    k, lam = p.kappa, p.lambda_
    if k < 1.0:
        mode: float | None = None
    elif k == 1.0:
        mode = 0.0
    else:
        mode = lam * math.exp(math.log((k - 1.0) / k) / k)
    try:
        mean = lam * math.gamma(1.0 + 1.0 / k)
    except OverflowError:
        mean = math.inf
    return WeibullSummaries(median=median(p), mode=mode, mean=mean)


def kappa_where_mode_equals_median() -> float:
    """The unique shape where mode and median coincide.

    Mode equals median iff (kappa-1)/kappa = ln 2, independent of the scale.
    Solved by bisection on [1.01, 20] to 1e-9; the closed form is
    1/(1 - ln 2) ~ 3.2589.
    """
    def g(k: float) -> float:
        return (k - 1.0) / k - LN2

    lo, hi = 1.01, 20.0
    if g(lo) >= 0.0 or g(hi) <= 0.0:  # pragma: no cover - fixed bracket
        raise RuntimeError("bisection bracket lost")
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def upper_incomplete_gamma(s: float, x: float) -> float:
    """Gamma(s, x) = integral_x^inf t^(s-1) e^(-t) dt.

    Series expansion of the lower incomplete gamma for x < s + 1, Lentz
    continued fraction otherwise; both converge well past 1e-10 relative
    accuracy on the domain used here.
    """
    if s <= 0.0:
        raise ValueError(f"s must be positive, got {s}")
    if x < 0.0:
        raise ValueError(f"x must be nonnegative, got {x}")
    if x == 0.0:
        return math.gamma(s)
    if x < s + 1.0:
        # lower gamma by series, subtract from the complete gamma
        term = 1.0 / s
        total = term
        n = 0
        while n < _MAX_GAMMA_ITER:
            n += 1
            term *= x / (s + n)
            total += term
            if abs(term) < abs(total) * 1e-16:
                break
        lower = total * math.exp(-x + s * math.log(x))
        return math.gamma(s) - lower
    # modified Lentz on the standard continued fraction
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_GAMMA_ITER + 1):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return math.exp(-x + s * math.log(x)) * h


def best_guess(p: WeibullParams, c: float) -> float:
    """Conditional expected event time given survival past ``c``.

    BG(c) = c + (lambda/kappa) Gamma(1/kappa, (c/lambda)^kappa) / S(c),
    the mean residual life added to the censoring time.  When S(c)
    underflows below 1e-300 the asymptotic residual life
    lambda^kappa kappa^(-1) c^(1-kappa) is used instead.
    """
    if c < 0.0:
        raise ValueError(f"censoring time must be nonnegative, got {c}")
    k, lam = p.kappa, p.lambda_
    if c == 0.0:
        return summaries(p).mean
    x = _pow_ratio(c, lam, k)
    s_c = math.exp(-x) if math.isfinite(x) else 0.0
    if s_c < 1e-300:
        # asymptotic mean residual life; c >> lambda in this regime
        return c + (lam / k) * math.exp((k - 1.0) * math.log(lam / c))
    return c + (lam / k) * upper_incomplete_gamma(1.0 / k, x) / s_c


def composite_loss(p: WeibullParams, tau: float) -> LossTerms:
    """Negative log density plus squared log error against the median.

    msle = (log(tau + 1) - log(median + 1))^2, zero exactly when the
    predicted median hits the target.  Non-finite values (density
    underflow) are returned as-is for the caller to clip.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    k, lam = p.kappa, p.lambda_
    q = _pow_ratio(tau, lam, k)
    neglog = -(math.log(k / lam) + (k - 1.0) * math.log(tau / lam) - q)
    med = median(p)
    err = math.log(tau + 1.0) - math.log(med + 1.0)
    return LossTerms(neglog=neglog, msle=err * err)


def composite_loss_grad(p: WeibullParams, tau: float) -> tuple[float, float]:
    """Analytic (d total / d kappa, d total / d lambda).

    With q = (tau/lambda)^kappa and L = log(tau/lambda):

        d neglog / d kappa  = -1/kappa + L (q - 1)
        d neglog / d lambda = kappa (1 - q) / lambda

    and the msle part follows from d median / d kappa =
    -median ln(ln 2) / kappa^2, d median / d lambda = median / lambda.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    k, lam = p.kappa, p.lambda_
    big_l = math.log(tau / lam)
    q = _pow_ratio(tau, lam, k)
    dneg_dk = -1.0 / k + big_l * (q - 1.0)
    dneg_dl = k * (1.0 - q) / lam
    med = median(p)
    err = math.log(tau + 1.0) - math.log(med + 1.0)
    dmed_dk = -med * math.log(LN2) / (k * k)
    dmed_dl = med / lam
    scale = -2.0 * err / (med + 1.0)
    return dneg_dk + scale * dmed_dk, dneg_dl + scale * dmed_dl


def composite_loss_arrays(
    kappa: np.ndarray, lam: np.ndarray, tau: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (neglog, msle); entries may be non-finite on underflow."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        big_l = np.log(tau / lam)
        q = np.exp(kappa * big_l)
        neglog = -(np.log(kappa / lam) + (kappa - 1.0) * big_l - q)
        med = lam * np.exp(math.log(LN2) / kappa)
        err = np.log1p(tau) - np.log1p(med)
    return neglog, err * err


def composite_loss_grad_arrays(
    kappa: np.ndarray, lam: np.ndarray, tau: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (d total / d kappa, d total / d lambda)."""
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        big_l = np.log(tau / lam)
        q = np.exp(kappa * big_l)
        dneg_dk = -1.0 / kappa + big_l * (q - 1.0)
        dneg_dl = kappa * (1.0 - q) / lam
        med = lam * np.exp(math.log(LN2) / kappa)
        err = np.log1p(tau) - np.log1p(med)
        scale = -2.0 * err / (med + 1.0)
        dk = dneg_dk + scale * (-med * math.log(LN2) / (kappa * kappa))
        dl = dneg_dl + scale * (med / lam)
    return dk, dl
