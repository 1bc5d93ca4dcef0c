"""Gated recurrent cell with learned missingness decay and a Weibull head.

Per timestep t, with per-feature days-since-observation delta_t and the
scalar grid gap since the previous step (both mapped to years before the
affine transform):

    gamma    = exp(-max(0, W delta + b))            input and hidden decay
    x_hat    = m x + (1 - m)(gamma_x x_last + (1 - gamma_x) x_mean)
    h_decay  = gamma_h * h_{t-1}
    z, r     = sigmoid(W_[zr] [x_hat, h_decay, m] + b)
    c        = tanh(W_c [x_hat, r * h_decay, m] + b_c)
    h_t      = (1 - z) h_decay + z c
    kappa_t  = softplus(w_k . h_t + b_k) + 1e-3
    lambda_t = softplus(w_l . h_t + b_l) + 1e-3

The input decay is diagonal (each feature's gamma sees only its own delta);
the hidden decay is driven by the shared grid gap.  The backward pass is
hand-written backpropagation through time over cached activations and is
checked against central finite differences in the test suite.

Everything runs in float64.  The batched entry points vectorize over a set
of sequences against one immutable parameter snapshot; the per-sequence
API is the batched path with N = 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ttekit.cohort.encoding import EncodedSequence, Norms
from ttekit.cohort.features import FeatureSpec, roster_from_dicts, roster_hash, roster_to_dicts
from ttekit.errors import DataValidationError, NumericalFailure
from ttekit.weibull import WeibullParams

DAYS_PER_YEAR = 365.25
OUTPUT_FLOOR = 1e-3
CHECKPOINT_SCHEMA = "grud-weibull/1"

PARAM_FIELDS = (
    "w_decay_x",
    "b_decay_x",
    "w_decay_h",
    "b_decay_h",
    "w_z",
    "b_z",
    "w_r",
    "b_r",
    "w_c",
    "b_c",
    "w_head",
    "b_head",
)


def softplus(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0.0))))


def softplus_inv(y: float) -> float:
    """Inverse of softplus; y must be positive."""
    if y <= 0.0:
        raise ValueError(f"softplus_inv needs y > 0, got {y}")
    if y > 30.0:
        return y
    return math.log(math.expm1(y))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class GrudParameters:
    """All trainable weights; see the module docstring for their roles."""

    w_decay_x: np.ndarray  # (F,)   diagonal input decay
    b_decay_x: np.ndarray  # (F,)
    w_decay_h: np.ndarray  # (H,)   hidden decay on the scalar grid gap
    b_decay_h: np.ndarray  # (H,)
    w_z: np.ndarray        # (H, 2F+H) update gate
    b_z: np.ndarray        # (H,)
    w_r: np.ndarray        # (H, 2F+H) reset gate
    b_r: np.ndarray        # (H,)
    w_c: np.ndarray        # (H, 2F+H) candidate state
    b_c: np.ndarray        # (H,)
    w_head: np.ndarray     # (2, H)  rows: kappa, lambda pre-activations
    b_head: np.ndarray     # (2,)

    @property
    def n_features(self) -> int:
        return self.w_decay_x.shape[0]

    @property
    def hidden(self) -> int:
        return self.w_decay_h.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_FIELDS}

    def copy(self) -> "GrudParameters":
        return GrudParameters(**{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays().items()}

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays().values())


@dataclass
class PredictionTrace:
    """Per-timestep Weibull parameters with optional cached activations."""

    kappas: np.ndarray   # (T_valid,)
    lambdas: np.ndarray  # (T_valid,)
    cache: Any = None

    def params_at(self, t: int) -> WeibullParams:
        return WeibullParams(kappa=float(self.kappas[t]), lambda_=float(self.lambdas[t]))

    def __len__(self) -> int:
        return len(self.kappas)


def init_parameters(
    n_features: int,
    hidden: int,
    seed: int,
    kappa_init: float = 1.0,
    lambda_init: float = 1.0,
) -> GrudParameters:
    """Glorot-uniform gates, zero decay (gamma = 1 at the start, full trust
    in the last observation), and head biases targeting the given initial
    kappa and the training-set mean target for lambda."""
    if n_features < 1 or hidden < 1:
        raise ValueError("n_features and hidden must be >= 1")
    rng = np.random.default_rng(seed)
    gate_in = 2 * n_features + hidden

    def glorot(rows: int, cols: int) -> np.ndarray:
        limit = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-limit, limit, size=(rows, cols))

    return GrudParameters(
        w_decay_x=np.zeros(n_features),
        b_decay_x=np.zeros(n_features),
        w_decay_h=np.zeros(hidden),
        b_decay_h=np.zeros(hidden),
        w_z=glorot(hidden, gate_in),
        b_z=np.zeros(hidden),
        w_r=glorot(hidden, gate_in),
        b_r=np.zeros(hidden),
        w_c=glorot(hidden, gate_in),
        b_c=np.zeros(hidden),
        w_head=glorot(2, hidden),
        b_head=np.array(
            [
                softplus_inv(max(kappa_init - OUTPUT_FLOOR, 1e-6)),
                softplus_inv(max(lambda_init - OUTPUT_FLOOR, 1e-6)),
            ]
        ),
    )


def decay(
    delta_days: np.ndarray, elapsed_days: float, params: GrudParameters
) -> tuple[np.ndarray, np.ndarray]:
    """(gamma_x per feature, gamma_h per hidden unit), both in (0, 1]."""
    dy = np.asarray(delta_days, dtype=float) / DAYS_PER_YEAR
    ux = params.w_decay_x * dy + params.b_decay_x
    uh = params.w_decay_h * (elapsed_days / DAYS_PER_YEAR) + params.b_decay_h
    return np.exp(-np.maximum(0.0, ux)), np.exp(-np.maximum(0.0, uh))


def impute(
    x_t: np.ndarray,
    m_t: np.ndarray,
    gamma_x: np.ndarray,
    last_observed: np.ndarray,
    empirical_means: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Observed passthrough, else decay the last value toward the mean.

    Returns (x_hat, updated last_observed).
    """
    x_hat = m_t * x_t + (1.0 - m_t) * (gamma_x * last_observed + (1.0 - gamma_x) * empirical_means)
    new_last = np.where(m_t > 0.0, x_t, last_observed)
    return x_hat, new_last


def cell_step(
    params: GrudParameters,
    x_hat: np.ndarray,
    m_t: np.ndarray,
    h_prev: np.ndarray,
    gamma_h: np.ndarray,
) -> np.ndarray:
    """One gated update over [x_hat, decayed hidden, mask]."""
    hd = gamma_h * h_prev
    vz = np.concatenate([x_hat, hd, m_t])
    z = sigmoid(params.w_z @ vz + params.b_z)
    r = sigmoid(params.w_r @ vz + params.b_r)
    vc = np.concatenate([x_hat, r * hd, m_t])
    c = np.tanh(params.w_c @ vc + params.b_c)
    return (1.0 - z) * hd + z * c


def output_head(
    h_t: np.ndarray, params: GrudParameters, kappa_clamp: tuple[float, float] | None = None
) -> WeibullParams:
    pre = params.w_head @ h_t + params.b_head
    kappa = float(softplus(pre[:1])[0]) + OUTPUT_FLOOR
    lam = float(softplus(pre[1:])[0]) + OUTPUT_FLOOR
    if kappa_clamp is not None:
        kappa = min(max(kappa, kappa_clamp[0]), kappa_clamp[1])
    return WeibullParams(kappa=kappa, lambda_=lam)


@dataclass
class _StepCache:
    active: np.ndarray       # (N,) bool
    m: np.ndarray            # (N, F)
    dy: np.ndarray           # (N, F) delta in years
    gamma_x: np.ndarray      # (N, F)
    relu_x: np.ndarray       # (N, F) subgradient mask of max(0, u_x)
    blend: np.ndarray        # (N, F) (1-m)(last_prev - mean)
    gap_years: float
    gamma_h: np.ndarray      # (H,)
    relu_h: np.ndarray       # (H,)
    x_hat: np.ndarray        # (N, F)
    hd: np.ndarray           # (N, H)
    z: np.ndarray            # (N, H)
    r: np.ndarray            # (N, H)
    c: np.ndarray            # (N, H)
    h_prev: np.ndarray       # (N, H)
    h_after: np.ndarray      # (N, H)
    sp_grad: np.ndarray      # (N, 2) sigmoid of head pre-activations
    unclamped: np.ndarray    # (N, 2) hard-clamp pass-through mask


@dataclass
class BatchTrace:
    kappas: np.ndarray   # (N, T)
    lambdas: np.ndarray  # (N, T)
    t_valid: np.ndarray  # (N,)
    cache: list[_StepCache] | None = None


def forward_batch(
    params: GrudParameters,
    x: np.ndarray,
    m: np.ndarray,
    delta: np.ndarray,
    gaps_days: np.ndarray,
    t_valid: np.ndarray,
    empirical_means: np.ndarray,
    cache: bool = False,
    kappa_clamp: tuple[float, float] | None = None,
) -> BatchTrace:
    """Run the recurrence over (N, F, T) inputs against one snapshot.

    State stops updating for a patient once t reaches its valid-step count,
    so padded steps neither change the hidden state nor leak gradients.
    """
    n, n_f, n_t = x.shape
    hidden = params.hidden
    h = np.zeros((n, hidden))
    last = np.tile(empirical_means, (n, 1))
    kappas = np.empty((n, n_t))
    lambdas = np.empty((n, n_t))
    steps: list[_StepCache] | None = [] if cache else None

    for t in range(n_t):
        active = t < t_valid
        h_prev_step = h
        x_t = x[:, :, t]
        m_t = m[:, :, t]
        dy = delta[:, :, t] / DAYS_PER_YEAR
        ux = params.w_decay_x * dy + params.b_decay_x
        gamma_x = np.exp(-np.maximum(0.0, ux))
        gap_years = float(gaps_days[t]) / DAYS_PER_YEAR
        uh = params.w_decay_h * gap_years + params.b_decay_h
        gamma_h = np.exp(-np.maximum(0.0, uh))

        blend = (1.0 - m_t) * (last - empirical_means)
        x_hat = m_t * x_t + (1.0 - m_t) * empirical_means + gamma_x * blend
        new_last = np.where(m_t > 0.0, x_t, last)

        hd = gamma_h[None, :] * h
        vz = np.concatenate([x_hat, hd, m_t], axis=1)
        z = sigmoid(vz @ params.w_z.T + params.b_z)
        r = sigmoid(vz @ params.w_r.T + params.b_r)
        vc = np.concatenate([x_hat, r * hd, m_t], axis=1)
        c = np.tanh(vc @ params.w_c.T + params.b_c)
        h_new = (1.0 - z) * hd + z * c

        if not np.isfinite(h_new[active]).all():
            raise NumericalFailure(f"non-finite hidden state at timestep {t}")

        act_col = active[:, None]
        h = np.where(act_col, h_new, h)
        last = np.where(act_col, new_last, last)

        pre = h @ params.w_head.T + params.b_head
        sp = sigmoid(pre)
        raw_k = softplus(pre[:, 0]) + OUTPUT_FLOOR
        raw_l = softplus(pre[:, 1]) + OUTPUT_FLOOR
        if kappa_clamp is not None:
            clipped_k = np.clip(raw_k, kappa_clamp[0], kappa_clamp[1])
            unclamped = np.stack([clipped_k == raw_k, np.ones(n, dtype=bool)], axis=1)
            raw_k = clipped_k
        else:
            unclamped = np.ones((n, 2), dtype=bool)
        kappas[:, t] = raw_k
        lambdas[:, t] = raw_l

        if steps is not None:
            steps.append(
                _StepCache(
                    active=active,
                    m=m_t,
                    dy=dy,
                    gamma_x=gamma_x,
                    relu_x=(ux >= 0.0).astype(float),
                    blend=blend,
                    gap_years=gap_years,
                    gamma_h=gamma_h,
                    relu_h=(uh >= 0.0).astype(float),
                    x_hat=x_hat,
                    hd=hd,
                    z=z,
                    r=r,
                    c=c,
                    h_prev=h_prev_step,
                    h_after=h,
                    sp_grad=sp,
                    unclamped=unclamped.astype(float),
                )
            )

    trace = BatchTrace(kappas=kappas, lambdas=lambdas, t_valid=np.asarray(t_valid), cache=steps)
    return trace


def backward_batch(
    params: GrudParameters,
    trace: BatchTrace,
    d_kappa: np.ndarray,
    d_lambda: np.ndarray,
) -> dict[str, np.ndarray]:
    """Backpropagate per-step (d kappa, d lambda) through the recurrence.

    The caller is responsible for zeroing entries at padded steps; the
    gradient of the hard kappa clamp is zero wherever the clamp engaged.
    """
    if trace.cache is None:
        raise ValueError("forward_batch must be called with cache=True before backward")
    grads = params.zeros_like()
    steps = trace.cache
    n, hidden = steps[0].h_after.shape
    n_f = steps[0].m.shape[1]
    dh_next = np.zeros((n, hidden))

    for t in range(len(steps) - 1, -1, -1):
        ct = steps[t]
        act = ct.active
        act_col = act[:, None]

        dpre = np.stack([d_kappa[:, t], d_lambda[:, t]], axis=1) * ct.sp_grad * ct.unclamped
        dpre = dpre * act_col
        grads["w_head"] += dpre.T @ ct.h_after
        grads["b_head"] += dpre.sum(axis=0)
        dh_total = dh_next + dpre @ params.w_head

        dh = dh_total * act_col
        dh_pass = dh_total * (~act)[:, None]

        dz = dh * (ct.c - ct.hd)
        dc = dh * ct.z
        dhd = dh * (1.0 - ct.z)

        dac = dc * (1.0 - ct.c * ct.c)
        vc = np.concatenate([ct.x_hat, ct.r * ct.hd, ct.m], axis=1)
        grads["w_c"] += dac.T @ vc
        grads["b_c"] += dac.sum(axis=0)
        dvc = dac @ params.w_c
        dxh = dvc[:, :n_f].copy()
        drh = dvc[:, n_f : n_f + hidden]
        dr = drh * ct.hd
        dhd = dhd + drh * ct.r

        vz = np.concatenate([ct.x_hat, ct.hd, ct.m], axis=1)
        dar = dr * ct.r * (1.0 - ct.r)
        grads["w_r"] += dar.T @ vz
        grads["b_r"] += dar.sum(axis=0)
        dvz = dar @ params.w_r
        daz = dz * ct.z * (1.0 - ct.z)
        grads["w_z"] += daz.T @ vz
        grads["b_z"] += daz.sum(axis=0)
        dvz = dvz + daz @ params.w_z
        dxh += dvz[:, :n_f]
        dhd = dhd + dvz[:, n_f : n_f + hidden]

        # hidden decay (shared across the batch)
        dgamma_h = (dhd * ct.h_prev).sum(axis=0)
        duh = -dgamma_h * ct.gamma_h * ct.relu_h
        grads["w_decay_h"] += duh * ct.gap_years
        grads["b_decay_h"] += duh
        dh_prev = dhd * ct.gamma_h[None, :]

        # input decay through the imputation blend
        dgamma_x = dxh * ct.blend
        dux = -dgamma_x * ct.gamma_x * ct.relu_x
        grads["w_decay_x"] += (dux * ct.dy).sum(axis=0)
        grads["b_decay_x"] += dux.sum(axis=0)

        dh_next = dh_prev + dh_pass

    return grads


def forward(
    params: GrudParameters,
    seq: EncodedSequence,
    cache: bool = False,
    kappa_clamp: tuple[float, float] | None = None,
    gaps_days: np.ndarray | None = None,
    n_steps: int | None = None,
) -> PredictionTrace:
    """Per-sequence forward pass: exactly ``valid_steps`` (kappa, lambda)
    pairs, computed by the batched path with N = 1."""
    n_t = seq.valid_steps if n_steps is None else n_steps
    if n_t < 1:
        raise DataValidationError(f"{seq.patient_id}: no valid timesteps to run")
    if gaps_days is None:
        from ttekit.cohort.grid import build_grid

        gaps_days = build_grid().gaps_days()
    trace = forward_batch(
        params,
        seq.x[None, :, :n_t],
        seq.m[None, :, :n_t],
        seq.delta[None, :, :n_t],
        gaps_days[:n_t],
        np.array([n_t]),
        seq.empirical_means,
        cache=cache,
        kappa_clamp=kappa_clamp,
    )
    return PredictionTrace(kappas=trace.kappas[0], lambdas=trace.lambdas[0], cache=trace)


def save_checkpoint(params: GrudParameters, meta: dict, path) -> None:
    """Structured-text checkpoint; arrays carry explicit shapes and decimal
    values that round-trip bit-exactly."""
    roster = meta["roster"]
    doc = {
        "schema_version": CHECKPOINT_SCHEMA,
        "hidden_size": params.hidden,
        "n_features": params.n_features,
        "feature_roster": roster_to_dicts(roster),
        "feature_roster_hash": roster_hash(roster),
        "grid": list(meta["grid"].boundaries),
        "norms": meta["norms"].to_dict(),
        "train_config": meta.get("train_config"),
        "seed": meta.get("seed"),
        "fold": meta.get("fold"),
        "weights": {
            name: {"shape": list(arr.shape), "data": [float(v) for v in arr.ravel()]}
            for name, arr in params.arrays().items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple[GrudParameters, dict]:
    from ttekit.cohort.grid import TimeGrid

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != CHECKPOINT_SCHEMA:
        raise DataValidationError(
            f"{path}: schema_version {doc.get('schema_version')!r} != {CHECKPOINT_SCHEMA!r}"
        )
    roster = roster_from_dicts(doc["feature_roster"])
    if roster_hash(roster) != doc.get("feature_roster_hash"):
        raise DataValidationError(
            f"{path}: feature_roster_hash does not match the stored roster"
        )
    arrays = {}
    for name in PARAM_FIELDS:
        entry = doc["weights"][name]
        arrays[name] = np.array(entry["data"], dtype=float).reshape(entry["shape"])
    params = GrudParameters(**arrays)
    meta = {
        "roster": roster,
        "grid": TimeGrid(boundaries=tuple(int(b) for b in doc["grid"])),
        "norms": Norms.from_dict(doc["norms"]),
        "train_config": doc.get("train_config"),
        "seed": doc.get("seed"),
        "fold": doc.get("fold"),
    }
    return params, meta
