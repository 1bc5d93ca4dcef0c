"""Shared builders for network-level tests."""

import numpy as np
import pytest

from ttekit.cohort.encoding import EncodedSequence
from ttekit.grud import PARAM_FIELDS, GrudParameters, init_parameters


def random_sequence(rng, n_features, n_steps, missing_rate=0.5):
    """A synthetic encoded sequence with consistent x/m/delta bookkeeping."""
    m = (rng.random((n_features, n_steps)) > missing_rate).astype(float)
    x = np.where(m > 0, rng.normal(0.0, 1.0, (n_features, n_steps)), 0.0)
    gaps = np.concatenate([[0.0], rng.choice([15.0, 30.0], size=n_steps - 1)])
    delta = np.zeros((n_features, n_steps))
    for t in range(1, n_steps):
        carried = np.where(m[:, t - 1] == 0.0, delta[:, t - 1], 0.0)
        delta[:, t] = gaps[t] + carried
    emp = rng.normal(0.0, 0.3, n_features)
    seq = EncodedSequence(
        patient_id="synthetic",
        x=x,
        m=m,
        delta=delta,
        empirical_means=emp,
        valid_steps=n_steps,
        followup_end=10_000,
        event_flag=True,
    )
    return seq, gaps


def randomized_parameters(n_features, hidden, rng_seed=0, scale=0.3):
    """Initialized parameters nudged off their zero points so finite
    differences never straddle the ReLU kink in the decay units."""
    params = init_parameters(n_features, hidden, seed=rng_seed)
    rng = np.random.default_rng(rng_seed + 1)
    for name in PARAM_FIELDS:
        arr = getattr(params, name)
        arr += rng.normal(0.0, scale, arr.shape)
    return params


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
