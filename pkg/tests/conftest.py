"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the library's own code paths: the
partial likelihood is enumerated risk set by risk set in O(n^2), and the
grid-search maximizer scans a fixed lattice.  They exist so the fast
vectorized implementations are checked against something that cannot
share their bugs.
"""

import math

import numpy as np
import pytest

from hrmix import CovariateDistribution, ScenarioSpec


def naive_log_partial_likelihood(times, events, z, beta):
    """Breslow-ties log partial likelihood by direct risk-set enumeration."""
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    total = 0.0
    for i in range(len(times)):
        if events[i] != 1:
            continue
        at_risk = times >= times[i]
        denom = sum(math.exp(float(z[j] @ beta)) for j in range(len(times)) if at_risk[j])
        total += float(z[i] @ beta) - math.log(denom)
    return total


def grid_search_beta(times, events, z, lo=-3.0, hi=3.0, step=1e-3):
    """Exhaustive scalar maximizer of the exact partial likelihood."""
    grid = np.arange(lo, hi + step / 2, step)
    best_beta, best_ll = grid[0], -np.inf
    for beta in grid:
        ll = naive_log_partial_likelihood(times, events, z, [beta])
        if ll > best_ll:
            best_beta, best_ll = beta, ll
    return float(best_beta), float(best_ll)


def grid_search_beta_fast(times, events, z, lo=-3.0, hi=3.0, step=1e-3):
    """Vectorized version of :func:`grid_search_beta` for larger sweeps.

    Same lattice and same Breslow likelihood, but all grid points are
    evaluated at once; used where the pure-Python scan would be too slow.
    """
    times = np.asarray(times, dtype=float)
    events = np.asarray(events)
    zv = np.asarray(z, dtype=float).reshape(len(times))
    grid = np.arange(lo, hi + step / 2, step)
    ll = np.zeros(grid.size)
    for i in range(len(times)):
        if events[i] != 1:
            continue
        at_risk = times >= times[i]
        denom = np.exp(np.outer(grid, zv[at_risk])).sum(axis=1)
        ll += grid * zv[i] - np.log(denom)
    j = int(np.argmax(ll))
    return float(grid[j]), float(ll[j])


EXAMPLE3_EFFECTS = (math.log(0.3), math.log(0.8))
EXAMPLE3_SIZES = (400, 170)
EXAMPLE3_P = 400 / 570


@pytest.fixture(scope="session")
def bernoulli_half():
    return CovariateDistribution.bernoulli(0.5)


@pytest.fixture(scope="session")
def example3_scenario(bernoulli_half):
    """Two trials with hazard ratios 0.3 and 0.8, sizes 400 and 170."""
    return ScenarioSpec(
        trial_effects=[[EXAMPLE3_EFFECTS[0]], [EXAMPLE3_EFFECTS[1]]],
        sizes=EXAMPLE3_SIZES,
        covariate_dist=bernoulli_half,
        seed=20260808,
    )
