"""Cox proportional-hazards fitting by maximum partial likelihood.

Implements the Newton solver for the log partial likelihood with the
Breslow convention for ties, the observed-information covariance, and the
Breslow step estimate of the baseline cumulative hazard.  Risk-set sums
are accumulated with a single descending-time pass so a fit on a few
hundred subjects costs about a millisecond, which keeps thousand-replicate
studies cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import TrialDataset
from .errors import DegenerateDataError, NonConvergenceError
from .numerics import SolveReport

__all__ = ["CoxFit", "BreslowCurve", "fit_cox", "breslow_cumhaz"]

# |beta| beyond this is treated as a monotone partial likelihood
# (perfect separation); e^50 exceeds any plausible hazard ratio.
_DIVERGENCE_BOUND = 50.0


@dataclass(frozen=True)
class CoxFit:
    """Fitted log hazard ratios with observed-information covariance."""

    beta_hat: np.ndarray
    covariance: np.ndarray
    log_partial_likelihood: float
    n_events: int
    report: SolveReport


@dataclass(frozen=True)
class BreslowCurve:
    """Step estimate of the baseline cumulative hazard.

    ``increments[i]`` is the jump at ``event_times[i]`` (number of events
    there divided by the risk-set sum of exp(beta' Z)); ``cumulative`` is
    the running sum.
    """

    event_times: np.ndarray
    increments: np.ndarray
    cumulative: np.ndarray


class _RiskSetLayout:
    """Precomputed descending-time ordering and tie-block structure."""

    def __init__(self, data: TrialDataset):
        order = np.argsort(-data.times, kind="stable")
        self.t = data.times[order]
        self.d = data.events[order]
        self.x = data.covariates[order]
        # tie blocks in descending time; the risk set of an event is every
        # subject in its own block and in all earlier (larger-time) blocks
        is_new = np.r_[True, self.t[1:] != self.t[:-1]]
        starts = np.flatnonzero(is_new)
        self.block_end = np.r_[starts[1:], self.t.size]  # exclusive
        self.block_of = np.cumsum(is_new) - 1
        self.n_blocks = starts.size
        ev = self.d == 1
        eb = self.block_of[ev]
        self.d_count = np.bincount(eb, minlength=self.n_blocks).astype(float)
        self.has_events = self.d_count > 0
        self.x_event_sum = np.vstack(
            [np.bincount(eb, weights=self.x[ev][:, j], minlength=self.n_blocks) for j in range(self.x.shape[1])]
        ).T if self.x.shape[1] else np.zeros((self.n_blocks, 0))
        self.ev = ev
        self.eb = eb

    def loglik_score_info(self, beta: np.ndarray):
        """Breslow log partial likelihood, score, and observed information."""
        eta = self.x @ beta
        w = np.exp(eta)
        wx = self.x * w[:, None]
        s0 = np.cumsum(w)[self.block_end - 1]
        s1 = np.cumsum(wx, axis=0)[self.block_end - 1]
        wxx = np.einsum("ij,il->ijl", self.x, wx)
        s2 = np.cumsum(wxx, axis=0)[self.block_end - 1]
        h = self.has_events
        d = self.d_count[h]
        eta_event_sum = np.bincount(self.eb, weights=eta[self.ev], minlength=self.n_blocks)[h]
        ll = float(np.sum(eta_event_sum - d * np.log(s0[h])))
        zbar = s1[h] / s0[h, None]
        score = self.x_event_sum[h].sum(axis=0) - (d[:, None] * zbar).sum(axis=0)
        spread = s2[h] / s0[h, None, None] - np.einsum("ij,il->ijl", zbar, zbar)
        info = (d[:, None, None] * spread).sum(axis=0)
        return ll, score, info


def fit_cox(data: TrialDataset, tol: float = 1e-10, max_iter: int = 100) -> CoxFit:
    """Maximize the Cox partial likelihood over the log hazard ratios.

    Newton iteration from the zero vector with step-halving (the partial
    likelihood is concave, so safeguarded Newton suffices).  Convergence
    is declared on the max-norm of the score; the absolute tolerance is
    floored at 1e-13 per event because float64 cancellation limits how
    small a sum of n score terms can be driven.

    Raises
    ------
    DegenerateDataError
        no events, no covariate contrast, or |beta| diverging past 50
        (monotone likelihood from perfect separation).
    NonConvergenceError
        iteration budget exhausted with the score still above tolerance.
    """
    if data.k == 0:
        raise DegenerateDataError("no covariates to fit")
    if data.n_events == 0:
        raise DegenerateDataError("no observed events")
    if np.all(np.ptp(data.covariates, axis=0) == 0):
        raise DegenerateDataError("all covariate vectors are identical")
    layout = _RiskSetLayout(data)
    beta = np.zeros(data.k)
    ll, score, info = layout.loglik_score_info(beta)
    gtol = max(tol, 1e-12 * data.n_events)
    prev_norm = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        norm = float(np.max(np.abs(score)))
        if norm <= gtol:
            iterations -= 1
            break
        # float64 cancellation floor: the score has stopped improving but
        # already sits far inside the 1e-8 * n invariant
        if iterations > 3 and norm >= prev_norm and norm <= 1e-8 * data.n_events:
            iterations -= 1
            break
        prev_norm = norm
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError as exc:
            raise DegenerateDataError(
                "singular information matrix (no contrast within risk sets)"
            ) from exc
        # the acceptance slack must sit above the float noise of a
        # likelihood that sums n terms of magnitude ~|ll|/n
        slack = 1e-10 * (1.0 + abs(ll))
        damp = 1.0
        for _ in range(25):
            beta_new = beta + damp * step
            ll_new, score_new, info_new = layout.loglik_score_info(beta_new)
            if np.isfinite(ll_new) and ll_new >= ll - slack:
                break
            damp *= 0.5
        beta, ll, score, info = beta_new, ll_new, score_new, info_new
        if float(np.max(np.abs(beta))) > _DIVERGENCE_BOUND:
            raise DegenerateDataError(
                "beta diverged beyond 50: a covariate separates events perfectly"
            )
    resid = float(np.max(np.abs(score)))
    if resid > max(gtol, 1e-8 * data.n_events):
        raise NonConvergenceError(
            f"score norm {resid:.3e} above tolerance after {max_iter} iterations"
        )
    # a monotone likelihood can pass the score test at large |beta| before
    # the divergence wall: the information collapses exponentially there
    eigs = np.linalg.eigvalsh(0.5 * (info + info.T))
    if float(eigs.min()) <= 1e-8 * data.n_events:
        raise DegenerateDataError(
            "observed information collapsed: a covariate separates events perfectly"
        )
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError("observed information is singular at the optimum") from exc
    cov = 0.5 * (cov + cov.T)
    return CoxFit(
        beta_hat=beta,
        covariance=cov,
        log_partial_likelihood=ll,
        n_events=data.n_events,
        report=SolveReport(root=beta, residual_norm=resid, iterations=iterations, converged=True),
    )


def breslow_cumhaz(data: TrialDataset, beta_hat=None) -> BreslowCurve:
    """Breslow step estimate of the baseline cumulative hazard.

    The increment at an event time equals the number of events there
    divided by the risk-set sum of exp(beta_hat' Z).  With no covariates
    (k = 0) the linear predictor is zero and this reduces to the
    Nelson-Aalen estimate.
    """
    if beta_hat is None:
        beta_hat = np.zeros(data.k)
    beta_hat = np.atleast_1d(np.asarray(beta_hat, dtype=float))
    if beta_hat.shape != (data.k,):
        raise ValueError(f"beta_hat must have length {data.k}")
    layout = _RiskSetLayout(data)
    w = np.exp(layout.x @ beta_hat) if data.k else np.ones(len(data))
    s0 = np.cumsum(w)[layout.block_end - 1]
    h = layout.has_events
    # blocks are in descending time; flip to ascending for the curve
    times = layout.t[layout.block_end - 1][h][::-1]
    increments = (layout.d_count[h] / s0[h])[::-1]
    return BreslowCurve(
        event_times=times,
        increments=increments,
        cumulative=np.cumsum(increments),
    )
