"""Reproduction studies and property suites built on the estimator layer.

Covers the ordering checks between the combined-effect definitions, the
Monte Carlo censoring-bias sweep, the overall-hazard-ratio comparison
grids, the pooled-baseline hazard limit with its simulation check, and
the information-projection objective that characterizes the harmonic-mean
effect.  Everything here emits plain data (arrays and CSV); no plotting.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cox import breslow_cumhaz, fit_cox
from .data import (
    CovariateDistribution,
    ScenarioSpec,
    TrialDataset,
    censor_administrative,
    pool,
    replicate_stream,
    simulate_trial,
)
from .errors import HrmixError
from .estimators import (
    c_hm_binary,
    solve_cpl_binary,
    solve_theta_pl_general,
)

__all__ = [
    "OrderingReport",
    "SweepResult",
    "GridResult",
    "BreslowComparison",
    "proposition3_check",
    "bias_sweep",
    "table1_grid",
    "figure2_grid",
    "breslow_limit",
    "breslow_limit_hazard",
    "breslow_limit_at_zero",
    "breslow_limit_at_infinity",
    "kl_objective",
    "kl_gradient",
    "write_sweep_csv",
    "write_grid_csv",
    "write_ordering_csv",
    "write_breslow_csv",
]

# Ordering flags require margins above 10x the solver tolerance so that a
# "strict" inequality is never an artifact of quadrature noise.
_ORDERING_MARGIN = 1e-10

TABLE1_VALUES = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)


@dataclass(frozen=True)
class OrderingReport:
    """Computed combined-effect values and their ordering for one (a,b,p,q).

    ``margins_hm`` holds the slacks of a < c_hm < exp(theta_l) < c_l < b
    and ``margins_pl`` those of a < c_pl < c_l < b.  ``boundary`` marks
    the degenerate case a = b where every margin is zero by construction.
    """

    a: float
    b: float
    p: float
    q: float
    c_hm: float
    exp_theta_l: float
    c_l: float
    c_pl: float
    margins_hm: tuple
    margins_pl: tuple
    chain_hm_holds: bool
    chain_pl_holds: bool
    boundary: bool


def proposition3_check(a: float, b: float, p: float, q: float) -> OrderingReport:
    """Evaluate both ordering chains between the combined-effect definitions.

    Requires 0 < a <= b and p, q in (0, 1).  Flags are true only when
    every margin in the chain exceeds 10x the solver tolerance; the a = b
    case is reported as a boundary rather than a violation.
    """
    if not (0 < a <= b):
        raise ValueError("need 0 < a <= b")
    if not (0 < p < 1 and 0 < q < 1):
        raise ValueError("p and q must lie in (0, 1)")
    c_hm = c_hm_binary(a, b, p)
    exp_theta_l = a**p * b ** (1 - p)
    c_l = p * a + (1 - p) * b
    c_pl = solve_cpl_binary(a, b, p, q)
    margins_hm = (c_hm - a, exp_theta_l - c_hm, c_l - exp_theta_l, b - c_l)
    margins_pl = (c_pl - a, c_l - c_pl, b - c_l)
    boundary = a == b
    return OrderingReport(
        a=a,
        b=b,
        p=p,
        q=q,
        c_hm=c_hm,
        exp_theta_l=exp_theta_l,
        c_l=c_l,
        c_pl=c_pl,
        margins_hm=margins_hm,
        margins_pl=margins_pl,
        chain_hm_holds=all(m > _ORDERING_MARGIN for m in margins_hm),
        chain_pl_holds=all(m > _ORDERING_MARGIN for m in margins_pl),
        boundary=boundary,
    )


@dataclass(frozen=True)
class SweepResult:
    """Per-censoring-time summaries of the two pooled estimates.

    For each entry of ``t_max`` (math.inf means no censoring): the mean
    and empirical 2.5/97.5 percentiles over replicates of the pooled-fit
    log hazard ratio and of the aggregate plug-in, the mean pooled
    censored fraction, and the count of replicates whose fits failed
    (excluded from the summaries, never fatal).
    """

    t_max: np.ndarray
    theta_pl_mean: np.ndarray
    theta_pl_lo: np.ndarray
    theta_pl_hi: np.ndarray
    theta_m_mean: np.ndarray
    theta_m_lo: np.ndarray
    theta_m_hi: np.ndarray
    censored_fraction: np.ndarray
    n_failed: np.ndarray
    replicates: int
    master_seed: int

    def __post_init__(self):
        t = np.asarray(self.t_max, dtype=float)
        if np.any(np.diff(t) <= 0):
            raise ValueError("t_max grid must be strictly ascending")
        for lo, mean, hi in (
            (self.theta_pl_lo, self.theta_pl_mean, self.theta_pl_hi),
            (self.theta_m_lo, self.theta_m_mean, self.theta_m_hi),
        ):
            ok = np.isfinite(mean)
            if not (np.all(lo[ok] <= mean[ok]) and np.all(mean[ok] <= hi[ok])):
                raise ValueError("percentiles must bracket the mean")


def _sweep_one_replicate(scenario, grid, r, binary_q):
    """Latent datasets once, then censor and refit per grid point."""
    rng = replicate_stream(scenario.seed, r)
    latent = [
        simulate_trial(
            effect,
            size,
            scenario.covariate_dist,
            baseline=scenario.baseline,
            rng=rng,
            label=f"trial{i + 1}",
        )
        for i, (effect, size) in enumerate(zip(scenario.trial_effects, scenario.sizes))
    ]
    p = scenario.mixing_p
    theta_pl = np.full(len(grid), np.nan)
    theta_m = np.full(len(grid), np.nan)
    frac = np.full(len(grid), np.nan)
    for g, t_max in enumerate(grid):
        try:
            censored = [censor_administrative(d, t_max) for d in latent]
            pooled = pool(censored)
            frac[g] = 1.0 - pooled.events.mean()
            theta_pl[g] = fit_cox(pooled).beta_hat[0]
            fits = [fit_cox(d) for d in censored]
            if binary_q is not None:
                a_hat = math.exp(fits[0].beta_hat[0])
                b_hat = math.exp(fits[1].beta_hat[0])
                theta_m[g] = math.log(solve_cpl_binary(a_hat, b_hat, p, binary_q))
            else:
                theta_m[g] = solve_theta_pl_general(
                    fits[0].beta_hat, fits[1].beta_hat, p, scenario.covariate_dist
                )[0]
        except HrmixError:
            continue
    return theta_pl, theta_m, frac


def bias_sweep(
    scenario: ScenarioSpec,
    t_max_grid,
    replicates: int,
    threads: int = 1,
) -> SweepResult:
    """Monte Carlo study of censoring bias in the pooled estimates.

    Each replicate draws latent (uncensored) datasets once on its own
    stream, then re-censors them administratively at every grid value
    (math.inf means no censoring; the scenario's own censoring field is
    ignored here).  Per grid point the pooled fit and the per-trial-fit
    plug-in are recomputed; component 0 of each estimate (the arm
    indicator) is summarized.  Replicate streams depend only on
    (seed, replicate), so results are identical for any thread count;
    note that extra threads only pay off when the per-trial sizes are
    large enough for numpy to release the GIL.
    """
    if len(scenario.trial_effects) != 2:
        raise ValueError("the sweep is defined for two-trial scenarios")
    if replicates < 100:
        raise ValueError("need at least 100 replicates for stable percentiles")
    grid = np.asarray(sorted(float(t) for t in t_max_grid), dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("t_max grid must be nonempty with distinct values")
    if np.any(grid <= 0):
        raise ValueError("t_max values must be positive")
    binary_q = scenario.covariate_dist.arm_probability()
    theta_pl = np.empty((replicates, grid.size))
    theta_m = np.empty((replicates, grid.size))
    frac = np.empty((replicates, grid.size))

    def run(r):
        theta_pl[r], theta_m[r], frac[r] = _sweep_one_replicate(scenario, grid, r, binary_q)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(run, range(replicates)))
    else:
        for r in range(replicates):
            run(r)

    failed = ~np.isfinite(theta_pl) | ~np.isfinite(theta_m)

    def summarize(values):
        vals = np.where(failed, np.nan, values)
        with np.errstate(all="ignore"):
            mean = np.nanmean(vals, axis=0)
            lo = np.nanpercentile(vals, 2.5, axis=0)
            hi = np.nanpercentile(vals, 97.5, axis=0)
        return mean, lo, hi

    pl_mean, pl_lo, pl_hi = summarize(theta_pl)
    m_mean, m_lo, m_hi = summarize(theta_m)
    with np.errstate(all="ignore"):
        frac_mean = np.nanmean(np.where(failed, np.nan, frac), axis=0)
    return SweepResult(
        t_max=grid,
        theta_pl_mean=pl_mean,
        theta_pl_lo=pl_lo,
        theta_pl_hi=pl_hi,
        theta_m_mean=m_mean,
        theta_m_lo=m_lo,
        theta_m_hi=m_hi,
        censored_fraction=frac_mean,
        n_failed=failed.sum(axis=0),
        replicates=replicates,
        master_seed=scenario.seed,
    )


@dataclass(frozen=True)
class GridResult:
    """Combined-effect surfaces over an (a, b) grid of hazard ratios.

    Each surface is an (len(a_values), len(b_values)) array; unpopulated
    cells (below the diagonal for the triangular table) hold NaN.  The
    percentage-difference surfaces take the second-listed estimator as
    the basis: 100 * (x - basis) / basis.
    """

    a_values: np.ndarray
    b_values: np.ndarray
    c_hm: np.ndarray
    c_pl: np.ndarray
    exp_theta_l: np.ndarray
    c_l: np.ndarray
    pct_hm_vs_pl: np.ndarray
    pct_expl_vs_pl: np.ndarray
    pct_expl_vs_hm: np.ndarray
    p: float
    q: float


def _grid_from_values(a_values, b_values, p, q, populate) -> GridResult:
    na, nb = len(a_values), len(b_values)
    shape = (na, nb)
    c_hm = np.full(shape, np.nan)
    c_pl = np.full(shape, np.nan)
    exp_tl = np.full(shape, np.nan)
    c_l = np.full(shape, np.nan)
    for i, a in enumerate(a_values):
        for j, b in enumerate(b_values):
            if not populate(a, b):
                continue
            c_hm[i, j] = c_hm_binary(a, b, p)
            c_pl[i, j] = solve_cpl_binary(a, b, p, q)
            exp_tl[i, j] = a**p * b ** (1 - p)
            c_l[i, j] = p * a + (1 - p) * b
    with np.errstate(invalid="ignore"):
        pct_hm_vs_pl = 100.0 * (c_hm - c_pl) / c_pl
        pct_expl_vs_pl = 100.0 * (exp_tl - c_pl) / c_pl
        pct_expl_vs_hm = 100.0 * (exp_tl - c_hm) / c_hm
    return GridResult(
        a_values=np.asarray(a_values, dtype=float),
        b_values=np.asarray(b_values, dtype=float),
        c_hm=c_hm,
        c_pl=c_pl,
        exp_theta_l=exp_tl,
        c_l=c_l,
        pct_hm_vs_pl=pct_hm_vs_pl,
        pct_expl_vs_pl=pct_expl_vs_pl,
        pct_expl_vs_hm=pct_expl_vs_hm,
        p=p,
        q=q,
    )


def table1_grid(p: float = 0.5, q: float = 0.5) -> GridResult:
    """All 21 upper-triangle cells of the reference comparison table.

    Hazard ratios a <= b range over {0.5, 1.0, 1.5, 2.0, 2.5, 3.0} with
    equal trial sizes and 1:1 allocation by default.
    """
    return _grid_from_values(TABLE1_VALUES, TABLE1_VALUES, p, q, lambda a, b: b >= a)


def figure2_grid(
    a_range=(0.2, 3.0),
    b_range=(0.2, 3.0),
    resolution: float = 0.05,
    p: float = 0.5,
    q: float = 0.5,
) -> GridResult:
    """Rectangular comparison grid for percentage-difference contours."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    a_values = np.round(np.arange(a_range[0], a_range[1] + resolution / 2, resolution), 12)
    b_values = np.round(np.arange(b_range[0], b_range[1] + resolution / 2, resolution), 12)
    if np.any(a_values <= 0) or np.any(b_values <= 0):
        raise ValueError("grid ranges must be positive")
    return _grid_from_values(a_values, b_values, p, q, lambda a, b: True)


# ---------------------------------------------------------------------------
# Baseline-hazard limit of the pooled fit
# ---------------------------------------------------------------------------


def breslow_limit_hazard(t, a: float, b: float, p: float, c_star: float):
    """Limiting baseline hazard of the pooled fit as a function of time.

    The pooled partial-likelihood procedure absorbs the mixture structure
    into its baseline estimate; against a true unit baseline the limit is

        [p a e^-at + (1-p) b e^-bt + e^-t]
        / [(p e^-at + (1-p) e^-bt) c_star + e^-t].
    """
    t = np.asarray(t, dtype=float)
    ea = np.exp(-a * t)
    eb = np.exp(-b * t)
    e1 = np.exp(-t)
    return (p * a * ea + (1 - p) * b * eb + e1) / ((p * ea + (1 - p) * eb) * c_star + e1)


def breslow_limit_at_zero(a: float, b: float, p: float, c_star: float) -> float:
    return (p * a + (1 - p) * b + 1.0) / (c_star + 1.0)


def breslow_limit_at_infinity(a: float, b: float, p: float, c_star: float) -> float:
    # the slowest-decaying treated group dominates the tail
    return min(a, b) / c_star


@dataclass(frozen=True)
class BreslowComparison:
    """Analytic baseline-hazard limit versus a pooled-simulation estimate.

    ``block_times``/``block_hazard`` hold the smoothed empirical curve:
    baseline-hazard increments of the pooled fit summed over consecutive
    windows of ``window`` events and divided by the window's time span
    (the unit-hazard reference).  Raw per-event increments are far too
    noisy to compare pointwise.
    """

    t_grid: np.ndarray
    analytic: np.ndarray
    block_times: np.ndarray
    block_hazard: np.ndarray
    n_subjects: int
    window: int
    seed: int
    fitted_c: float
    a: float
    b: float
    p: float
    c_star: float

    def __post_init__(self):
        if np.any(self.analytic <= 0):
            raise ValueError("analytic hazard curve must be positive")

    def binned(self, t_lo: float, t_hi: float, n_bins: int):
        """Average empirical blocks inside equal-width time bins.

        Returns (bin_centers, empirical_means, analytic_means) where the
        analytic means average the limit curve over the same block
        midpoints, so both sides estimate the identical functional.
        """
        edges = np.linspace(t_lo, t_hi, n_bins + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
        emp = np.full(n_bins, np.nan)
        ana = np.full(n_bins, np.nan)
        which = np.digitize(self.block_times, edges) - 1
        for i in range(n_bins):
            sel = which == i
            if not np.any(sel):
                continue
            emp[i] = float(np.mean(self.block_hazard[sel]))
            ana[i] = float(
                np.mean(breslow_limit_hazard(self.block_times[sel], self.a, self.b, self.p, self.c_star))
            )
        return centers, emp, ana


def _example4_pool(a: float, b: float, p: float, n_subjects: int, seed: int) -> TrialDataset:
    """Two trials, equal arms: treated Exp(a)/Exp(b), controls Exp(1)."""
    pairs = n_subjects // 2
    n1 = max(1, round(p * pairs))
    n2 = max(1, pairs - n1)
    rng = replicate_stream(seed, 0)
    groups = []
    for label, rate, size, arm in (
        ("trial1", a, n1, 1.0),
        ("trial1", 1.0, n1, 0.0),
        ("trial2", b, n2, 1.0),
        ("trial2", 1.0, n2, 0.0),
    ):
        times = rng.exponential(scale=1.0 / rate, size=size)
        groups.append(
            TrialDataset(
                times=times,
                events=np.ones(size, dtype=np.int64),
                covariates=np.full((size, 1), arm),
                trial_ids=np.full(size, label, dtype=object),
                label=label,
            )
        )
    return pool(groups)


def breslow_limit(
    a: float,
    b: float,
    p: float,
    c_star: float,
    t_grid,
    n_subjects: int = 200_000,
    seed: int = 0,
    window: int = 200,
) -> BreslowComparison:
    """Analytic baseline-hazard limit plus its large-sample simulation check.

    ``c_star`` should be the pooled-fit limit for (a, b, p) under 1:1
    allocation (q = 0.5).  The empirical side simulates the four
    exponential groups, fits the pooled model, and smooths the baseline
    increments over ``window``-event blocks before forming hazard ratios
    against the unit-hazard reference.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    pooled = _example4_pool(a, b, p, n_subjects, seed)
    fit = fit_cox(pooled)
    curve = breslow_cumhaz(pooled, fit.beta_hat)
    n_blocks = curve.event_times.size // window
    edges_idx = np.arange(1, n_blocks + 1) * window - 1
    edge_t = np.r_[0.0, curve.event_times[edges_idx]]
    edge_h = np.r_[0.0, curve.cumulative[edges_idx]]
    spans = np.diff(edge_t)
    block_hazard = np.diff(edge_h) / spans
    block_times = 0.5 * (edge_t[:-1] + edge_t[1:])
    return BreslowComparison(
        t_grid=t_grid,
        analytic=breslow_limit_hazard(t_grid, a, b, p, c_star),
        block_times=block_times,
        block_hazard=block_hazard,
        n_subjects=n_subjects,
        window=window,
        seed=seed,
        fitted_c=float(np.exp(fit.beta_hat[0])),
        a=a,
        b=b,
        p=p,
        c_star=c_star,
    )


# ---------------------------------------------------------------------------
# Information projection characterizing the harmonic-mean effect
# ---------------------------------------------------------------------------


def kl_objective(theta, alpha, beta, p: float, dist: CovariateDistribution) -> float:
    """Expected working-model log likelihood, up to theta-free terms.

    Under the two-trial mixture, E[H0(T) | Z] = p e^{-alpha'Z} +
    (1-p) e^{-beta'Z}, so the objective reduces to the finite sum

        sum_z pi_z [theta'z - e^{theta'z} (p e^{-alpha'z} + (1-p) e^{-beta'z})].

    Maximizing it is the same as minimizing the Kullback-Leibler distance
    from the true mixture to the working model, and the maximizer is the
    harmonic-mean combined effect.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    z = dist.support
    pi = dist.probs
    mix = p * np.exp(-z @ alpha) + (1 - p) * np.exp(-z @ beta)
    return float(pi @ (z @ theta - np.exp(z @ theta) * mix))


def kl_gradient(theta, alpha, beta, p: float, dist: CovariateDistribution) -> np.ndarray:
    """Gradient of :func:`kl_objective`; zero exactly at the harmonic-mean effect."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    z = dist.support
    pi = dist.probs
    mix = p * np.exp(-z @ alpha) + (1 - p) * np.exp(-z @ beta)
    w = pi * (1.0 - np.exp(z @ theta) * mix)
    return w @ z


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_sweep_csv(result: SweepResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "t_max",
                "theta_pl_mean",
                "theta_pl_p2_5",
                "theta_pl_p97_5",
                "theta_m_mean",
                "theta_m_p2_5",
                "theta_m_p97_5",
                "censored_fraction",
                "n_failed",
                "replicates",
            ]
        )
        for i in range(result.t_max.size):
            w.writerow(
                [
                    _fmt(result.t_max[i]),
                    _fmt(result.theta_pl_mean[i]),
                    _fmt(result.theta_pl_lo[i]),
                    _fmt(result.theta_pl_hi[i]),
                    _fmt(result.theta_m_mean[i]),
                    _fmt(result.theta_m_lo[i]),
                    _fmt(result.theta_m_hi[i]),
                    _fmt(result.censored_fraction[i]),
                    int(result.n_failed[i]),
                    result.replicates,
                ]
            )


def write_grid_csv(result: GridResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "a",
                "b",
                "c_hm",
                "c_pl",
                "exp_theta_l",
                "c_l",
                "pct_hm_vs_pl",
                "pct_expl_vs_pl",
                "pct_expl_vs_hm",
            ]
        )
        for i, a in enumerate(result.a_values):
            for j, b in enumerate(result.b_values):
                if not np.isfinite(result.c_pl[i, j]):
                    continue
                w.writerow(
                    [
                        _fmt(a),
                        _fmt(b),
                        _fmt(result.c_hm[i, j]),
                        _fmt(result.c_pl[i, j]),
                        _fmt(result.exp_theta_l[i, j]),
                        _fmt(result.c_l[i, j]),
                        _fmt(result.pct_hm_vs_pl[i, j]),
                        _fmt(result.pct_expl_vs_pl[i, j]),
                        _fmt(result.pct_expl_vs_hm[i, j]),
                    ]
                )


def write_ordering_csv(reports, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            [
                "a",
                "b",
                "p",
                "q",
                "c_hm",
                "exp_theta_l",
                "c_l",
                "c_pl",
                "chain_hm_holds",
                "chain_pl_holds",
                "boundary",
            ]
        )
        for r in reports:
            w.writerow(
                [
                    _fmt(r.a),
                    _fmt(r.b),
                    _fmt(r.p),
                    _fmt(r.q),
                    _fmt(r.c_hm),
                    _fmt(r.exp_theta_l),
                    _fmt(r.c_l),
                    _fmt(r.c_pl),
                    int(r.chain_hm_holds),
                    int(r.chain_pl_holds),
                    int(r.boundary),
                ]
            )


def write_breslow_csv(comparison: BreslowComparison, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["series", "t", "value"])
        for t, v in zip(comparison.t_grid, comparison.analytic):
            w.writerow(["analytic", _fmt(t), _fmt(v)])
        for t, v in zip(comparison.block_times, comparison.block_hazard):
            w.writerow(["empirical", _fmt(t), _fmt(v)])
