"""Command-line surface: solve, estimate, simulate, sweep, table, grid, breslow.

Exit codes follow a fixed convention so pipelines can tell user error from
numeric failure: 0 success, 2 invalid input (flags, files, schemas),
3 solver or fit failure.  Every command that writes an output file also
writes ``<out>.manifest.json`` recording the seed, the full configuration,
and library versions; manifests carry no timestamps so reruns are
byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys

import numpy as np
import scipy

from . import __version__, analysis, data, estimators
from .cox import fit_cox
from .errors import HrmixError, ParseError, SchemaError

_INPUT_ERRORS = (ParseError, SchemaError, ValueError, KeyError, OSError, json.JSONDecodeError)


def _write_manifest(out_path, command: str, config: dict) -> None:
    payload = {
        "command": command,
        "config": config,
        "seed": config.get("seed"),
        "package": {"name": "hrmix", "version": __version__},
        "library_versions": {"numpy": np.__version__, "scipy": scipy.__version__},
    }
    payload["config_sha256"] = hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()
    ).hexdigest()
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _effect_json(effect: estimators.CombinedEffect) -> dict:
    return {
        "method": effect.method.value,
        "estimate": [float(v) for v in effect.estimate],
        "covariance": None
        if effect.covariance is None
        else [[float(v) for v in row] for row in effect.covariance],
        "mixing_p": float(effect.mixing_p),
    }


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _cmd_solve(args) -> int:
    if args.a <= 0 or args.b <= 0:
        raise ValueError("--a and --b must be positive")
    if not (0 < args.p < 1 and 0 < args.q < 1):
        raise ValueError("--p and --q must lie in (0, 1)")
    out = {
        "a": args.a,
        "b": args.b,
        "p": args.p,
        "q": args.q,
        "c_hm": estimators.c_hm_binary(args.a, args.b, args.p),
        "c_pl": estimators.solve_cpl_binary(args.a, args.b, args.p, args.q),
        "exp_theta_l": args.a**args.p * args.b ** (1 - args.p),
        "c_l": args.p * args.a + (1 - args.p) * args.b,
    }
    if args.tmax_H is not None:
        if args.tmax_H <= 0:
            raise ValueError("--tmax-H must be positive")
        out["H"] = args.tmax_H
        out["c_censored"] = estimators.solve_censored_binary(
            args.a, args.b, args.p, args.q, args.tmax_H
        )
    _print_json(out)
    return 0


def _load_aggregates(path):
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        dist = data.CovariateDistribution(
            support=np.asarray(obj["covariate_dist"]["support"], dtype=float),
            probs=np.asarray(obj["covariate_dist"]["probs"], dtype=float),
        )
        aggregates = [
            estimators.TrialAggregate(
                beta_hat=np.asarray(t["beta_hat"], dtype=float),
                covariance=np.asarray(t["covariance"], dtype=float),
                size=int(t["n"]),
                label=str(t.get("label", "")),
            )
            for t in obj["trials"]
        ]
    except KeyError as exc:
        raise SchemaError(f"aggregates file missing field {exc}") from None
    return aggregates, dist


def _empirical_dist(pooled: data.TrialDataset) -> data.CovariateDistribution:
    rows, counts = np.unique(pooled.covariates, axis=0, return_counts=True)
    return data.CovariateDistribution(support=rows, probs=counts / counts.sum())


def _cmd_estimate(args) -> int:
    scheme = (
        estimators.InverseVariance()
        if args.weights == "inverse-variance"
        else estimators.SizeProportional()
    )
    out: dict = {"weights": args.weights}
    if args.aggregates:
        aggregates, dist = _load_aggregates(args.aggregates)
    else:
        trials = data.read_patient_csv(args.lines)
        if len(trials) < 2:
            raise ValueError("need at least 2 trials in the patient-line file")
        fits = [fit_cox(t) for t in trials]
        aggregates = [
            estimators.TrialAggregate(
                beta_hat=f.beta_hat, covariance=f.covariance, size=len(t), label=t.label
            )
            for f, t in zip(fits, trials)
        ]
        pooled = data.pool(trials)
        dist = _empirical_dist(pooled)
        pooled_fit = fit_cox(pooled)
        out["pooled_mple"] = _effect_json(
            estimators.CombinedEffect(
                estimators.CombineMethod.POOLED_MPLE,
                pooled_fit.beta_hat,
                pooled_fit.covariance,
                aggregates[0].size / sum(a.size for a in aggregates),
            )
        )
        out["per_trial"] = [
            {
                "label": a.label,
                "n": a.size,
                "beta_hat": [float(v) for v in a.beta_hat],
                "covariance": [[float(v) for v in row] for row in a.covariance],
            }
            for a in aggregates
        ]
    out["linear_log"] = _effect_json(estimators.linear_log_hr(aggregates, scheme))
    out["linear_hr"] = _effect_json(estimators.linear_hr(aggregates, scheme, z=1.0))
    if len(aggregates) == 2:
        out["misspecified"] = _effect_json(estimators.theta_m_estimate(aggregates, dist))
        hm = estimators.theta_hm_estimate(aggregates, dist)
        out["harmonic_mean"] = _effect_json(hm)
        wald = estimators.wald_test(hm, null_value=args.null, component=0)
        out["wald_harmonic_mean"] = {
            "statistic": wald.statistic,
            "p_value": wald.p_value,
            "null_value": wald.null_value,
            "component": 0,
        }
    _print_json(out)
    return 0


def _load_scenario(args) -> data.ScenarioSpec:
    spec = data.scenario_from_json(args.scenario)
    if args.seed is not None:
        spec = data.scenario_with(spec, seed=args.seed)
    return spec


def _cmd_simulate(args) -> int:
    spec = _load_scenario(args)
    datasets = data.simulate_scenario(spec, replicate=args.replicate)
    data.write_patient_csv(datasets, args.out)
    _write_manifest(
        args.out,
        "simulate",
        {"scenario": data.scenario_to_json(spec), "replicate": args.replicate, "seed": spec.seed},
    )
    return 0


def _parse_grid(text: str):
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        vals.append(math.inf if tok.lower() in ("inf", "none") else float(tok))
    if not vals:
        raise ValueError("empty t_max grid")
    return vals


def _cmd_sweep(args) -> int:
    spec = _load_scenario(args)
    grid = _parse_grid(args.tmax_grid)
    result = analysis.bias_sweep(spec, grid, replicates=args.replicates, threads=args.threads)
    analysis.write_sweep_csv(result, args.out)
    _write_manifest(
        args.out,
        "sweep",
        {
            "scenario": data.scenario_to_json(spec),
            "tmax_grid": [float(v) for v in grid],
            "replicates": args.replicates,
            "seed": spec.seed,
        },
    )
    return 0


def _cmd_table(args) -> int:
    result = analysis.table1_grid(p=args.p, q=args.q)
    analysis.write_grid_csv(result, args.out)
    _write_manifest(args.out, "table", {"p": args.p, "q": args.q})
    return 0


def _cmd_grid(args) -> int:
    result = analysis.figure2_grid(
        a_range=(args.a_min, args.a_max),
        b_range=(args.b_min, args.b_max),
        resolution=args.step,
        p=args.p,
        q=args.q,
    )
    analysis.write_grid_csv(result, args.out)
    _write_manifest(
        args.out,
        "grid",
        {
            "a_min": args.a_min,
            "a_max": args.a_max,
            "b_min": args.b_min,
            "b_max": args.b_max,
            "step": args.step,
            "p": args.p,
            "q": args.q,
        },
    )
    return 0


def _cmd_breslow(args) -> int:
    if args.a <= 0 or args.b <= 0:
        raise ValueError("--a and --b must be positive")
    if not 0 < args.p < 1:
        raise ValueError("--p must lie in (0, 1)")
    c_star = estimators.solve_cpl_binary(args.a, args.b, args.p, 0.5)
    t_grid = np.linspace(0.0, args.t_max, args.points)
    comparison = analysis.breslow_limit(
        args.a,
        args.b,
        args.p,
        c_star,
        t_grid,
        n_subjects=args.subjects,
        seed=args.seed,
        window=args.window,
    )
    analysis.write_breslow_csv(comparison, args.out)
    _write_manifest(
        args.out,
        "breslow",
        {
            "a": args.a,
            "b": args.b,
            "p": args.p,
            "c_star": c_star,
            "t_max": args.t_max,
            "points": args.points,
            "subjects": args.subjects,
            "window": args.window,
            "seed": args.seed,
        },
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hrmix",
        description="Combined hazard-ratio definitions, estimates, and reproduction studies "
        "for pooled survival trials with heterogeneous treatment effects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="combined-effect definitions for two binary-arm trials")
    p.add_argument("--a", type=float, required=True, help="hazard ratio of trial 1")
    p.add_argument("--b", type=float, required=True, help="hazard ratio of trial 2")
    p.add_argument("--p", type=float, required=True, help="mixing proportion of trial 1")
    p.add_argument("--q", type=float, required=True, help="treated-arm probability")
    p.add_argument(
        "--tmax-H",
        dest="tmax_H",
        type=float,
        default=None,
        help="baseline cumulative hazard at study end; adds the censored pooled limit",
    )
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("estimate", help="combined effects with variances and a Wald test")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--aggregates", help="JSON file of per-trial aggregates")
    src.add_argument("--lines", help="patient-line CSV; per-trial and pooled fits are computed")
    p.add_argument(
        "--weights",
        choices=["size", "inverse-variance"],
        default="size",
        help="weight scheme for the linear combiners (default size-proportional)",
    )
    p.add_argument("--null", type=float, default=0.0, help="null value for the Wald test")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="draw one scenario replicate to a patient-line CSV")
    p.add_argument("--scenario", required=True, help="scenario JSON config")
    p.add_argument("--out", required=True)
    p.add_argument("--replicate", type=int, default=0)
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="censoring-bias sweep over study-end times")
    p.add_argument("--scenario", required=True, help="scenario JSON config (two trials)")
    p.add_argument(
        "--tmax-grid",
        dest="tmax_grid",
        required=True,
        help="comma-separated study-end times; 'inf' means uncensored",
    )
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads; results are identical for any value, and 1 is "
        "usually fastest for small trials (the per-replicate work is GIL-bound)",
    )
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("table", help="reference comparison table over the fixed (a, b) cells")
    p.add_argument("--out", required=True)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--q", type=float, default=0.5)
    p.set_defaults(func=_cmd_table)

    p = sub.add_parser("grid", help="combined-effect surfaces over a rectangular (a, b) grid")
    p.add_argument("--out", required=True)
    p.add_argument("--a-min", dest="a_min", type=float, default=0.2)
    p.add_argument("--a-max", dest="a_max", type=float, default=3.0)
    p.add_argument("--b-min", dest="b_min", type=float, default=0.2)
    p.add_argument("--b-max", dest="b_max", type=float, default=3.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--q", type=float, default=0.5)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("breslow", help="limiting pooled baseline hazard vs simulation")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subjects", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--t-max", dest="t_max", type=float, default=2.0)
    p.add_argument("--points", type=int, default=41)
    p.set_defaults(func=_cmd_breslow)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INPUT_ERRORS as exc:
        print(f"hrmix: input error: {exc}", file=sys.stderr)
        return 2
    except HrmixError as exc:
        print(f"hrmix: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
