"""Patient-line data model, covariate laws, and the trial simulator.

Datasets are stored columnwise in read-only numpy arrays and are safe to
share across threads.  Simulation streams are counter-based (Philox keyed
by ``(master_seed, replicate)``), so replicate r always sees the same
stream no matter how many workers run or in what order they are
scheduled.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatchError, ParseError, SchemaError

__all__ = [
    "SubjectRecord",
    "TrialDataset",
    "CovariateDistribution",
    "NoCensoring",
    "AdministrativeCensoring",
    "ExponentialCensoring",
    "CensoringScheme",
    "IdentityBaseline",
    "WeibullBaseline",
    "Baseline",
    "ScenarioSpec",
    "replicate_stream",
    "simulate_trial",
    "simulate_scenario",
    "censor_administrative",
    "pool",
    "read_patient_csv",
    "write_patient_csv",
    "scenario_from_json",
    "scenario_to_json",
]


@dataclass(frozen=True)
class SubjectRecord:
    """One patient line: follow-up time, event flag, covariates, trial id."""

    time: float
    event: int
    covariates: tuple[float, ...]
    trial_id: str


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Columnar survival dataset with per-record trial labels.

    ``times`` are nonnegative follow-up times, ``events`` is 1 for an
    observed event and 0 for a censored record, ``covariates`` is an
    (n, k) matrix, and ``trial_ids`` labels the trial each record came
    from (pooled datasets carry mixed labels).
    """

    times: np.ndarray
    events: np.ndarray
    covariates: np.ndarray
    trial_ids: np.ndarray
    label: str = "trial"

    def __post_init__(self):
        times = _frozen(np.asarray(self.times, dtype=float))
        events = _frozen(np.asarray(self.events, dtype=np.int64))
        cov = np.asarray(self.covariates, dtype=float)
        if cov.ndim != 2:
            raise ValueError("covariates must be a 2-D (n, k) array")
        cov = _frozen(cov)
        ids = _frozen(np.asarray(self.trial_ids, dtype=object))
        n = times.shape[0]
        if n == 0:
            raise ValueError("dataset must be nonempty")
        if events.shape != (n,) or cov.shape[0] != n or ids.shape != (n,):
            raise DimensionMismatchError("column lengths disagree")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise ValueError("times must be finite and nonnegative")
        if not np.all((events == 0) | (events == 1)):
            raise ValueError("events must be 0 or 1")
        if not np.all(np.isfinite(cov)):
            raise ValueError("covariates must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "trial_ids", ids)

    @classmethod
    def from_records(cls, records: Sequence[SubjectRecord], label: str = "trial") -> "TrialDataset":
        if not records:
            raise ValueError("dataset must be nonempty")
        k = len(records[0].covariates)
        if any(len(r.covariates) != k for r in records):
            raise DimensionMismatchError("records disagree on covariate dimension")
        return cls(
            times=np.array([r.time for r in records]),
            events=np.array([r.event for r in records]),
            covariates=np.array([r.covariates for r in records], dtype=float).reshape(len(records), k),
            trial_ids=np.array([r.trial_id for r in records], dtype=object),
            label=label,
        )

    def __len__(self) -> int:
        return self.times.shape[0]

    @property
    def k(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @property
    def subjects(self) -> list[SubjectRecord]:
        return [
            SubjectRecord(float(t), int(e), tuple(z), str(i))
            for t, e, z, i in zip(self.times, self.events, self.covariates, self.trial_ids)
        ]

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrialDataset):
            return NotImplemented
        return (
            self.label == other.label
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.events, other.events)
            and np.array_equal(self.covariates, other.covariates)
            and bool(np.all(self.trial_ids == other.trial_ids))
        )


@dataclass(frozen=True, eq=False)
class CovariateDistribution:
    """Finite discrete law of the covariate vector Z.

    ``support`` is an (m, k) matrix of distinct points and ``probs`` the
    matching probabilities (positive, summing to one within 1e-12).  All
    expectations over Z reduce to finite sums against this table.
    """

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim != 2 or support.shape[0] == 0:
            raise ValueError("support must be a nonempty (m, k) array")
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (support.shape[0],):
            raise DimensionMismatchError("probs length must match support")
        if np.any(probs <= 0):
            raise ValueError("probabilities must be strictly positive")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        if len({tuple(row) for row in support}) != support.shape[0]:
            raise ValueError("support points must be distinct")
        object.__setattr__(self, "support", _frozen(support))
        object.__setattr__(self, "probs", _frozen(probs))

    @classmethod
    def bernoulli(cls, q: float) -> "CovariateDistribution":
        """Binary arm indicator with P(Z=1) = q."""
        if not 0 < q < 1:
            raise ValueError("q must lie in (0, 1)")
        return cls(support=np.array([[0.0], [1.0]]), probs=np.array([1.0 - q, q]))

    @property
    def k(self) -> int:
        return self.support.shape[1]

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.support

    def arm_probability(self) -> float | None:
        """P(Z=1) when this is a binary {0,1} arm indicator, else None."""
        if self.k != 1 or self.support.shape[0] != 2:
            return None
        vals = sorted(float(v) for v in self.support[:, 0])
        if vals != [0.0, 1.0]:
            return None
        return float(self.probs[self.support[:, 0] == 1.0][0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CovariateDistribution):
            return NotImplemented
        return np.array_equal(self.support, other.support) and np.array_equal(
            self.probs, other.probs
        )


@dataclass(frozen=True)
class NoCensoring:
    """All event times are observed."""


@dataclass(frozen=True)
class AdministrativeCensoring:
    """Every subject is censored at the fixed study end ``t_max``."""

    t_max: float

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")


@dataclass(frozen=True)
class ExponentialCensoring:
    """Independent exponential censoring with the given rate."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")


CensoringScheme = NoCensoring | AdministrativeCensoring | ExponentialCensoring


@dataclass(frozen=True)
class IdentityBaseline:
    """Unit-exponential baseline: cumulative hazard H0(t) = t."""

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return u


@dataclass(frozen=True)
class WeibullBaseline:
    """Weibull baseline with H0(t) = (t / scale) ** shape."""

    shape: float
    scale: float = 1.0

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("shape and scale must be positive")

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.scale * np.power(u, 1.0 / self.shape)


Baseline = IdentityBaseline | WeibullBaseline


@dataclass(frozen=True, eq=False)
class ScenarioSpec:
    """Full generative description of a multi-trial simulation.

    ``trial_effects`` holds one log hazard-ratio vector per trial,
    ``sizes`` the per-trial subject counts (so the mixing proportion is
    sizes[0] / sum(sizes) in the two-trial case), and ``baseline`` the
    inverse cumulative hazard used for inverse-transform sampling.
    """

    trial_effects: tuple
    sizes: tuple
    covariate_dist: CovariateDistribution
    baseline: Baseline = field(default_factory=IdentityBaseline)
    censoring: CensoringScheme = field(default_factory=NoCensoring)
    seed: int = 0

    def __post_init__(self):
        effects = tuple(_frozen(np.atleast_1d(np.asarray(e, dtype=float))) for e in self.trial_effects)
        sizes = tuple(int(s) for s in self.sizes)
        if len(effects) < 2:
            raise ValueError("scenario needs at least 2 trials")
        if len(sizes) != len(effects):
            raise DimensionMismatchError("one size per trial effect required")
        if any(s < 1 for s in sizes):
            raise ValueError("trial sizes must be positive")
        k = self.covariate_dist.k
        if any(e.shape != (k,) for e in effects):
            raise DimensionMismatchError(
                f"effect vectors must have dimension {k} to match the covariate law"
            )
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "trial_effects", effects)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def mixing_p(self) -> float:
        """Limiting share of pooled subjects contributed by trial 1."""
        return self.sizes[0] / sum(self.sizes)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScenarioSpec):
            return NotImplemented
        return (
            len(self.trial_effects) == len(other.trial_effects)
            and all(np.array_equal(a, b) for a, b in zip(self.trial_effects, other.trial_effects))
            and self.sizes == other.sizes
            and self.covariate_dist == other.covariate_dist
            and self.baseline == other.baseline
            and self.censoring == other.censoring
            and self.seed == other.seed
        )


def replicate_stream(master_seed: int, replicate: int) -> np.random.Generator:
    """Independent counter-based stream for one Monte Carlo replicate.

    The Philox key is built directly from ``(master_seed, replicate)``,
    so streams do not depend on spawn order or worker scheduling.
    """
    if not 0 <= master_seed < 2**64:
        raise ValueError("master_seed must be a 64-bit unsigned integer")
    if not 0 <= replicate < 2**64:
        raise ValueError("replicate must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(key=(replicate << 64) | master_seed))


def simulate_trial(
    effect,
    size: int,
    dist: CovariateDistribution,
    baseline: Callable | None = None,
    censoring: CensoringScheme = NoCensoring(),
    rng: np.random.Generator | None = None,
    label: str = "trial",
) -> TrialDataset:
    """Draw one trial from a proportional-hazards model.

    Covariates are sampled from ``dist``; latent event times come from
    inverse-transform sampling T = H0^{-1}(E / exp(effect' Z)) with E a
    unit exponential.  Draw order is fixed (covariates, event times,
    censoring times) so a given stream always produces the same dataset.
    """
    if size < 1:
        raise ValueError("size must be at least 1")
    effect = np.atleast_1d(np.asarray(effect, dtype=float))
    if effect.shape != (dist.k,):
        raise DimensionMismatchError("effect dimension must match the covariate law")
    rng = rng if rng is not None else np.random.default_rng()
    idx = rng.choice(dist.support.shape[0], size=size, p=dist.probs)
    z = dist.support[idx]
    unit = rng.exponential(size=size)
    latent = unit / np.exp(z @ effect)
    if baseline is not None:
        latent = np.asarray(baseline(latent), dtype=float)
    if isinstance(censoring, NoCensoring):
        times, events = latent, np.ones(size, dtype=np.int64)
    elif isinstance(censoring, AdministrativeCensoring):
        events = (latent <= censoring.t_max).astype(np.int64)
        times = np.minimum(latent, censoring.t_max)
    elif isinstance(censoring, ExponentialCensoring):
        c = rng.exponential(scale=1.0 / censoring.rate, size=size)
        events = (latent <= c).astype(np.int64)
        times = np.minimum(latent, c)
    else:
        raise TypeError(f"unknown censoring scheme {censoring!r}")
    return TrialDataset(
        times=times,
        events=events,
        covariates=z,
        trial_ids=np.full(size, label, dtype=object),
        label=label,
    )


def simulate_scenario(spec: ScenarioSpec, replicate: int = 0) -> list[TrialDataset]:
    """Simulate every trial of a scenario on the replicate's own stream.

    Identical (spec, replicate) pairs produce bit-identical datasets
    regardless of how many worker threads are running elsewhere.
    """
    rng = replicate_stream(spec.seed, replicate)
    out = []
    for i, (effect, size) in enumerate(zip(spec.trial_effects, spec.sizes), start=1):
        out.append(
            simulate_trial(
                effect,
                size,
                spec.covariate_dist,
                baseline=spec.baseline,
                censoring=spec.censoring,
                rng=rng,
                label=f"trial{i}",
            )
        )
    return out


def censor_administrative(data: TrialDataset, t_max: float) -> TrialDataset:
    """Apply a fixed study-end time to an (ideally uncensored) dataset.

    Records keep their event flag only when the observed time is within
    the study window; times are capped at ``t_max``.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    if not np.isfinite(t_max):
        return data
    events = np.where(data.times <= t_max, data.events, 0)
    return TrialDataset(
        times=np.minimum(data.times, t_max),
        events=events,
        covariates=data.covariates,
        trial_ids=data.trial_ids,
        label=data.label,
    )


def pool(trials: Sequence[TrialDataset]) -> TrialDataset:
    """Concatenate trials into one dataset, keeping per-record trial ids."""
    if not trials:
        raise ValueError("nothing to pool")
    if len(trials) == 1:
        return trials[0]
    k = trials[0].k
    if any(t.k != k for t in trials):
        raise DimensionMismatchError("pooled trials must share the covariate dimension")
    return TrialDataset(
        times=np.concatenate([t.times for t in trials]),
        events=np.concatenate([t.events for t in trials]),
        covariates=np.vstack([t.covariates for t in trials]),
        trial_ids=np.concatenate([t.trial_ids for t in trials]),
        label="pooled",
    )


# ---------------------------------------------------------------------------
# Patient-line CSV: header trial_id,time,event,z1,...,zk
# ---------------------------------------------------------------------------


def write_patient_csv(datasets: Sequence[TrialDataset], path) -> None:
    """Write datasets to the patient-line CSV schema (UTF-8)."""
    k = datasets[0].k if datasets else 0
    if any(d.k != k for d in datasets):
        raise DimensionMismatchError("datasets disagree on covariate dimension")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial_id", "time", "event"] + [f"z{j + 1}" for j in range(k)])
        for d in datasets:
            for t, e, z, tid in zip(d.times, d.events, d.covariates, d.trial_ids):
                writer.writerow([tid, repr(float(t)), int(e)] + [repr(float(v)) for v in z])


def read_patient_csv(path) -> list[TrialDataset]:
    """Read a patient-line CSV back into one dataset per trial id.

    Trials come back in order of first appearance; each dataset's label is
    its trial id, so write/read round-trips on files produced by
    :func:`write_patient_csv`.
    """
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("empty file", missing=["trial_id", "time", "event"]) from None
        expected = ["trial_id", "time", "event"]
        missing = [c for c in expected if c not in header]
        if missing:
            raise SchemaError("bad patient-line header", missing=missing)
        k = len(header) - 3
        if header[:3] != expected or header[3:] != [f"z{j + 1}" for j in range(k)]:
            raise SchemaError(
                f"header must be trial_id,time,event,z1,...,zk; got {','.join(header)}"
            )
        groups: dict[str, list] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + k:
                raise ParseError(f"expected {3 + k} fields, got {len(row)}", line=lineno)
            tid = row[0]
            try:
                t = float(row[1])
                e = int(row[2])
                z = [float(v) for v in row[3:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not np.isfinite(t) or t < 0:
                raise ParseError(f"time must be finite and nonnegative, got {row[1]}", line=lineno)
            if e not in (0, 1):
                raise ParseError(f"event must be 0 or 1, got {row[2]}", line=lineno)
            if not all(np.isfinite(z)):
                raise ParseError("covariates must be finite", line=lineno)
            if tid not in groups:
                groups[tid] = []
                order.append(tid)
            groups[tid].append((t, e, z))
    out = []
    for tid in order:
        rows = groups[tid]
        out.append(
            TrialDataset(
                times=np.array([r[0] for r in rows]),
                events=np.array([r[1] for r in rows]),
                covariates=np.array([r[2] for r in rows], dtype=float).reshape(len(rows), k),
                trial_ids=np.full(len(rows), tid, dtype=object),
                label=tid,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Scenario JSON config mirroring ScenarioSpec field for field
# ---------------------------------------------------------------------------

_CENSORING_KINDS = {
    "none": NoCensoring,
    "administrative": AdministrativeCensoring,
    "exponential": ExponentialCensoring,
}


def _censoring_to_json(c: CensoringScheme) -> dict:
    if isinstance(c, NoCensoring):
        return {"kind": "none"}
    if isinstance(c, AdministrativeCensoring):
        return {"kind": "administrative", "t_max": c.t_max}
    return {"kind": "exponential", "rate": c.rate}


def _censoring_from_json(obj: dict) -> CensoringScheme:
    kind = obj.get("kind")
    if kind == "none":
        return NoCensoring()
    if kind == "administrative":
        return AdministrativeCensoring(t_max=float(obj["t_max"]))
    if kind == "exponential":
        return ExponentialCensoring(rate=float(obj["rate"]))
    raise ParseError(f"unknown censoring kind {kind!r}")


def _baseline_to_json(b: Baseline) -> dict:
    if isinstance(b, IdentityBaseline):
        return {"kind": "identity"}
    return {"kind": "weibull", "shape": b.shape, "scale": b.scale}


def _baseline_from_json(obj: dict) -> Baseline:
    kind = obj.get("kind")
    if kind == "identity":
        return IdentityBaseline()
    if kind == "weibull":
        return WeibullBaseline(shape=float(obj["shape"]), scale=float(obj.get("scale", 1.0)))
    raise ParseError(f"unknown baseline kind {kind!r}")


def scenario_to_json(spec: ScenarioSpec) -> dict:
    return {
        "trial_effects": [[float(v) for v in e] for e in spec.trial_effects],
        "sizes": list(spec.sizes),
        "covariate_dist": {
            "support": [[float(v) for v in row] for row in spec.covariate_dist.support],
            "probs": [float(v) for v in spec.covariate_dist.probs],
        },
        "baseline": _baseline_to_json(spec.baseline),
        "censoring": _censoring_to_json(spec.censoring),
        "seed": spec.seed,
    }


def scenario_from_json(obj) -> ScenarioSpec:
    """Build a ScenarioSpec from a parsed JSON object or a file path."""
    if isinstance(obj, (str, bytes)) or hasattr(obj, "__fspath__"):
        with open(obj, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    try:
        dist = CovariateDistribution(
            support=np.asarray(obj["covariate_dist"]["support"], dtype=float),
            probs=np.asarray(obj["covariate_dist"]["probs"], dtype=float),
        )
        return ScenarioSpec(
            trial_effects=tuple(np.asarray(e, dtype=float) for e in obj["trial_effects"]),
            sizes=tuple(int(s) for s in obj["sizes"]),
            covariate_dist=dist,
            baseline=_baseline_from_json(obj.get("baseline", {"kind": "identity"})),
            censoring=_censoring_from_json(obj.get("censoring", {"kind": "none"})),
            seed=int(obj.get("seed", 0)),
        )
    except KeyError as exc:
        raise SchemaError(f"scenario config missing field {exc}") from None


def scenario_with(spec: ScenarioSpec, **changes) -> ScenarioSpec:
    """Return a copy of the scenario with the given fields replaced."""
    return replace(spec, **changes)
