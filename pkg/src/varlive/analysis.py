"""Estimators, effective sample size, bootstrap errors, and efficiency gains.

Everything here consumes immutable runs and returns plain numbers, so the
experiment layer can fan out over ensembles without shared state.  The two
conventions that matter:

* weighted quantiles place each sorted value at the midpoint of its weight
  interval (cumulative weight minus half its own) and interpolate linearly,
  which reduces exactly to the ordinary sample quantile under equal weights;
* sampling errors come from resampling whole threads with replacement,
  optionally stratified so the initial-run threads are drawn separately
  from the dynamically added ones.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .runs import (
    NestedRun,
    RunProvenance,
    combine_runs,
    point_log_weights,
    posterior_weights,
    split_into_threads,
)

__all__ = [
    "EstimatorId",
    "ESTIMATOR_KINDS",
    "estimator_from_key",
    "log_evidence_estimate",
    "weighted_quantile",
    "estimate",
    "information_content",
    "bootstrap_resample",
    "BootstrapError",
    "bootstrap_error",
    "jackknife_std_sigma",
    "GainEstimate",
    "efficiency_gain",
]

ESTIMATOR_KINDS = (
    "log_z",
    "mean_theta1",
    "median_theta1",
    "credible_theta1",
    "second_moment_theta1",
    "mean_radius",
    "median_radius",
)


@dataclass(frozen=True)
class EstimatorId:
    """Which statistic to extract from a run; credible_theta1 carries its
    one-tailed probability level q."""

    kind: str
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "credible_theta1":
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ValueError("credible_theta1 needs q in (0, 1)")
        elif self.q is not None:
            raise ValueError(f"{self.kind} takes no level")

    @property
    def key(self) -> str:
        if self.kind == "credible_theta1":
            return f"credible_theta1:{self.q:g}"
        return self.kind


def estimator_from_key(key: str) -> EstimatorId:
    if ":" in key:
        kind, _, level = key.partition(":")
        return EstimatorId(kind, float(level))
    return EstimatorId(key)


LOG_Z = EstimatorId("log_z")
MEAN_THETA1 = EstimatorId("mean_theta1")
MEDIAN_THETA1 = EstimatorId("median_theta1")
SECOND_MOMENT_THETA1 = EstimatorId("second_moment_theta1")
MEAN_RADIUS = EstimatorId("mean_radius")
MEDIAN_RADIUS = EstimatorId("median_radius")


def log_evidence_estimate(run: NestedRun) -> float:
    """Quadrature evidence over the dead points, in log space."""
    if len(run) == 0:
        raise ValueError("empty run has no evidence estimate")
    terms = run.log_l + point_log_weights(run)
    m = float(terms.max())
    return m + math.log(float(np.exp(terms - m).sum()))


def weighted_quantile(values, weights, q: float) -> float:
    """Quantile of a weighted sample, midpoint convention.

    Sorted values sit at cumulative weight minus half their own weight
    (normalized); the quantile interpolates linearly between them and clamps
    at the extremes.  Equal weights reduce this to the ordinary sample
    quantile with (i + 1/2)/N plotting positions.
    """
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.shape != weights.shape or values.size == 0:
        raise ValueError("values and weights must be equal-length, nonempty")
    if np.any(weights < 0.0) or weights.sum() <= 0.0:
        raise ValueError("weights must be nonnegative with positive total")
    order = np.argsort(values, kind="stable")
    v = values[order]
    w = weights[order] / weights.sum()
    positions = np.cumsum(w) - 0.5 * w
    return float(np.interp(q, positions, v))


def _values_for(run: NestedRun, eid: EstimatorId) -> np.ndarray:
    if eid.kind in ("mean_theta1", "median_theta1", "credible_theta1"):
        return run.theta1
    if eid.kind == "second_moment_theta1":
        return run.theta1 * run.theta1
    return run.radius


def estimate(run: NestedRun, eid: EstimatorId) -> float:
    """Posterior-weighted statistic of the run."""
    if len(run) == 0:
        raise ValueError("empty run has no estimates")
    if eid.kind == "log_z":
        return log_evidence_estimate(run)
    p = posterior_weights(run)
    vals = _values_for(run, eid)
    if eid.kind in ("mean_theta1", "second_moment_theta1", "mean_radius"):
        return float(np.sum(p * vals))
    q = eid.q if eid.kind == "credible_theta1" else 0.5
    return weighted_quantile(vals, p, q)


def information_content(run: NestedRun) -> float:
    """Effective number of posterior samples, exp of the weight entropy."""
    p = posterior_weights(run)
    nz = p[p > 0.0]
    return float(np.exp(-np.sum(nz * np.log(nz))))


def bootstrap_resample(run: NestedRun, rng,
                       separate_initial: bool = False) -> NestedRun:
    """Resample whole threads with replacement, preserving the thread count.

    With separate_initial the initial-run threads (identified through
    provenance) form their own resampling class, so the constant-count
    scaffold of a dynamic run is preserved in every replication.
    """
    threads = split_into_threads(run)
    if separate_initial:
        init_ids = run.provenance.init_thread_ids
        if init_ids is None:
            raise ValueError(
                "separate_initial requires init thread ids in provenance")
        init_set = set(init_ids)
        split = [([th for th in threads if th.thread_id in init_set], True),
                 ([th for th in threads if th.thread_id not in init_set],
                  False)]
        classes = [(cls, is_init) for cls, is_init in split if cls]
    else:
        classes = [(threads, False)]
    pieces = []
    new_init: list[int] = []
    next_id = 0
    for cls, is_init in classes:
        picks = rng.integers(0, len(cls), size=len(cls))
        for pick in picks:
            th = dataclasses.replace(cls[int(pick)], thread_id=next_id)
            if is_init:
                new_init.append(next_id)
            pieces.append(th.to_run(run.model))
            next_id += 1
    out = combine_runs(pieces)
    prov = run.provenance
    return out.with_provenance(RunProvenance(
        algorithm="bootstrap", seed=None, n_init=prov.n_init,
        goal_g=prov.goal_g, sample_budget=prov.sample_budget,
        importance_variant=prov.importance_variant,
        init_thread_ids=tuple(new_init) if separate_initial else None))


@dataclass(frozen=True)
class BootstrapError:
    """Replication statistics for one estimator on one run."""

    replicates: np.ndarray

    @property
    def std(self) -> float:
        return float(np.std(self.replicates, ddof=1))

    def credible_upper(self, q: float) -> float:
        n = self.replicates.size
        return weighted_quantile(self.replicates, np.full(n, 1.0 / n), q)


def bootstrap_error(run: NestedRun, eid: EstimatorId, n_reps: int, rng,
                    separate_initial: bool | None = None) -> BootstrapError:
    """Thread-bootstrap sampling error of one estimator.

    separate_initial=None stratifies automatically whenever the run's
    provenance identifies its initial threads.
    """
    if n_reps < 2:
        raise ValueError("need at least 2 replications")
    if separate_initial is None:
        separate_initial = run.provenance.init_thread_ids is not None
    reps = np.empty(n_reps)
    for i in range(n_reps):
        reps[i] = estimate(bootstrap_resample(run, rng, separate_initial),
                           eid)
    return BootstrapError(replicates=reps)


def jackknife_std_sigma(results) -> float:
    """Jackknife uncertainty of the sample standard deviation; nan below
    three results."""
    x = np.asarray(results, dtype=float)
    n = x.size
    if n < 3:
        return float("nan")
    loo = np.empty(n)
    for i in range(n):
        loo[i] = np.std(np.delete(x, i), ddof=1)
    return float(math.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))


@dataclass(frozen=True)
class GainEstimate:
    gain: float
    sigma: float


def efficiency_gain(std_results, dyn_results, mean_samples_std: float,
                    mean_samples_dyn: float, n_boot: int = 1000,
                    rng=None) -> GainEstimate:
    """Variance ratio of the two arms, corrected by their sample-count ratio.

    The uncertainty bootstraps each arm's result set independently; the
    sample-count factor is treated as exact.
    """
    a = np.asarray(std_results, dtype=float)
    b = np.asarray(dyn_results, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("need at least 2 results per arm")
    var_a = float(np.var(a, ddof=1))
    var_b = float(np.var(b, ddof=1))
    if var_b == 0.0:
        raise ValueError("dynamic arm has zero variance")
    factor = mean_samples_std / mean_samples_dyn
    gain = (var_a / var_b) * factor
    if rng is None:
        rng = np.random.default_rng(0)
    reps = np.empty(n_boot)
    for i in range(n_boot):
        ra = a[rng.integers(0, a.size, size=a.size)]
        rb = b[rng.integers(0, b.size, size=b.size)]
        vb = np.var(rb, ddof=1)
        while vb == 0.0:  # degenerate draw, redo
            rb = b[rng.integers(0, b.size, size=b.size)]
            vb = np.var(rb, ddof=1)
        reps[i] = (np.var(ra, ddof=1) / vb) * factor
    return GainEstimate(gain=gain, sigma=float(np.std(reps, ddof=1)))
