"""Dynamic live-point allocation: importance functions and both schedulers.

Standard nested sampling spends the same effort everywhere.  The point of the
dynamic variants is to measure, per dead point, how much each region of the
shrinkage actually contributes to the targets of interest, then feed more
live points exactly there:

* evidence importance: the share of evidence at-or-above each contour,
  divided by the local live count (more points where evidence accrues and
  coverage is thin);
* parameter importance: the posterior weight itself (more points where
  posterior mass sits);
* a goal knob G in [0, 1] interpolating between the two, each term
  normalized to unit sum first.

Two schedulers realize an allocation.  The iterative one alternates between
recomputing importance on the merged run and spawning a batch of fresh
threads across the high-importance region, until a sample budget is spent.
The single-pass one smooths the importance profile of the initial run,
scales it to the remaining budget, and realizes the resulting count profile
in one sweep by opening threads at rising edges and censoring the oldest at
falling edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .models import ModelSpec
from .runs import (
    NestedRun,
    RunProvenance,
    combine_runs,
    live_point_counts,
    point_log_weights,
    posterior_weights,
)
from .sampler import SamplerConfig, sample_thread_batch, standard_run

__all__ = [
    "GoalConfig",
    "AlgorithmOneConfig",
    "AlgorithmTwoConfig",
    "ImportanceProfile",
    "importance_evidence",
    "importance_evidence_exact",
    "importance_param",
    "importance_tuned",
    "combined_importance",
    "dynamic_run_algorithm1",
    "savitzky_golay_smooth",
    "algorithm2_allocation",
    "dynamic_run_algorithm2",
]

_VARIANTS = ("standard", "exact", "tuned")


@dataclass(frozen=True)
class GoalConfig:
    """What to optimize allocation for.

    goal_g = 0 targets evidence accuracy, 1 targets parameter estimates,
    intermediate values mix the two normalized importances linearly.
    tuned_target maps a run to per-point values for the tuned variant;
    None means the first-coordinate values themselves.
    """

    goal_g: float
    importance_variant: str = "standard"
    tuned_target: Callable[[NestedRun], np.ndarray] | None = None

    def __post_init__(self):
        if not 0.0 <= self.goal_g <= 1.0:
            raise ValueError("goal_g must lie in [0, 1]")
        if self.importance_variant not in _VARIANTS:
            raise ValueError(f"importance_variant must be one of {_VARIANTS}")


@dataclass(frozen=True)
class AlgorithmOneConfig:
    n_init: int
    sample_budget: int
    fraction: float = 0.9
    n_batch: int = 1
    termination_fraction: float = 1e-3

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must be in (0, 1]")
        if self.n_batch < 1:
            raise ValueError("n_batch must be >= 1")
        if self.sample_budget < 1:
            raise ValueError("sample_budget must be positive")


@dataclass(frozen=True)
class AlgorithmTwoConfig:
    n_init: int
    total_budget: int
    smooth_window: int | None = None  # default 2 n_init + 1
    smooth_order: int = 3
    termination_fraction: float = 1e-3

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")
        if self.total_budget < 1:
            raise ValueError("total_budget must be positive")
        win = self.window
        if win % 2 == 0 or win <= self.smooth_order:
            raise ValueError("smooth_window must be odd and > smooth_order")

    @property
    def window(self) -> int:
        return self.smooth_window if self.smooth_window is not None \
            else 2 * self.n_init + 1


@dataclass(frozen=True)
class ImportanceProfile:
    """Per-point allocation pressure, aligned to run order; each field is
    nonnegative and combined sums to one."""

    imp_z: np.ndarray
    imp_param: np.ndarray
    combined: np.ndarray


def _require_points(run: NestedRun):
    if len(run) == 0:
        raise ValueError("importance of an empty run is undefined")


def _unit_sum(v: np.ndarray) -> np.ndarray:
    return v / np.sum(v)


def importance_evidence(run: NestedRun) -> np.ndarray:
    """Evidence importance: share of evidence at-or-above each contour per
    live point, i.e. (sum_{k>=i} L_k w_k) / n_i, normalized to unit sum."""
    _require_points(run)
    lw = point_log_weights(run) + run.log_l
    ln_tail = np.logaddexp.accumulate(lw[::-1])[::-1]
    counts = live_point_counts(run)
    return _unit_sum(np.exp(ln_tail - ln_tail.max()) / counts)


def importance_evidence_exact(run: NestedRun) -> np.ndarray:
    """Variance-derived refinement of the evidence importance.

    Weighs the strictly-above evidence and the point's own contribution by
    count-dependent factors; approaches the plain ratio form as counts grow.
    """
    _require_points(run)
    lw = point_log_weights(run) + run.log_l
    n = len(run)
    ln_above = np.full(n, -np.inf)
    if n > 1:
        ln_above[:-1] = np.logaddexp.accumulate(lw[::-1])[::-1][1:]
    counts = live_point_counts(run).astype(float)
    coef_tail = (counts + 1.0) / (np.sqrt(counts) * (counts + 2.0) ** 1.5)
    coef_self = np.sqrt(counts) / (counts + 2.0) ** 1.5
    scale = max(float(lw.max()), float(ln_above.max()))
    raw = coef_tail * np.exp(ln_above - scale) + coef_self * np.exp(lw - scale)
    return _unit_sum(raw)


def importance_param(run: NestedRun) -> np.ndarray:
    """Parameter importance: the posterior weights themselves."""
    _require_points(run)
    return posterior_weights(run)


def importance_tuned(run: NestedRun, target_values: Sequence[float],
                     global_mean: float) -> np.ndarray:
    """Estimator-specific parameter importance |f(theta_i) - f-bar| L_i w_i.

    Raises on the degenerate all-zero profile (every value at the mean);
    callers fall back to the plain parameter importance.
    """
    _require_points(run)
    vals = np.asarray(target_values, dtype=float)
    if vals.shape != run.log_l.shape:
        raise ValueError("target_values must align with the run")
    lw = point_log_weights(run) + run.log_l
    raw = np.abs(vals - global_mean) * np.exp(lw - lw.max())
    total = raw.sum()
    if total == 0.0:
        raise ValueError("tuned importance degenerate: all values at the mean")
    return raw / total


def combined_importance(run: NestedRun, goal: GoalConfig) -> ImportanceProfile:
    """Goal-weighted importance: (1-G) evidence part + G parameter part."""
    if goal.importance_variant == "exact":
        imp_z = importance_evidence_exact(run)
    else:
        imp_z = importance_evidence(run)
    if goal.importance_variant == "tuned":
        values = run.theta1 if goal.tuned_target is None \
            else np.asarray(goal.tuned_target(run), dtype=float)
        mean = float(np.sum(posterior_weights(run) * values))
        try:
            imp_param = importance_tuned(run, values, mean)
        except ValueError:
            imp_param = importance_param(run)
    else:
        imp_param = importance_param(run)
    if goal.goal_g == 0.0:
        combined = imp_z
    elif goal.goal_g == 1.0:
        combined = imp_param
    else:
        combined = _unit_sum((1.0 - goal.goal_g) * imp_z
                             + goal.goal_g * imp_param)
    return ImportanceProfile(imp_z=imp_z, imp_param=imp_param,
                             combined=combined)


def _merge_new_threads(run: NestedRun, threads, m: ModelSpec) -> NestedRun:
    parts = [run]
    for th in threads:
        piece = th.to_run(m)
        # empty init marker keeps the initial-thread bookkeeping intact
        parts.append(piece.with_provenance(RunProvenance(
            algorithm="thread", init_thread_ids=())))
    return combine_runs(parts)


def dynamic_run_algorithm1(m: ModelSpec, goal: GoalConfig,
                           cfg: AlgorithmOneConfig, rng=None,
                           seed: int | None = None) -> NestedRun:
    """Iterative scheduler: repeatedly spawn a batch of threads across the
    current high-importance region until the sample budget is spent."""
    if rng is None:
        rng = np.random.default_rng(seed)
    init_cfg = SamplerConfig(
        n_live=cfg.n_init, termination_fraction=cfg.termination_fraction,
        keep_final_live=True)
    run = standard_run(m, init_cfg, rng)
    next_id = cfg.n_init
    while len(run) < cfg.sample_budget:
        prof = combined_importance(run, goal).combined
        high = np.flatnonzero(prof > cfg.fraction * prof.max())
        j, k = int(high[0]), int(high[-1])
        start = -np.inf if j == 0 else float(run.log_l[j - 1])
        # one point past the top of the region; when the region reaches the
        # run's end, one point above the final contour
        end = float(run.log_l[k + 1]) if k + 1 < len(run) \
            else float(run.log_l[-1])
        if not start < end:  # degenerate single-contour region
            end = np.inf
        ids = range(next_id, next_id + cfg.n_batch)
        next_id += cfg.n_batch
        threads = sample_thread_batch(m, start, end, rng, ids)
        run = _merge_new_threads(run, threads, m)
    init_ids = run.provenance.init_thread_ids
    return run.with_provenance(RunProvenance(
        algorithm="dynamic_alg1", seed=seed, n_init=cfg.n_init,
        goal_g=goal.goal_g, sample_budget=cfg.sample_budget,
        importance_variant=goal.importance_variant,
        init_thread_ids=init_ids))


def savitzky_golay_smooth(values, window: int, order: int) -> np.ndarray:
    """Least-squares local polynomial smoothing.

    Sequences shorter than the window pass through unchanged; endpoints are
    smoothed with the window shrunk symmetrically around the point.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be odd and positive")
    if order < 0 or order >= window:
        raise ValueError("order must satisfy 0 <= order < window")
    vals = np.asarray(values, dtype=float)
    nv = vals.shape[0]
    if nv < window:
        return vals.copy()
    half = window // 2
    # interior: convolution with the midpoint least-squares coefficients
    offs = np.arange(-half, half + 1, dtype=float)
    design = np.vander(offs, order + 1, increasing=True)
    # first row of (A^T A)^-1 A^T evaluates the fitted polynomial at 0
    coeffs = np.linalg.lstsq(design, np.eye(window), rcond=None)[0][0]
    out = np.empty(nv)
    out[half:nv - half] = np.convolve(vals, coeffs[::-1], mode="valid")
    for i in list(range(half)) + list(range(nv - half, nv)):
        h = min(i, nv - 1 - i)
        if h == 0:
            out[i] = vals[i]
            continue
        o = np.arange(-h, h + 1, dtype=float)
        d = np.vander(o, min(order, 2 * h) + 1, increasing=True)
        c = np.linalg.lstsq(d, vals[i - h:i + h + 1], rcond=None)[0]
        out[i] = c[0]
    return out


def algorithm2_allocation(init_run: NestedRun, goal: GoalConfig,
                          cfg: AlgorithmTwoConfig) -> np.ndarray:
    """Supplement live counts n(L_i) the single-pass scheduler will realize.

    Smooths the initial run's combined importance, then scales it by the
    factor K (found by bisection) at which the expected supplement cost
    matches the remaining budget.  Each initial-run step spans 1/n_init in
    ln X in expectation and a supplement thread contributes about one point
    per unit ln X, so the expected cost of a profile is sum(n_i)/n_init.
    """
    n_init = cfg.n_init
    if cfg.total_budget < len(init_run):
        raise ValueError(
            f"total_budget {cfg.total_budget} infeasible: initial run "
            f"already holds {len(init_run)} samples")
    target_extra = cfg.total_budget - len(init_run)

    prof = combined_importance(init_run, goal).combined
    smooth = np.clip(savitzky_golay_smooth(prof, cfg.window,
                                           cfg.smooth_order), 0.0, None)

    def counts_for(k: float) -> np.ndarray:
        scaled = k * smooth
        return np.where(scaled > n_init, np.rint(scaled - n_init), 0.0)

    def cost(k: float) -> float:
        return float(counts_for(k).sum()) / n_init

    extra = np.zeros(len(init_run))
    if target_extra > 0 and smooth.max() > 0.0:
        hi = n_init / smooth.max()  # first K at which any point activates
        while cost(hi) < target_extra:
            hi *= 2.0
            if hi > 1e300:
                raise RuntimeError("budget scaling diverged")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if cost(mid) < target_extra:
                lo = mid
            else:
                hi = mid
        # bracket ends straddle the target; keep the closer realization
        extra = counts_for(hi)
        if abs(cost(lo) - target_extra) < abs(cost(hi) - target_extra):
            extra = counts_for(lo)
    return extra.astype(np.int64)


def dynamic_run_algorithm2(m: ModelSpec, goal: GoalConfig,
                           cfg: AlgorithmTwoConfig, rng=None,
                           seed: int | None = None) -> NestedRun:
    """Single-pass scheduler: smooth the initial run's importance, scale it
    to the remaining budget, and realize the resulting live-count profile
    with censored supplement threads."""
    if rng is None:
        rng = np.random.default_rng(seed)
    init_cfg = SamplerConfig(
        n_live=cfg.n_init, termination_fraction=cfg.termination_fraction,
        keep_final_live=False)
    init_run = standard_run(m, init_cfg, rng)
    n_init = cfg.n_init
    extra = algorithm2_allocation(init_run, goal, cfg)

    run = init_run
    if extra.any():
        log_l = init_run.log_l
        active: list[int] = []  # FIFO of open supplement thread ids
        opened_at: dict[int, float] = {}
        groups: dict[tuple[float, float], list[int]] = {}
        next_id = n_init
        prev = 0
        for i in range(len(log_l)):
            delta = int(extra[i]) - prev
            contour = -np.inf if i == 0 else float(log_l[i - 1])
            for _ in range(max(delta, 0)):
                active.append(next_id)
                opened_at[next_id] = contour
                next_id += 1
            for _ in range(max(-delta, 0)):
                tid = active.pop(0)
                groups.setdefault((opened_at[tid], contour), []).append(tid)
            prev = int(extra[i])
        last = float(log_l[-1])
        for tid in active:
            groups.setdefault((opened_at[tid], last), []).append(tid)
        threads = []
        for (start, end), ids in sorted(groups.items(),
                                        key=lambda kv: min(kv[1])):
            if not start < end:
                continue
            threads.extend(sample_thread_batch(
                m, start, end, rng, ids, censor_at_end=True))
        run = _merge_new_threads(init_run, threads, m)
    init_ids = run.provenance.init_thread_ids
    return run.with_provenance(RunProvenance(
        algorithm="dynamic_alg2", seed=seed, n_init=n_init,
        goal_g=goal.goal_g, sample_budget=cfg.total_budget,
        importance_variant=goal.importance_variant,
        init_thread_ids=init_ids))
