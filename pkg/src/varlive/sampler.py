"""Perfect nested sampling over spherically symmetric models.

Shrinkage is simulated per thread: each live point's successive prior volumes
follow ln X -> ln X + ln U, so a thread is a unit-rate Poisson process in
-ln X.  Likelihoods and radii come from the model's contour map, making every
draw an exact sample from the constrained prior and leaving nothing to an
MCMC approximation.

standard_run generates all thread trajectories to a safe depth first, merges
them in likelihood order, then locates the termination step with a bracketed
scan: cheap log-domain bounds isolate a window, and the exact mean-live-
likelihood condition is evaluated only inside it.  Scalar entry points
(draw_point_above, sample_thread) use the closed-form inverse maps instead
and are what the dynamic scheduler builds on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import (
    ModelSpec,
    get_contour_map,
    log_likelihood_at_radius,
    log_x_from_log_likelihood,
    radius_from_log_x,
    sampling_log_x_floor,
)
from .runs import NestedRun, RunProvenance, SamplePoint, Thread
from .specialfn import sample_beta_first_coordinate

__all__ = ["SamplerConfig", "draw_point_above", "sample_thread",
           "sample_thread_batch", "standard_run"]


@dataclass(frozen=True)
class SamplerConfig:
    """Standard-run settings.

    termination_fraction: stop once the evidence still held by the live
    points (mean live likelihood times current volume) drops below this
    fraction of the dead-point evidence.
    keep_final_live: append the surviving live points as a decreasing-count
    tail; otherwise record censored alive-intervals so derived counts stay
    at n_live everywhere.
    """

    n_live: int
    termination_fraction: float = 1e-3
    keep_final_live: bool = True
    seed: int | None = None

    def __post_init__(self):
        if self.n_live < 1:
            raise ValueError("n_live must be >= 1")
        if not 0.0 < self.termination_fraction < 1.0:
            raise ValueError("termination_fraction must be in (0, 1)")


def _open_unit(rng) -> float:
    """Uniform draw strictly inside (0, 1)."""
    u = rng.random()
    while u == 0.0:
        u = rng.random()
    return u


def draw_point_above(m: ModelSpec, log_x_upper: float, rng,
                     thread_id: int = 0) -> SamplePoint:
    """One exact draw from the prior restricted to X < exp(log_x_upper)."""
    if log_x_upper > 0.0:
        raise ValueError("log_x_upper must be <= 0")
    true_log_x = log_x_upper + math.log(_open_unit(rng))
    radius = radius_from_log_x(m, true_log_x)
    log_l = log_likelihood_at_radius(m, radius)
    theta1 = radius * sample_beta_first_coordinate(m.d, rng)
    if log_x_upper == 0.0:
        birth = -np.inf
    else:
        birth = float(log_likelihood_at_radius(
            m, radius_from_log_x(m, log_x_upper)))
    return SamplePoint(log_l=float(log_l), birth_log_l=birth,
                       theta1=float(theta1), radius=float(radius),
                       true_log_x=float(true_log_x), thread_id=thread_id)


def sample_thread(m: ModelSpec, start_log_l: float, end_log_l: float, rng,
                  thread_id: int = 0, censor_at_end: bool = False) -> Thread:
    """Run one live point from the start contour until it first exceeds the
    end contour.

    The overshooting point is retained by default; with censor_at_end it is
    discarded and the thread carries an open alive-interval through
    end_log_l instead.  end_log_l = +inf means exactly one point above the
    start contour.
    """
    if not start_log_l < end_log_l:
        raise ValueError("need start_log_l < end_log_l")
    if start_log_l == -np.inf:
        log_x = 0.0
    else:
        log_x = float(log_x_from_log_likelihood(m, start_log_l))
    log_l, birth, theta1, radius, true_log_x = [], [], [], [], []
    prev = start_log_l
    open_end = None
    while True:
        log_x = log_x + math.log(_open_unit(rng))
        r = radius_from_log_x(m, log_x)
        ll = float(log_likelihood_at_radius(m, r))
        if ll > end_log_l and censor_at_end:
            open_end = end_log_l
            break
        theta1.append(r * sample_beta_first_coordinate(m.d, rng))
        log_l.append(ll)
        birth.append(prev)
        radius.append(r)
        true_log_x.append(log_x)
        if ll > end_log_l or end_log_l == np.inf:
            break
        prev = ll
    return Thread(thread_id=thread_id, start_log_l=start_log_l,
                  log_l=np.array(log_l), birth_log_l=np.array(birth),
                  theta1=np.array(theta1), radius=np.array(radius),
                  true_log_x=np.array(true_log_x), open_end_log_l=open_end)


def sample_thread_batch(m: ModelSpec, start_log_l: float, end_log_l: float,
                        rng, thread_ids, censor_at_end: bool = False
                        ) -> list[Thread]:
    """Vectorized sample_thread for many threads sharing one (start, end).

    Distributionally identical to per-thread sampling; all shrinkage draws
    come from one exponential block and all angular draws from one batch, so
    a whole spawn costs a few array operations.
    """
    ids = [int(t) for t in thread_ids]
    nb = len(ids)
    if nb == 0:
        return []
    if not start_log_l < end_log_l:
        raise ValueError("need start_log_l < end_log_l")
    log_x0 = 0.0 if start_log_l == -np.inf else float(
        log_x_from_log_likelihood(m, start_log_l))

    if end_log_l == np.inf:
        # one point above the start contour per thread
        lnx = log_x0 - rng.standard_exponential(nb)
        counts = np.ones(nb, dtype=np.int64)
        lnx_flat = lnx
    else:
        span = log_x0 - float(log_x_from_log_likelihood(m, end_log_l))
        depth = _ensure_depth(rng, nb, None, span + 40.0)
        cross = np.argmax(depth > span, axis=1)  # first point past the end
        counts = cross + (0 if censor_at_end else 1)
        keep = np.arange(depth.shape[1])[None, :] < counts[:, None]
        lnx_flat = log_x0 - depth[keep]

    if lnx_flat.size:
        cm = get_contour_map(m, float(lnx_flat.min()) - 1.0)
        top = cm.log_x_top
        lnl_flat = np.asarray(cm.log_l(np.minimum(lnx_flat, top)))
        radius_flat = np.asarray(cm.radius(np.minimum(lnx_flat, top)))
    else:
        lnl_flat = radius_flat = lnx_flat
    theta_flat = radius_flat * sample_beta_first_coordinate(
        m.d, rng, size=lnx_flat.shape)

    threads = []
    offsets = np.concatenate([[0], np.cumsum(counts)])
    for i, tid in enumerate(ids):
        sel = slice(int(offsets[i]), int(offsets[i + 1]))
        lnl = lnl_flat[sel]
        birth = np.concatenate([[start_log_l], lnl[:-1]]) if lnl.size \
            else np.empty(0)
        threads.append(Thread(
            thread_id=tid, start_log_l=start_log_l,
            log_l=lnl, birth_log_l=birth, theta1=theta_flat[sel],
            radius=radius_flat[sel], true_log_x=lnx_flat[sel],
            open_end_log_l=end_log_l if censor_at_end else None))
    return threads


def _ensure_depth(rng, n: int, depth: np.ndarray | None, target: float):
    """Per-thread cumulative -ln X samples covering depth >= target."""
    if depth is None:
        k0 = int(target + 12.0 * math.sqrt(max(target, 1.0)) + 16.0)
        depth = np.cumsum(rng.standard_exponential((n, k0)), axis=1)
    while np.any(depth[:, -1] < target):
        short = float(np.max(target - depth[:, -1]))
        k = int(short + 8.0 * math.sqrt(max(short, 1.0)) + 16.0)
        block = np.cumsum(rng.standard_exponential((n, k)), axis=1)
        depth = np.concatenate([depth, depth[:, -1:] + block], axis=1)
    return depth


def standard_run(m: ModelSpec, cfg: SamplerConfig, rng=None) -> NestedRun:
    """Constant-count nested sampling run; bit-reproducible given cfg.seed."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = cfg.n_live
    floor = sampling_log_x_floor(m, n)
    depth = None
    while True:
        depth = _ensure_depth(rng, n, depth, -floor)
        out = _assemble(m, cfg, rng, depth, floor)
        if out is not None:
            return out
        floor -= 15.0  # termination not reached in covered depth; go deeper


def _assemble(m: ModelSpec, cfg: SamplerConfig, rng, depth: np.ndarray,
              floor: float) -> NestedRun | None:
    n = cfg.n_live
    usable = depth <= -floor
    counts = usable.sum(axis=1)
    if np.any(counts == 0):
        return None
    offsets = np.concatenate([[0], np.cumsum(counts)])
    total = int(offsets[-1])
    lnx_flat = -depth[usable]  # row-major: per-thread chain order preserved
    tid_flat = np.repeat(np.arange(n, dtype=np.int64), counts)
    seq_flat = np.arange(total) - np.repeat(offsets[:-1], counts)

    order = np.argsort(-lnx_flat, kind="stable")
    lnx_s = lnx_flat[order]
    tid_s = tid_flat[order]
    cm = get_contour_map(m, floor)
    lnl_s = np.asarray(cm.log_l(np.minimum(lnx_s, cm.log_x_top)))
    lnl_flat = np.empty(total)
    lnl_flat[order] = lnl_s
    # next point in the same thread (the value a death hands to the live set)
    next_flat = np.full(total, np.nan)
    has_next = seq_flat < np.repeat(counts, counts) - 1
    idx = np.flatnonzero(has_next)
    next_flat[idx] = lnl_flat[idx + 1]
    next_s = next_flat[order]
    # positions of each flat point in the merged order
    pos_flat = np.empty(total, dtype=np.int64)
    pos_flat[order] = np.arange(total)

    k_term = _termination_index(m, cfg, lnl_s, next_s, lnl_flat, pos_flat,
                                offsets, counts, n)
    if k_term is None:
        return None

    # live set at the termination step: each thread's first position > k_term
    live_idx = np.empty(n, dtype=np.int64)
    for t in range(n):
        row = pos_flat[offsets[t]:offsets[t + 1]]
        j = int(np.searchsorted(row, k_term + 1))
        if j >= counts[t]:
            return None  # thread exhausted before termination cleared it
        live_idx[t] = offsets[t] + j

    dead = order[:k_term + 1]
    birth_flat = np.where(seq_flat == 0, -np.inf,
                          lnl_flat[np.maximum(np.arange(total) - 1, 0)])
    if cfg.keep_final_live:
        tail = live_idx[np.argsort(-lnx_flat[live_idx], kind="stable")]
        keep = np.concatenate([dead, tail])
        open_kwargs = {}
    else:
        keep = dead
        last_dead = np.where(live_idx - offsets[:n] > 0,
                             lnl_flat[np.maximum(live_idx - 1, 0)], -np.inf)
        terminal = float(lnl_s[k_term])
        open_kwargs = dict(
            open_birth_log_l=last_dead,
            open_end_log_l=np.full(n, terminal),
            open_thread_id=np.arange(n, dtype=np.int64))
    lnx_keep = lnx_flat[keep]
    radius = np.asarray(cm.radius(np.minimum(lnx_keep, cm.log_x_top)))
    theta1 = radius * sample_beta_first_coordinate(m.d, rng, size=keep.size)
    prov = RunProvenance(algorithm="standard", seed=cfg.seed,
                         init_thread_ids=tuple(range(n)))
    return NestedRun(m, lnl_flat[keep], birth_flat[keep], theta1, radius,
                     lnx_keep, tid_flat[keep], provenance=prov,
                     presorted=True, **open_kwargs)


def _termination_index(m, cfg, lnl_s, next_s, lnl_flat, pos_flat, offsets,
                       counts, n) -> int | None:
    """First step where mean-live-likelihood evidence drops below the
    termination fraction of dead evidence, or None if not reached."""
    total = lnl_s.shape[0]
    steps = np.arange(total)
    ln_dx = -steps / n + math.log(-math.expm1(-1.0 / n))  # X_{k-1} - X_k
    ln_dead = np.logaddexp.accumulate(lnl_s + ln_dx)
    ln_x_after = -(steps + 1.0) / n
    rhs = math.log(cfg.termination_fraction) + ln_dead
    # each death removes the minimum of the live set, so the live maximum is
    # a running max over inserted successors; the mean lies within a factor
    # n of it.  Bracket the crossing with those bounds, then evaluate the
    # exact mean only inside the window.
    m0 = float(lnl_flat[offsets[:-1]].max())  # initial live maximum
    nan_next = np.isnan(next_s)
    k_nan = int(np.argmax(nan_next)) if nan_next.any() else total
    max_live = np.maximum.accumulate(
        np.maximum(np.where(nan_next, -np.inf, next_s), m0))
    upper = max_live + ln_x_after - rhs
    lower = upper - math.log(n)
    hit_hi = upper < 0.0
    hit_hi[k_nan:] = False  # max_live is only exact while no thread exhausted
    if not hit_hi.any():
        return None
    k_hi = int(np.argmax(hit_hi))
    hit_lo = lower < 0.0
    k_lo = int(np.argmax(hit_lo)) if hit_lo.any() else k_hi
    scale = float(max_live[k_hi])
    # live sum just before the window
    live0 = 0.0
    for t in range(n):
        row = pos_flat[offsets[t]:offsets[t + 1]]
        j = int(np.searchsorted(row, k_lo))
        if j >= counts[t]:
            return None
        live0 += math.exp(lnl_flat[offsets[t] + j] - scale)
    win = slice(k_lo, k_hi + 1)
    gain = np.exp(next_s[win] - scale) - np.exp(lnl_s[win] - scale)  # >= 0
    live_sum = live0 + np.cumsum(gain)
    lhs = np.log(live_sum) + scale - math.log(n) + ln_x_after[win]
    ok = lhs < rhs[win]
    # the upper bound already crossed at k_hi, so the exact scan must hit
    return k_lo + int(np.argmax(ok)) if ok.any() else k_hi
