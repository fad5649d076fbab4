"""Nested sampling run containers and the count/volume/weight machinery.

A run is a likelihood-sorted sequence of dead points, each tagged with the
contour it was born inside (birth_log_l) and a thread label.  Live point
counts are never stored: they are derived from the birth/death contours by a
sweep, which is what makes runs combinable by simple concatenation.

Runs may additionally carry censored alive-intervals: (birth, end] likelihood
ranges through which a thread was alive but whose terminal point is not part
of the recorded sequence.  A standard run that discards its final live points
records one such interval per live point, keeping the derived counts equal to
n everywhere; the profile-targeted dynamic sampler uses them for threads cut
at a target contour.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .models import ModelSpec

__all__ = [
    "SamplePoint",
    "RunProvenance",
    "NestedRun",
    "Thread",
    "live_point_counts",
    "log_prior_volumes",
    "point_log_weights",
    "posterior_weights",
    "combine_runs",
    "split_into_threads",
]


@dataclass(frozen=True)
class SamplePoint:
    log_l: float
    birth_log_l: float
    theta1: float
    radius: float
    true_log_x: float
    thread_id: int


@dataclass(frozen=True)
class RunProvenance:
    """Where a run came from; init_thread_ids marks the constant-count seed
    threads of a dynamic run (needed for class-preserving bootstrap)."""

    algorithm: str = "unknown"
    seed: int | None = None
    n_init: int | None = None
    goal_g: float | None = None
    sample_budget: int | None = None
    importance_variant: str | None = None
    init_thread_ids: tuple[int, ...] | None = None

    def to_dict(self):
        out = {"algorithm": self.algorithm}
        for key in ("seed", "n_init", "goal_g", "sample_budget", "importance_variant"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.init_thread_ids is not None:
            out["init_thread_ids"] = list(self.init_thread_ids)
        return out

    @classmethod
    def from_dict(cls, data):
        ids = data.get("init_thread_ids")
        return cls(
            algorithm=data.get("algorithm", "unknown"),
            seed=data.get("seed"),
            n_init=data.get("n_init"),
            goal_g=data.get("goal_g"),
            sample_budget=data.get("sample_budget"),
            importance_variant=data.get("importance_variant"),
            init_thread_ids=None if ids is None else tuple(int(i) for i in ids),
        )


_EMPTY_F = np.empty(0, dtype=np.float64)
_EMPTY_I = np.empty(0, dtype=np.int64)
_LOG_HALF = float(np.log(0.5))


class NestedRun:
    """Immutable likelihood-sorted run over one model.

    Points are kept as parallel arrays (log_l, birth_log_l, theta1, radius,
    true_log_x, thread_id), sorted ascending by log_l with ties broken by
    (thread_id, arrival order).  true_log_x is the generator's actual volume,
    carried for diagnostics only; estimators never read it.
    """

    __slots__ = ("model", "log_l", "birth_log_l", "theta1", "radius",
                 "true_log_x", "thread_id", "open_birth_log_l",
                 "open_end_log_l", "open_thread_id", "provenance")

    def __init__(self, model: ModelSpec, log_l, birth_log_l, theta1, radius,
                 true_log_x, thread_id, *, open_birth_log_l=None,
                 open_end_log_l=None, open_thread_id=None,
                 provenance: RunProvenance | None = None, presorted: bool = False):
        log_l = np.ascontiguousarray(log_l, dtype=np.float64)
        birth_log_l = np.ascontiguousarray(birth_log_l, dtype=np.float64)
        theta1 = np.ascontiguousarray(theta1, dtype=np.float64)
        radius = np.ascontiguousarray(radius, dtype=np.float64)
        true_log_x = np.ascontiguousarray(true_log_x, dtype=np.float64)
        thread_id = np.ascontiguousarray(thread_id, dtype=np.int64)
        n = log_l.shape[0]
        for arr in (birth_log_l, theta1, radius, true_log_x, thread_id):
            if arr.shape != (n,):
                raise ValueError("point arrays must share one length")
        if np.any(log_l <= birth_log_l):
            raise ValueError("every point must lie strictly above its birth contour")
        if not presorted and n > 1:
            order = np.lexsort((np.arange(n), thread_id, log_l))
            log_l = log_l[order]
            birth_log_l = birth_log_l[order]
            theta1 = theta1[order]
            radius = radius[order]
            true_log_x = true_log_x[order]
            thread_id = thread_id[order]
        self.model = model
        self.log_l = log_l
        self.birth_log_l = birth_log_l
        self.theta1 = theta1
        self.radius = radius
        self.true_log_x = true_log_x
        self.thread_id = thread_id
        if open_birth_log_l is None:
            self.open_birth_log_l = _EMPTY_F
            self.open_end_log_l = _EMPTY_F
            self.open_thread_id = _EMPTY_I
        else:
            ob = np.ascontiguousarray(open_birth_log_l, dtype=np.float64)
            oe = np.ascontiguousarray(open_end_log_l, dtype=np.float64)
            ot = np.ascontiguousarray(open_thread_id, dtype=np.int64)
            if not (ob.shape == oe.shape == ot.shape):
                raise ValueError("open-interval arrays must share one length")
            if np.any(oe < ob):
                raise ValueError("open intervals must have end >= birth")
            keep = oe > ob  # (b, b] covers nothing; drop silently
            if not np.all(keep):
                ob, oe, ot = ob[keep], oe[keep], ot[keep]
            self.open_birth_log_l = ob
            self.open_end_log_l = oe
            self.open_thread_id = ot
        self.provenance = provenance if provenance is not None else RunProvenance()

    def __len__(self):
        return self.log_l.shape[0]

    @property
    def n_points(self) -> int:
        return self.log_l.shape[0]

    @property
    def n_open(self) -> int:
        return self.open_birth_log_l.shape[0]

    def point(self, i: int) -> SamplePoint:
        return SamplePoint(
            log_l=float(self.log_l[i]), birth_log_l=float(self.birth_log_l[i]),
            theta1=float(self.theta1[i]), radius=float(self.radius[i]),
            true_log_x=float(self.true_log_x[i]), thread_id=int(self.thread_id[i]))

    def points(self) -> list[SamplePoint]:
        return [self.point(i) for i in range(len(self))]

    @classmethod
    def from_points(cls, model: ModelSpec, pts: Sequence[SamplePoint],
                    provenance: RunProvenance | None = None, **open_kwargs):
        run = cls(
            model,
            [p.log_l for p in pts], [p.birth_log_l for p in pts],
            [p.theta1 for p in pts], [p.radius for p in pts],
            [p.true_log_x for p in pts], [p.thread_id for p in pts],
            provenance=provenance, **open_kwargs)
        run.validate()
        return run

    def with_provenance(self, provenance: RunProvenance) -> "NestedRun":
        return NestedRun(self.model, self.log_l, self.birth_log_l, self.theta1,
                         self.radius, self.true_log_x, self.thread_id,
                         open_birth_log_l=self.open_birth_log_l,
                         open_end_log_l=self.open_end_log_l,
                         open_thread_id=self.open_thread_id,
                         provenance=provenance, presorted=True)

    def validate(self) -> None:
        """Full invariant check; O(N log N), meant for tests and ingestion."""
        n = len(self)
        if n == 0:
            return
        if np.any(np.diff(self.log_l) < 0.0):
            raise ValueError("points not sorted by log_l")
        if np.any(self.radius < 0.0):
            raise ValueError("negative radius")
        if np.any(np.abs(self.theta1) > self.radius):
            raise ValueError("theta1 outside [-radius, radius]")
        # per-thread chains: strictly increasing log_l, birth linkage
        order = np.lexsort((self.log_l, self.thread_id))
        tid = self.thread_id[order]
        ll = self.log_l[order]
        bb = self.birth_log_l[order]
        same = tid[1:] == tid[:-1]
        if np.any(same & (ll[1:] <= ll[:-1])):
            raise ValueError("thread log_l chain not strictly increasing")
        if np.any(same & (bb[1:] != ll[:-1])):
            raise ValueError("thread birth does not link to predecessor")
        # censored intervals continue their thread's last recorded point
        if self.n_open:
            last_by_tid = dict(zip(tid.tolist(), ll.tolist()))
            for b, t in zip(self.open_birth_log_l.tolist(),
                            self.open_thread_id.tolist()):
                if t in last_by_tid and b != last_by_tid[t]:
                    raise ValueError("open interval does not continue its thread")
        if np.any(live_point_counts(self) < 1):
            raise ValueError("orphan sample with zero live count")


@dataclass(frozen=True)
class Thread:
    """One live point's trajectory: a chain of points from a start contour,
    optionally censored at open_end_log_l (alive through that contour but
    its next point unrecorded)."""

    thread_id: int
    start_log_l: float
    log_l: np.ndarray
    birth_log_l: np.ndarray
    theta1: np.ndarray
    radius: np.ndarray
    true_log_x: np.ndarray
    open_end_log_l: float | None = None

    def __len__(self):
        return self.log_l.shape[0]

    def to_run(self, model: ModelSpec) -> NestedRun:
        n = len(self)
        tid = np.full(n, self.thread_id, dtype=np.int64)
        if self.open_end_log_l is None:
            open_kwargs = {}
        else:
            open_kwargs = dict(
                open_birth_log_l=[self.log_l[-1] if n else self.start_log_l],
                open_end_log_l=[self.open_end_log_l],
                open_thread_id=[self.thread_id])
        return NestedRun(model, self.log_l, self.birth_log_l, self.theta1,
                         self.radius, self.true_log_x, tid,
                         presorted=True, **open_kwargs)


def live_point_counts(run: NestedRun) -> np.ndarray:
    """n_i at each recorded point: threads born strictly below L_i and not
    yet dead there, plus censored intervals alive through L_i."""
    n = len(run)
    if n == 0:
        return _EMPTY_I.copy()
    births = np.sort(run.birth_log_l)
    deaths_below = np.searchsorted(run.log_l, run.log_l, side="left")
    births_below = np.searchsorted(births, run.log_l, side="left")
    counts = births_below - deaths_below
    if run.n_open:
        ob = np.sort(run.open_birth_log_l)
        oe = np.sort(run.open_end_log_l)
        counts = counts + (np.searchsorted(ob, run.log_l, side="left")
                           - np.searchsorted(oe, run.log_l, side="left"))
    return counts.astype(np.int64)


def log_prior_volumes(run: NestedRun) -> np.ndarray:
    """E[ln X_i] = -sum_{k<=i} 1/n_k (deterministic expectation, no sampled
    shrinkage ratios)."""
    counts = live_point_counts(run)
    if counts.shape[0] == 0:
        return _EMPTY_F.copy()
    return -np.cumsum(1.0 / counts)


def point_log_weights(run: NestedRun) -> np.ndarray:
    """ln of the trapezium weights w_i = (X_{i-1} - X_{i+1})/2, with X_0 = 1
    and X_{N+1} = 0."""
    if len(run) == 0:
        raise ValueError("weights of an empty run are undefined")
    lnx = log_prior_volumes(run)
    prev = np.concatenate([[0.0], lnx[:-1]])
    nxt = np.concatenate([lnx[1:], [-np.inf]])
    # w = (X_prev - X_next)/2 = X_prev (1 - e^(nxt - prev)) / 2; nxt < prev
    return _LOG_HALF + prev + np.log1p(-np.exp(nxt - prev))


def posterior_weights(run: NestedRun) -> np.ndarray:
    """Simplex weights p_i proportional to w_i L_i; sums to exactly 1."""
    lw = point_log_weights(run) + run.log_l
    mx = np.max(lw)
    if not np.isfinite(mx):
        raise ValueError("all posterior weights are zero")
    p = np.exp(lw - mx)
    return p / np.sum(p)


def combine_runs(runs: Sequence[NestedRun]) -> NestedRun:
    """Merge runs over one model; counts of the result are the pointwise sum
    of the constituents' counts at every likelihood.  Thread ids are
    relabelled to be disjoint."""
    runs = list(runs)
    if not runs:
        raise ValueError("nothing to combine")
    model = runs[0].model
    for r in runs[1:]:
        if r.model != model:
            raise ValueError("cannot combine runs over different models")
    parts = []
    offset = 0
    all_init: list[int] = []
    have_init = True
    for r in runs:
        ids = np.concatenate([r.thread_id, r.open_thread_id])
        shift = offset - (int(ids.min()) if ids.size else 0)
        parts.append((r, shift))
        if ids.size:
            offset = int(ids.max()) + shift + 1
        prov_ids = r.provenance.init_thread_ids
        if prov_ids is None:
            have_init = False
        elif have_init:
            all_init.extend(int(i) + shift for i in prov_ids)
    log_l = np.concatenate([r.log_l for r, _ in parts])
    birth = np.concatenate([r.birth_log_l for r, _ in parts])
    theta1 = np.concatenate([r.theta1 for r, _ in parts])
    radius = np.concatenate([r.radius for r, _ in parts])
    tlx = np.concatenate([r.true_log_x for r, _ in parts])
    tid = np.concatenate([r.thread_id + s for r, s in parts])
    ob = np.concatenate([r.open_birth_log_l for r, _ in parts])
    oe = np.concatenate([r.open_end_log_l for r, _ in parts])
    ot = np.concatenate([r.open_thread_id + s for r, s in parts])
    prov = RunProvenance(
        algorithm="combined",
        init_thread_ids=tuple(all_init) if have_init else None)
    return NestedRun(model, log_l, birth, theta1, radius, tlx, tid,
                     open_birth_log_l=ob, open_end_log_l=oe, open_thread_id=ot,
                     provenance=prov)


def split_into_threads(run: NestedRun) -> list[Thread]:
    """Partition a run into its threads (including point-free censored ones),
    ordered by thread id."""
    if np.any(run.thread_id < 0):
        raise ValueError("run has unlabelled points")
    open_by_tid = {int(t): (float(b), float(e))
                   for b, e, t in zip(run.open_birth_log_l, run.open_end_log_l,
                                      run.open_thread_id)}
    threads = []
    order = np.lexsort((run.log_l, run.thread_id))
    tid_sorted = run.thread_id[order]
    bounds = np.flatnonzero(np.concatenate(
        [[True], tid_sorted[1:] != tid_sorted[:-1], [True]]))
    for k in range(len(bounds) - 1):
        sel = order[bounds[k]:bounds[k + 1]]
        t = int(tid_sorted[bounds[k]])
        open_entry = open_by_tid.pop(t, None)
        threads.append(Thread(
            thread_id=t,
            start_log_l=float(run.birth_log_l[sel[0]]),
            log_l=run.log_l[sel], birth_log_l=run.birth_log_l[sel],
            theta1=run.theta1[sel], radius=run.radius[sel],
            true_log_x=run.true_log_x[sel],
            open_end_log_l=None if open_entry is None else open_entry[1]))
    for t, (b, e) in open_by_tid.items():
        threads.append(Thread(
            thread_id=t, start_log_l=b,
            log_l=_EMPTY_F.copy(), birth_log_l=_EMPTY_F.copy(),
            theta1=_EMPTY_F.copy(), radius=_EMPTY_F.copy(),
            true_log_x=_EMPTY_F.copy(), open_end_log_l=e))
    threads.sort(key=lambda th: th.thread_id)
    return threads
