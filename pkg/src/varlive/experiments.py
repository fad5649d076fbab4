"""Ensemble generation and report builders behind the command-line tools.

An experiment is a model, a list of arms (sampler configurations), a run
count, and a seed.  Generation writes one JSON run file per (arm, run)
plus a deterministic manifest; the report builders read those files back
and emit CSV.  Every random stream is keyed by (purpose, arm, run) off
the root seed, so outputs are identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (EstimatorId, GainEstimate, bootstrap_resample,
                       efficiency_gain, estimate, estimator_from_key,
                       jackknife_std_sigma, weighted_quantile)
from .dynamic import (AlgorithmOneConfig, AlgorithmTwoConfig, GoalConfig,
                      dynamic_run_algorithm1, dynamic_run_algorithm2)
from .models import (GAUSSIAN, ModelSpec, analytic_log_evidence,
                     posterior_mass_remaining, relative_posterior_mass)
from .runio import load_run, save_run
from .runs import live_point_counts, log_prior_volumes
from .sampler import SamplerConfig, standard_run

__all__ = [
    "ArmConfig", "ExperimentConfig", "MissingRunsError",
    "EstimatorSummary", "ExperimentReport",
    "config_from_dict", "load_experiment_config", "estimator_truth",
    "generate_ensemble", "load_manifest",
    "compare_report", "alloc_profile_rows", "write_alloc_profile_csv",
    "bootstrap_table_rows", "write_bootstrap_table_csv",
    "MANIFEST_NAME",
]

MANIFEST_NAME = "manifest.json"

_METHODS = ("standard", "dyn1", "dyn2")
_VARIANTS = ("standard", "exact", "tuned")

# spawn-key stream tags; keep stable so ensembles are reproducible
_STREAM_GENERATE = 0
_STREAM_GAIN = 1
_STREAM_BOOT = 2

# fraction of the matched standard arm's live-point count used when a
# dynamic arm leaves n_init unset
_DEFAULT_INIT_FRACTION = {"dyn1": 0.1, "dyn2": 0.2}


@dataclass(frozen=True)
class ArmConfig:
    """One sampler configuration inside an experiment.

    Dynamic arms may leave budget unset, in which case it is matched to
    the mean realized sample count of the arm named by gain_vs; n_init
    left unset defaults to a fixed fraction of that arm's n_live (10%
    for the iterative scheduler, 20% for the single-pass one).
    """

    name: str
    method: str
    n_live: int | None = None
    n_init: int | None = None
    budget: int | None = None
    goal_g: float = 0.0
    importance_variant: str = "standard"
    gain_vs: str | None = None
    n_batch: int = 1
    termination_fraction: float = 1e-3
    seed: int | None = None

    def __post_init__(self):
        if not self.name or "/" in self.name or self.name != self.name.strip():
            raise ValueError(f"bad arm name {self.name!r}")
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.importance_variant not in _VARIANTS:
            raise ValueError(f"unknown importance variant {self.importance_variant!r}")
        if self.method == "standard":
            if self.n_live is None or self.n_live < 1:
                raise ValueError("standard arms need n_live >= 1")
        else:
            if not 0.0 <= self.goal_g <= 1.0:
                raise ValueError("goal_g must lie in [0, 1]")
            if self.n_init is not None and self.n_init < 1:
                raise ValueError("n_init must be >= 1 when given")
            if self.budget is not None and self.budget < 1:
                raise ValueError("budget must be >= 1 when given")
            if self.n_init is None and self.gain_vs is None:
                raise ValueError("dynamic arms need n_init or a gain_vs arm to derive it")
        if self.n_batch < 1:
            raise ValueError("n_batch must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "ArmConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown arm keys: {sorted(extra)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = {"name": self.name, "method": self.method}
        for key in ("n_live", "n_init", "budget", "gain_vs", "seed"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.method != "standard":
            out["goal_g"] = self.goal_g
            out["importance_variant"] = self.importance_variant
            out["n_batch"] = self.n_batch
        out["termination_fraction"] = self.termination_fraction
        return out


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    arms: tuple[ArmConfig, ...]
    n_runs: int
    seed: int
    estimators: tuple[EstimatorId, ...]
    workers: int = 1
    gain_boot: int = 1000
    bootstrap_reps: int = 200
    profile_arm: str | None = None
    profile_runs: int = 5
    table_arm: str | None = None

    def __post_init__(self):
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.arms:
            raise ValueError("experiment needs at least one arm")
        if not self.estimators:
            raise ValueError("experiment needs at least one estimator")
        names = [a.name for a in self.arms]
        if len(set(names)) != len(names):
            raise ValueError("arm names must be unique")
        for arm in self.arms:
            if arm.gain_vs is not None and arm.gain_vs not in names:
                raise ValueError(f"arm {arm.name!r} references unknown arm {arm.gain_vs!r}")
            if arm.gain_vs == arm.name:
                raise ValueError(f"arm {arm.name!r} cannot reference itself")

    def arm(self, name: str) -> ArmConfig:
        for a in self.arms:
            if a.name == name:
                return a
        raise KeyError(name)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    model = ModelSpec.from_dict(data.pop("model"))
    arms = tuple(ArmConfig.from_dict(a) for a in data.pop("arms"))
    estimators = tuple(estimator_from_key(k) for k in data.pop("estimators"))
    return ExperimentConfig(model=model, arms=arms, estimators=estimators, **data)


def load_experiment_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# analytic truths for the error analysis


def estimator_truth(m: ModelSpec, eid: EstimatorId) -> float | None:
    """Exact value of an estimator's target, or None when no closed form
    is wired up for the family."""
    if eid.kind == "log_z":
        return analytic_log_evidence(m)
    if eid.kind in ("mean_theta1", "median_theta1"):
        return 0.0
    if m.family != GAUSSIAN:
        return None
    # posterior of a unit-width likelihood under a centred Gaussian prior
    # is Gaussian with variance sigma_pi^2 / (1 + sigma_pi^2)
    var = m.sigma_pi ** 2 / (1.0 + m.sigma_pi ** 2)
    sig = math.sqrt(var)
    if eid.kind == "second_moment_theta1":
        return var
    if eid.kind == "credible_theta1":
        q = eid.q
        if q == 0.5:
            return 0.0
        from .specialfn import inv_reg_lower_inc_gamma
        half_width = math.sqrt(2.0 * inv_reg_lower_inc_gamma(0.5, abs(2.0 * q - 1.0)))
        return sig * half_width if q > 0.5 else -sig * half_width
    if eid.kind == "mean_radius":
        d = m.d
        return sig * math.sqrt(2.0) * math.exp(math.lgamma(0.5 * (d + 1)) - math.lgamma(0.5 * d))
    if eid.kind == "median_radius":
        from .specialfn import inv_reg_lower_inc_gamma
        return sig * math.sqrt(2.0 * inv_reg_lower_inc_gamma(0.5 * m.d, 0.5))
    raise ValueError(f"unknown estimator kind {eid.kind!r}")


# ---------------------------------------------------------------------------
# generation


def _resolve_arm(config: ExperimentConfig, arm: ArmConfig,
                 realized_mean: dict[str, float]) -> dict:
    """Fill in derived budget / n_init; returns a plain picklable dict."""
    base = {"method": arm.method,
            "termination_fraction": arm.termination_fraction}
    if arm.method == "standard":
        base["n_live"] = int(arm.n_live)
        return base
    n_init = arm.n_init
    if n_init is None:
        ref = config.arm(arm.gain_vs)
        if ref.method != "standard" or ref.n_live is None:
            raise ValueError(
                f"arm {arm.name!r}: n_init can only default off a standard arm")
        n_init = max(1, round(_DEFAULT_INIT_FRACTION[arm.method] * ref.n_live))
    budget = arm.budget
    if budget is None:
        if arm.gain_vs not in realized_mean:
            raise ValueError(
                f"arm {arm.name!r} needs an explicit budget or must come after "
                f"its gain_vs arm {arm.gain_vs!r}")
        budget = int(round(realized_mean[arm.gain_vs]))
    base.update(n_init=int(n_init), budget=int(budget),
                goal_g=float(arm.goal_g),
                importance_variant=arm.importance_variant,
                n_batch=int(arm.n_batch))
    return base


def _run_spawn_key(arm_index: int, run_index: int) -> tuple[int, int, int]:
    return (_STREAM_GENERATE, arm_index, run_index)


def _generate_one(model_dict: dict, resolved: dict, entropy: int,
                  spawn_key: tuple, path: str) -> int:
    m = ModelSpec.from_dict(model_dict)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=entropy,
                                                       spawn_key=spawn_key))
    method = resolved["method"]
    if method == "standard":
        cfg = SamplerConfig(n_live=resolved["n_live"],
                            termination_fraction=resolved["termination_fraction"],
                            keep_final_live=True)
        run = standard_run(m, cfg, rng)
    else:
        goal = GoalConfig(goal_g=resolved["goal_g"],
                          importance_variant=resolved["importance_variant"])
        if method == "dyn1":
            cfg = AlgorithmOneConfig(
                n_init=resolved["n_init"], sample_budget=resolved["budget"],
                n_batch=resolved["n_batch"],
                termination_fraction=resolved["termination_fraction"])
            run = dynamic_run_algorithm1(m, goal, cfg, rng=rng)
        else:
            cfg = AlgorithmTwoConfig(
                n_init=resolved["n_init"], total_budget=resolved["budget"],
                termination_fraction=resolved["termination_fraction"])
            run = dynamic_run_algorithm2(m, goal, cfg, rng=rng)
    save_run(run, path)
    return len(run)


def generate_ensemble(config: ExperimentConfig, out_dir: str,
                      workers: int | None = None) -> dict:
    """Write every run file plus a manifest; returns the manifest dict.

    The manifest is byte-identical across repeats and worker counts for
    a fixed config: no timestamps, sorted keys, derived settings frozen
    into it.
    """
    workers = config.workers if workers is None else workers
    os.makedirs(out_dir, exist_ok=True)
    model_dict = config.model.to_dict()
    realized_mean: dict[str, float] = {}
    arm_entries = []
    for arm_index, arm in enumerate(config.arms):
        resolved = _resolve_arm(config, arm, realized_mean)
        arm_dir = os.path.join(out_dir, arm.name)
        os.makedirs(arm_dir, exist_ok=True)
        entropy = config.seed if arm.seed is None else arm.seed
        tasks = []
        for j in range(config.n_runs):
            rel = os.path.join(arm.name, f"run_{j:05d}.json")
            key = (_STREAM_GENERATE, j) if arm.seed is not None \
                else _run_spawn_key(arm_index, j)
            tasks.append((model_dict, resolved, entropy, key,
                          os.path.join(out_dir, rel), rel))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                sizes = list(pool.map(_generate_one,
                                      *zip(*[t[:5] for t in tasks])))
        else:
            sizes = [_generate_one(*t[:5]) for t in tasks]
        mean_samples = float(np.mean(sizes))
        realized_mean[arm.name] = mean_samples
        entry = {"name": arm.name, "mean_samples": mean_samples,
                 "gain_vs": arm.gain_vs,
                 "runs": [{"index": j, "path": t[5], "n_samples": int(s)}
                          for j, (t, s) in enumerate(zip(tasks, sizes))]}
        entry.update(resolved)
        arm_entries.append(entry)
    manifest = {"version": 1, "seed": config.seed, "n_runs": config.n_runs,
                "model": model_dict, "arms": arm_entries}
    tmp = os.path.join(out_dir, MANIFEST_NAME + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    os.replace(tmp, os.path.join(out_dir, MANIFEST_NAME))
    return manifest


# ---------------------------------------------------------------------------
# reading ensembles back


class MissingRunsError(ValueError):
    """Raised when a manifest names run files that are not on disk."""

    def __init__(self, missing):
        self.missing = tuple(missing)
        preview = ", ".join(self.missing[:8])
        more = "" if len(self.missing) <= 8 else f" (+{len(self.missing) - 8} more)"
        super().__init__(f"missing {len(self.missing)} run file(s): {preview}{more}")


def load_manifest(out_dir: str) -> dict:
    path = os.path.join(out_dir, MANIFEST_NAME)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no manifest at {path}")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _check_run_files(out_dir: str, manifest: dict) -> None:
    missing = [r["path"] for entry in manifest["arms"] for r in entry["runs"]
               if not os.path.exists(os.path.join(out_dir, r["path"]))]
    if missing:
        raise MissingRunsError(sorted(missing))


def _manifest_arm(manifest: dict, name: str) -> dict:
    for entry in manifest["arms"]:
        if entry["name"] == name:
            return entry
    raise ValueError(f"arm {name!r} not present in manifest")


def _default_focus_arm(config: ExperimentConfig) -> str:
    for arm in config.arms:
        if arm.method != "standard":
            return arm.name
    return config.arms[0].name


# ---------------------------------------------------------------------------
# compare


@dataclass(frozen=True)
class EstimatorSummary:
    mean: float
    std: float
    std_sigma: float
    rmse: float | None
    truth: float | None


@dataclass
class ExperimentReport:
    arm_order: tuple[str, ...]
    estimator_keys: tuple[str, ...]
    mean_samples: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)   # (arm, key) -> EstimatorSummary
    gains: dict = field(default_factory=dict)       # (arm, key) -> GainEstimate
    baselines: dict = field(default_factory=dict)   # arm -> gain_vs arm
    n_runs: int = 0

    _COLUMNS = ("row", "arm", "estimator", "baseline", "value", "sigma",
                "spread", "spread_sigma", "rmse", "truth")

    def to_rows(self) -> list[dict]:
        def fmt(x):
            return "" if x is None else repr(float(x))
        rows = []
        for arm in self.arm_order:
            rows.append({"row": "samples", "arm": arm, "estimator": "",
                         "baseline": "", "value": fmt(self.mean_samples[arm]),
                         "sigma": "", "spread": "", "spread_sigma": "",
                         "rmse": "", "truth": ""})
            for key in self.estimator_keys:
                s = self.summaries[(arm, key)]
                sem = s.std / math.sqrt(self.n_runs)
                rows.append({"row": "estimate", "arm": arm, "estimator": key,
                             "baseline": "", "value": fmt(s.mean),
                             "sigma": fmt(sem), "spread": fmt(s.std),
                             "spread_sigma": fmt(s.std_sigma),
                             "rmse": fmt(s.rmse), "truth": fmt(s.truth)})
        for arm in self.arm_order:
            base = self.baselines.get(arm)
            if base is None:
                continue
            for key in self.estimator_keys:
                g = self.gains[(arm, key)]
                rows.append({"row": "gain", "arm": arm, "estimator": key,
                             "baseline": base, "value": fmt(g.gain),
                             "sigma": fmt(g.sigma), "spread": "",
                             "spread_sigma": "", "rmse": "", "truth": ""})
        return rows

    def write_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self._COLUMNS,
                                    lineterminator="\n")
            writer.writeheader()
            writer.writerows(self.to_rows())

    def gain(self, arm: str, key: str) -> GainEstimate:
        return self.gains[(arm, key)]


def compare_report(config: ExperimentConfig, out_dir: str) -> ExperimentReport:
    if config.n_runs < 2:
        raise ValueError("compare needs n_runs >= 2")
    manifest = load_manifest(out_dir)
    _check_run_files(out_dir, manifest)
    keys = tuple(e.key for e in config.estimators)
    report = ExperimentReport(arm_order=tuple(a.name for a in config.arms),
                              estimator_keys=keys, n_runs=config.n_runs)
    values: dict[str, np.ndarray] = {}
    for arm in config.arms:
        entry = _manifest_arm(manifest, arm.name)
        mat = np.empty((len(entry["runs"]), len(config.estimators)))
        for i, rec in enumerate(entry["runs"]):
            run = load_run(os.path.join(out_dir, rec["path"]))
            for k, eid in enumerate(config.estimators):
                mat[i, k] = estimate(run, eid)
        values[arm.name] = mat
        report.mean_samples[arm.name] = float(entry["mean_samples"])
        for k, eid in enumerate(config.estimators):
            col = mat[:, k]
            truth = estimator_truth(config.model, eid)
            rmse = None if truth is None else \
                float(np.sqrt(np.mean((col - truth) ** 2)))
            report.summaries[(arm.name, keys[k])] = EstimatorSummary(
                mean=float(col.mean()), std=float(col.std(ddof=1)),
                std_sigma=jackknife_std_sigma(col), rmse=rmse, truth=truth)
    for arm_index, arm in enumerate(config.arms):
        if arm.gain_vs is None:
            continue
        report.baselines[arm.name] = arm.gain_vs
        base = values[arm.gain_vs]
        mine = values[arm.name]
        for k, eid in enumerate(config.estimators):
            rng = np.random.default_rng(np.random.SeedSequence(
                entropy=config.seed, spawn_key=(_STREAM_GAIN, arm_index, k)))
            report.gains[(arm.name, keys[k])] = efficiency_gain(
                base[:, k], mine[:, k],
                report.mean_samples[arm.gain_vs], report.mean_samples[arm.name],
                n_boot=config.gain_boot, rng=rng)
    return report


# ---------------------------------------------------------------------------
# allocation profile


def alloc_profile_rows(config: ExperimentConfig, out_dir: str) -> list[dict]:
    """Per-run (log-volume, live count) polylines for one arm, plus the
    relative posterior mass and posterior mass remaining curves scaled so
    each integrates (over log-volume) to the mean polyline area."""
    manifest = load_manifest(out_dir)
    _check_run_files(out_dir, manifest)
    arm_name = config.profile_arm or _default_focus_arm(config)
    entry = _manifest_arm(manifest, arm_name)
    recs = entry["runs"][:max(1, config.profile_runs)]
    rows = []
    areas = []
    low = 0.0
    m = config.model
    for rec in recs:
        run = load_run(os.path.join(out_dir, rec["path"]))
        logv = log_prior_volumes(run)
        counts = live_point_counts(run)
        area = 0.0
        prev = 0.0
        for v, c in zip(logv, counts):
            area += float(c) * (prev - v)
            prev = v
        areas.append(area)
        low = min(low, float(logv[-1]))
        for v, c in zip(logv, counts):
            rows.append({"row": "run", "name": arm_name,
                         "index": rec["index"], "log_x": repr(float(v)),
                         "value": repr(float(c))})
    mean_area = float(np.mean(areas))
    grid = np.linspace(low, 0.0, 513)
    for curve_name, func in (("relative_posterior_mass", relative_posterior_mass),
                             ("posterior_mass_remaining", posterior_mass_remaining)):
        vals = np.asarray(func(m, grid), dtype=float)
        raw_area = float(np.trapezoid(vals, grid))
        scaled = vals * (mean_area / raw_area)
        for v, y in zip(grid, scaled):
            rows.append({"row": "curve", "name": curve_name, "index": "",
                         "log_x": repr(float(v)), "value": repr(float(y))})
    return rows


def write_alloc_profile_csv(rows: list[dict], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("row", "name", "index",
                                                "log_x", "value"),
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# bootstrap table


_TABLE_STATS = ("mean", "repeats_std", "bootstrap_std",
                "bootstrap_over_repeats", "coverage_1sigma",
                "credible_upper_95", "coverage_95")


def bootstrap_table_rows(config: ExperimentConfig, out_dir: str) -> list[dict]:
    """Seven summary statistics per estimator for one arm's ensemble.

    Each run is resampled bootstrap_reps times; one resample feeds every
    estimator so the replicate noise is shared across columns.
    """
    manifest = load_manifest(out_dir)
    _check_run_files(out_dir, manifest)
    arm_name = config.table_arm or _default_focus_arm(config)
    entry = _manifest_arm(manifest, arm_name)
    if len(entry["runs"]) < 2:
        raise ValueError("bootstrap table needs at least 2 runs to measure "
                         "repeat spread")
    eids = config.estimators
    truths = []
    for eid in eids:
        t = estimator_truth(config.model, eid)
        if t is None:
            raise ValueError(f"no analytic truth for estimator {eid.key!r}; "
                             "coverage columns need one")
        truths.append(t)
    truths = np.array(truths)
    n_runs = len(entry["runs"])
    n_est = len(eids)
    est = np.empty((n_runs, n_est))
    boot_std = np.empty((n_runs, n_est))
    cred95 = np.empty((n_runs, n_est))
    uniform = None
    for j, rec in enumerate(entry["runs"]):
        run = load_run(os.path.join(out_dir, rec["path"]))
        for k, eid in enumerate(eids):
            est[j, k] = estimate(run, eid)
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=config.seed, spawn_key=(_STREAM_BOOT, j)))
        separate = run.provenance.init_thread_ids is not None
        reps = np.empty((config.bootstrap_reps, n_est))
        for r in range(config.bootstrap_reps):
            rb = bootstrap_resample(run, rng, separate_initial=separate)
            for k, eid in enumerate(eids):
                reps[r, k] = estimate(rb, eid)
        boot_std[j] = reps.std(axis=0, ddof=1)
        if uniform is None or len(uniform) != config.bootstrap_reps:
            uniform = np.ones(config.bootstrap_reps)
        for k in range(n_est):
            cred95[j, k] = weighted_quantile(reps[:, k], uniform, 0.95)
    repeats_std = est.std(axis=0, ddof=1)
    mean_boot = boot_std.mean(axis=0)
    stats = {
        "mean": est.mean(axis=0),
        "repeats_std": repeats_std,
        "bootstrap_std": mean_boot,
        "bootstrap_over_repeats": mean_boot / repeats_std,
        "coverage_1sigma": np.mean(np.abs(est - truths) <= boot_std, axis=0),
        "credible_upper_95": cred95.mean(axis=0),
        "coverage_95": np.mean(truths <= cred95, axis=0),
    }
    rows = []
    for name in _TABLE_STATS:
        row = {"statistic": name}
        for k, eid in enumerate(eids):
            row[eid.key] = repr(float(stats[name][k]))
        rows.append(row)
    return rows


def write_bootstrap_table_csv(rows: list[dict], config: ExperimentConfig,
                              path: str) -> None:
    fields = ["statistic"] + [e.key for e in config.estimators]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
