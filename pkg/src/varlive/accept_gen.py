"""Regenerates the benchmark ensemble cache used by the acceptance tests.

Each block is one seeded ensemble: a model plus a list of arms (standard
and dynamic) run many times.  The cache stores per-run sample counts and
estimator values - plus per-run bootstrap spread columns for the error
calibration block - rather than the runs themselves, so the committed
files stay small while the tests can recompute every gain and coverage
statistic exactly.

    python3 -m varlive.accept_gen              # build missing blocks
    python3 -m varlive.accept_gen --force c1   # rebuild one block
    python3 -m varlive.accept_gen --list

Blocks are deterministic: fixed seeds, streams keyed (stream, arm, run),
so a rebuild reproduces the committed files bit for bit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .analysis import bootstrap_resample, estimate, estimator_from_key, weighted_quantile
from .dynamic import AlgorithmOneConfig, GoalConfig, dynamic_run_algorithm1
from .models import ModelSpec
from .sampler import SamplerConfig, standard_run

__all__ = ["BLOCKS", "EST_KEYS", "default_cache_dir", "generate_block",
           "load_block", "main"]

EST_KEYS = ("log_z", "mean_theta1", "median_theta1", "credible_theta1:0.84",
            "second_moment_theta1", "mean_radius", "median_radius")

CACHE_VERSION = 1

_STREAM_SAMPLE = 0
_STREAM_BOOT = 2

# ---------------------------------------------------------------------------
# block table: every ensemble the acceptance tests consume


def _gauss(d, sigma):
    return {"family": "gaussian", "d": d, "sigma_pi": sigma}


def _ep(d, b):
    return {"family": "exp_power", "d": d, "sigma_pi": 10.0, "b": b}


def _std(n_live, name="std"):
    return {"name": name, "method": "standard", "n_live": n_live}


def _dyn(name, goal_g, n_init, n_batch, variant="standard"):
    return {"name": name, "method": "dyn1", "goal_g": goal_g, "n_init": n_init,
            "n_batch": n_batch, "importance_variant": variant}


BLOCKS: dict[str, dict] = {
    # four-arm speedup table at d=10
    "c1": {"model": _gauss(10, 10.0), "n_runs": 500, "seed": 101,
           "arms": [_std(500), _dyn("dyn_g0", 0.0, 50, 10),
                    _dyn("dyn_g025", 0.25, 50, 10),
                    _dyn("dyn_g1", 1.0, 50, 10)]},
    # exp-power spot checks at d=10
    "c2_b2": {"model": _ep(10, 2.0), "n_runs": 500, "seed": 102,
              "arms": [_std(500), _dyn("dyn_g1", 1.0, 50, 10)]},
    "c2_b075": {"model": _ep(10, 0.75), "n_runs": 500, "seed": 103,
                "arms": [_std(500), _dyn("dyn_g0", 0.0, 50, 10)]},
    # dimension scan for the parameter-goal trend
    "c3_d2": {"model": _gauss(2, 10.0), "n_runs": 100, "seed": 104,
              "arms": [_std(200), _dyn("dyn_g1", 1.0, 20, 5)]},
    "c3_d10": {"model": _gauss(10, 10.0), "n_runs": 100, "seed": 105,
               "arms": [_std(200), _dyn("dyn_g1", 1.0, 20, 10)]},
    "c3_d100": {"model": _gauss(100, 10.0), "n_runs": 100, "seed": 106,
                "arms": [_std(200), _dyn("dyn_g1", 1.0, 20, 20)]},
    "c3_d1000": {"model": _ep(1000, 2.0), "n_runs": 50, "seed": 107,
                 "arms": [_std(200), _dyn("dyn_g1", 1.0, 20, 100)]},
    # narrow-prior evidence-goal spot check
    "c4": {"model": _gauss(2, 0.1), "n_runs": 200, "seed": 108,
           "arms": [_std(200), _dyn("dyn_g0", 0.0, 20, 5)]},
    # error-calibration ensemble; dynamic arm carries bootstrap columns
    "c5": {"model": _gauss(3, 10.0), "n_runs": 500, "seed": 109,
           "arms": [_std(200), _dyn("dyn_g1", 1.0, 20, 5)],
           "bootstrap": {"arm": "dyn_g1", "n_reps": 200}},
    # tuned-vs-untuned parameter importance on heavy tails
    "c7": {"model": {"family": "cauchy", "d": 10, "sigma_pi": 10.0},
           "n_runs": 500, "seed": 110,
           "arms": [_std(500), _dyn("dyn_untuned", 1.0, 50, 10),
                    _dyn("dyn_tuned", 1.0, 50, 10, variant="tuned")]},
}


def default_cache_dir() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.normpath(os.path.join(here, "..", "..", "acceptance_cache"))


# ---------------------------------------------------------------------------
# per-run work (module-level for pickling)


def _sample_run(model_dict, arm, entropy, run_index):
    m = ModelSpec.from_dict(model_dict)
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=entropy, spawn_key=(_STREAM_SAMPLE, arm["_index"], run_index)))
    if arm["method"] == "standard":
        return standard_run(m, SamplerConfig(n_live=arm["n_live"]), rng)
    goal = GoalConfig(goal_g=arm["goal_g"],
                      importance_variant=arm.get("importance_variant", "standard"))
    cfg = AlgorithmOneConfig(n_init=arm["n_init"], sample_budget=arm["budget"],
                             n_batch=arm["n_batch"])
    return dynamic_run_algorithm1(m, goal, cfg, rng=rng)


def _run_task(model_dict, arm, entropy, run_index, eids, boot_reps):
    run = _sample_run(model_dict, arm, entropy, run_index)
    values = [estimate(run, eid) for eid in eids]
    out = {"n": len(run.log_l), "est": values}
    if boot_reps:
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=entropy, spawn_key=(_STREAM_BOOT, arm["_index"], run_index)))
        separate = run.provenance.init_thread_ids is not None
        reps = np.empty((boot_reps, len(eids)))
        for r in range(boot_reps):
            rb = bootstrap_resample(run, rng, separate_initial=separate)
            reps[r] = [estimate(rb, eid) for eid in eids]
        uniform = np.ones(boot_reps)
        out["boot_std"] = reps.std(axis=0, ddof=1).tolist()
        out["cred_upper95"] = [weighted_quantile(reps[:, k], uniform, 0.95)
                               for k in range(len(eids))]
    return out


def _star(args):
    return _run_task(*args)


def generate_block(name: str, out_dir: str, n_runs: int | None = None,
                   workers: int = 1, log=print) -> dict:
    spec = BLOCKS[name]
    n_runs = spec["n_runs"] if n_runs is None else n_runs
    eids = [estimator_from_key(k) for k in EST_KEYS]
    boot_cfg = spec.get("bootstrap")
    t_start = time.perf_counter()
    arms_out = []
    realized = {}
    for arm_index, arm in enumerate(spec["arms"]):
        arm = dict(arm, _index=arm_index)
        if arm["method"] != "standard":
            # match the first standard arm's mean realized sample count
            arm["budget"] = int(round(realized["std"]))
        boot_reps = 0
        if boot_cfg and boot_cfg["arm"] == arm["name"]:
            boot_reps = int(boot_cfg["n_reps"])
        tasks = [(spec["model"], arm, spec["seed"], j, eids, boot_reps)
                 for j in range(n_runs)]
        t0 = time.perf_counter()
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_star, tasks, chunksize=1))
        else:
            results = [_star(t) for t in tasks]
        dt = time.perf_counter() - t0
        counts = [r["n"] for r in results]
        realized[arm["name"]] = float(np.mean(counts))
        entry = {"name": arm["name"],
                 "settings": {k: v for k, v in arm.items() if k != "_index"},
                 "n_samples": counts,
                 "mean_samples": float(np.mean(counts)),
                 "estimates": {key: [r["est"][k] for r in results]
                               for k, key in enumerate(EST_KEYS)}}
        if boot_reps:
            entry["boot_std"] = {key: [r["boot_std"][k] for r in results]
                                 for k, key in enumerate(EST_KEYS)}
            entry["cred_upper95"] = {key: [r["cred_upper95"][k] for r in results]
                                     for k, key in enumerate(EST_KEYS)}
        arms_out.append(entry)
        log(f"  [{name}] arm {arm['name']}: {n_runs} runs, "
            f"mean {realized[arm['name']]:.0f} samples, {dt:.1f}s")
    block = {"version": CACHE_VERSION, "name": name, "model": spec["model"],
             "seed": spec["seed"], "n_runs": n_runs,
             "estimator_keys": list(EST_KEYS),
             "wall_seconds": time.perf_counter() - t_start,
             "arms": arms_out}
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{name}.json")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(block, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    log(f"  [{name}] wrote {path} ({block['wall_seconds']:.1f}s total)")
    return block


def load_block(name: str, cache_dir: str | None = None) -> dict:
    cache_dir = cache_dir or default_cache_dir()
    path = os.path.join(cache_dir, f"{name}.json")
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"acceptance cache block {name!r} missing at {path}; "
            "regenerate with: python3 -m varlive.accept_gen")
    with open(path, encoding="utf-8") as fh:
        block = json.load(fh)
    if block.get("version") != CACHE_VERSION:
        raise ValueError(f"cache block {name!r} has version "
                         f"{block.get('version')!r}, want {CACHE_VERSION}")
    return block


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="python3 -m varlive.accept_gen",
        description="build the acceptance-test ensemble cache")
    parser.add_argument("blocks", nargs="*",
                        help="block names (default: all missing)")
    parser.add_argument("--out", default=default_cache_dir())
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--runs", type=int, default=None,
                        help="override run count (spot checks only)")
    parser.add_argument("--force", action="store_true",
                        help="rebuild even if the block file exists")
    parser.add_argument("--list", action="store_true")
    args = parser.parse_args(argv)
    if args.list:
        for name, spec in BLOCKS.items():
            arms = ", ".join(a["name"] for a in spec["arms"])
            print(f"{name}: {spec['model']['family']} d={spec['model']['d']} "
                  f"runs={spec['n_runs']} arms=[{arms}]")
        return 0
    names = args.blocks or list(BLOCKS)
    unknown = [n for n in names if n not in BLOCKS]
    if unknown:
        print(f"unknown blocks: {unknown}", file=sys.stderr)
        return 2
    for name in names:
        path = os.path.join(args.out, f"{name}.json")
        if os.path.exists(path) and not args.force and args.runs is None:
            print(f"  [{name}] exists, skipping")
            continue
        generate_block(name, args.out, n_runs=args.runs, workers=args.workers)
    return 0


if __name__ == "__main__":
    sys.exit(main())
