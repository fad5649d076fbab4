"""Run-file round trips must be bit-exact and standard JSON."""

import json

import numpy as np
import pytest

from varlive.analysis import LOG_Z, MEAN_THETA1, MEDIAN_RADIUS, estimate
from varlive.dynamic import (AlgorithmOneConfig, AlgorithmTwoConfig,
                             GoalConfig, dynamic_run_algorithm1,
                             dynamic_run_algorithm2)
from varlive.models import ModelSpec
from varlive.runio import load_run, run_from_dict, run_to_dict, save_run
from varlive.sampler import SamplerConfig, standard_run

M3 = ModelSpec(family="gaussian", d=3, sigma_pi=10.0)


def _sample_runs():
    rng = np.random.default_rng(42)
    std = standard_run(M3, SamplerConfig(n_live=30), rng)
    goal = GoalConfig(goal_g=0.5)
    d1 = dynamic_run_algorithm1(M3, goal,
                                AlgorithmOneConfig(n_init=8, sample_budget=160),
                                rng=rng)
    d2 = dynamic_run_algorithm2(M3, goal,
                                AlgorithmTwoConfig(n_init=8, total_budget=200),
                                rng=rng)
    return {"standard": std, "alg1": d1, "alg2": d2}


@pytest.fixture(scope="module")
def runs():
    return _sample_runs()


@pytest.mark.parametrize("kind", ["standard", "alg1", "alg2"])
def test_round_trip_bit_exact(runs, kind, tmp_path):
    run = runs[kind]
    path = str(tmp_path / "run.json")
    save_run(run, path)
    back = load_run(path)
    for attr in ("log_l", "birth_log_l", "theta1", "radius", "true_log_x",
                 "thread_id", "open_birth_log_l", "open_end_log_l",
                 "open_thread_id"):
        np.testing.assert_array_equal(getattr(back, attr), getattr(run, attr),
                                      err_msg=attr)
    assert back.model == run.model
    assert back.provenance == run.provenance
    for eid in (LOG_Z, MEAN_THETA1, MEDIAN_RADIUS):
        assert estimate(back, eid) == estimate(run, eid)


def test_resave_byte_identical(runs, tmp_path):
    a = str(tmp_path / "a.json")
    b = str(tmp_path / "b.json")
    save_run(runs["alg1"], a)
    save_run(load_run(a), b)
    assert open(a, "rb").read() == open(b, "rb").read()


def test_file_is_strict_json(runs, tmp_path):
    # non-finite floats must travel as strings, not bare Infinity tokens
    path = str(tmp_path / "run.json")
    save_run(runs["standard"], path)
    text = open(path, encoding="utf-8").read()
    assert '"-inf"' in text  # prior-wide birth contours

    def reject(token):
        raise AssertionError(f"bare {token} token in file")

    doc = json.loads(text, parse_constant=reject)
    back = run_from_dict(doc)
    np.testing.assert_array_equal(back.birth_log_l, runs["standard"].birth_log_l)


def test_version_guard(runs):
    doc = run_to_dict(runs["standard"])
    doc["version"] = 999
    with pytest.raises(ValueError, match="version"):
        run_from_dict(doc)
