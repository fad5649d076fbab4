"""Ensemble generation, manifests, and the three report builders."""

import csv
import json
import math
import os

import numpy as np
import pytest

from varlive.analysis import estimator_from_key
from varlive.experiments import (ArmConfig, ExperimentConfig,
                                 MissingRunsError, alloc_profile_rows,
                                 bootstrap_table_rows, compare_report,
                                 config_from_dict, estimator_truth,
                                 generate_ensemble, load_manifest)
from varlive.models import ModelSpec


def small_config(**overrides):
    base = {
        "model": {"family": "gaussian", "d": 2, "sigma_pi": 10.0},
        "n_runs": 4,
        "seed": 1234,
        "estimators": ["log_z", "mean_theta1", "median_radius"],
        "bootstrap_reps": 16,
        "gain_boot": 40,
        "arms": [
            {"name": "std", "method": "standard", "n_live": 40},
            {"name": "dyn1", "method": "dyn1", "goal_g": 1.0, "gain_vs": "std"},
            {"name": "dyn2", "method": "dyn2", "goal_g": 0.0, "budget": 350,
             "gain_vs": "std"},
        ],
    }
    base.update(overrides)
    return config_from_dict(base)


@pytest.fixture(scope="module")
def ensemble(tmp_path_factory):
    out = str(tmp_path_factory.mktemp("ens"))
    cfg = small_config()
    manifest = generate_ensemble(cfg, out)
    return cfg, out, manifest


class TestConfig:
    def test_round_trip(self):
        cfg = small_config()
        for arm in cfg.arms:
            assert ArmConfig.from_dict(arm.to_dict()) == arm

    def test_validation(self):
        with pytest.raises(ValueError, match="unique"):
            small_config(arms=[{"name": "a", "method": "standard", "n_live": 5},
                               {"name": "a", "method": "standard", "n_live": 5}])
        with pytest.raises(ValueError, match="method"):
            ArmConfig(name="x", method="magic")
        with pytest.raises(ValueError, match="n_init or a gain_vs"):
            ArmConfig(name="x", method="dyn1")
        with pytest.raises(ValueError, match="unknown arm keys"):
            ArmConfig.from_dict({"name": "x", "method": "standard",
                                 "n_live": 5, "colour": "red"})
        with pytest.raises(ValueError, match="references unknown"):
            small_config(arms=[{"name": "a", "method": "standard", "n_live": 5,
                                "gain_vs": "ghost"}])
        with pytest.raises(ValueError, match="itself"):
            small_config(arms=[{"name": "a", "method": "standard", "n_live": 5,
                                "gain_vs": "a"}])
        with pytest.raises(ValueError, match="estimator"):
            small_config(estimators=[])
        with pytest.raises(ValueError, match="n_runs"):
            small_config(n_runs=0)


class TestGenerate:
    def test_manifest_deterministic(self, ensemble, tmp_path):
        cfg, out, _ = ensemble
        again = str(tmp_path / "again")
        generate_ensemble(cfg, again)
        for rel in ("manifest.json", os.path.join("std", "run_00001.json"),
                    os.path.join("dyn1", "run_00003.json")):
            a = open(os.path.join(out, rel), "rb").read()
            b = open(os.path.join(again, rel), "rb").read()
            assert a == b, rel

    def test_budget_matches_standard_arm(self, ensemble):
        _, _, manifest = ensemble
        by_name = {a["name"]: a for a in manifest["arms"]}
        want = round(by_name["std"]["mean_samples"])
        assert by_name["dyn1"]["budget"] == want
        assert by_name["dyn2"]["budget"] == 350  # explicit value kept

    def test_default_init_fractions(self, ensemble):
        _, _, manifest = ensemble
        by_name = {a["name"]: a for a in manifest["arms"]}
        assert by_name["dyn1"]["n_init"] == 4   # 10% of 40
        assert by_name["dyn2"]["n_init"] == 8   # 20% of 40

    def test_manifest_counts_match_files(self, ensemble):
        from varlive.runio import load_run
        _, out, manifest = ensemble
        for arm in manifest["arms"]:
            for rec in arm["runs"]:
                run = load_run(os.path.join(out, rec["path"]))
                assert len(run.log_l) == rec["n_samples"]

    def test_worker_count_transparent(self, tmp_path):
        cfg = small_config(n_runs=2,
                           arms=[{"name": "std", "method": "standard",
                                  "n_live": 25},
                                 {"name": "dyn1", "method": "dyn1",
                                  "goal_g": 0.5, "gain_vs": "std"}])
        seq = str(tmp_path / "w1")
        par = str(tmp_path / "w2")
        generate_ensemble(cfg, seq, workers=1)
        generate_ensemble(cfg, par, workers=2)
        for rel in ("manifest.json", os.path.join("dyn1", "run_00000.json")):
            assert open(os.path.join(seq, rel), "rb").read() == \
                open(os.path.join(par, rel), "rb").read(), rel
        rep_seq = compare_report(cfg, seq)
        rep_par = compare_report(cfg, par)
        assert rep_seq.to_rows() == rep_par.to_rows()


class TestTruths:
    @pytest.mark.parametrize("d", [2, 3, 10])
    @pytest.mark.parametrize("sigma_pi", [0.1, 10.0])
    def test_against_scipy(self, d, sigma_pi):
        from scipy import stats
        m = ModelSpec(family="gaussian", d=d, sigma_pi=sigma_pi)
        sig = sigma_pi / math.sqrt(1.0 + sigma_pi ** 2)
        cred = estimator_truth(m, estimator_from_key("credible_theta1:0.84"))
        assert cred == pytest.approx(sig * stats.norm.ppf(0.84), rel=1e-10)
        med_r = estimator_truth(m, estimator_from_key("median_radius"))
        assert med_r == pytest.approx(sig * math.sqrt(stats.chi2.ppf(0.5, d)),
                                      rel=1e-9)
        mean_r = estimator_truth(m, estimator_from_key("mean_radius"))
        assert mean_r == pytest.approx(sig * stats.chi.mean(d), rel=1e-10)
        assert estimator_truth(m, estimator_from_key("second_moment_theta1")) \
            == pytest.approx(sig ** 2, rel=1e-12)

    def test_non_gaussian_families(self):
        m = ModelSpec(family="exp_power", d=4, sigma_pi=10.0, b=2.0)
        assert estimator_truth(m, estimator_from_key("log_z")) is not None
        assert estimator_truth(m, estimator_from_key("mean_theta1")) == 0.0
        assert estimator_truth(m, estimator_from_key("median_radius")) is None


class TestCompare:
    def test_report_structure(self, ensemble):
        cfg, out, _ = ensemble
        report = compare_report(cfg, out)
        rows = report.to_rows()
        kinds = [r["row"] for r in rows]
        assert kinds.count("samples") == 3
        assert kinds.count("estimate") == 9
        assert kinds.count("gain") == 6
        for r in rows:
            if r["row"] == "estimate":
                assert math.isfinite(float(r["value"]))
                assert float(r["spread"]) > 0.0
                assert r["truth"] != ""  # gaussian: every estimator has one
                assert float(r["rmse"]) > 0.0
            if r["row"] == "gain":
                assert r["baseline"] == "std"
                assert float(r["sigma"]) > 0.0

    def test_csv_written(self, ensemble, tmp_path):
        cfg, out, _ = ensemble
        report = compare_report(cfg, out)
        path = str(tmp_path / "report.csv")
        report.write_csv(path)
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3 + 9 + 6
        got = next(r for r in rows if r["row"] == "samples" and r["arm"] == "std")
        assert float(got["value"]) == report.mean_samples["std"]

    def test_identical_seeded_arms_gain_exactly_one(self, tmp_path):
        cfg = small_config(
            n_runs=3,
            arms=[{"name": "a", "method": "standard", "n_live": 30,
                   "seed": 777},
                  {"name": "b", "method": "standard", "n_live": 30,
                   "seed": 777, "gain_vs": "a"}])
        out = str(tmp_path / "twin")
        generate_ensemble(cfg, out)
        assert open(os.path.join(out, "a", "run_00002.json"), "rb").read() == \
            open(os.path.join(out, "b", "run_00002.json"), "rb").read()
        report = compare_report(cfg, out)
        for key in report.estimator_keys:
            assert report.gain("b", key).gain == 1.0

    def test_missing_runs_listed(self, tmp_path):
        cfg = small_config(n_runs=2,
                           arms=[{"name": "std", "method": "standard",
                                  "n_live": 20}])
        out = str(tmp_path / "holey")
        generate_ensemble(cfg, out)
        victim = os.path.join("std", "run_00001.json")
        os.remove(os.path.join(out, victim))
        with pytest.raises(MissingRunsError) as err:
            compare_report(cfg, out)
        assert victim in err.value.missing
        assert victim in str(err.value)

    def test_single_run_rejected(self, tmp_path):
        cfg = small_config(n_runs=1,
                           arms=[{"name": "std", "method": "standard",
                                  "n_live": 20}])
        out = str(tmp_path / "single")
        generate_ensemble(cfg, out)
        with pytest.raises(ValueError, match="n_runs"):
            compare_report(cfg, out)


class TestAllocProfile:
    def test_area_self_consistency(self, ensemble):
        cfg, out, _ = ensemble
        rows = alloc_profile_rows(cfg, out)
        run_rows = [r for r in rows if r["row"] == "run"]
        curve_rows = [r for r in rows if r["row"] == "curve"]
        assert {r["name"] for r in run_rows} == {"dyn1"}

        by_run = {}
        for r in run_rows:
            by_run.setdefault(r["index"], []).append(
                (float(r["log_x"]), float(r["value"])))
        areas = []
        for pts in by_run.values():
            prev = 0.0
            area = 0.0
            for v, c in pts:  # rows arrive likelihood-ordered, volume decreasing
                area += c * (prev - v)
                prev = v
            areas.append(area)
        mean_area = np.mean(areas)

        curves = {}
        for r in curve_rows:
            curves.setdefault(r["name"], []).append(
                (float(r["log_x"]), float(r["value"])))
        assert set(curves) == {"relative_posterior_mass",
                               "posterior_mass_remaining"}
        for name, pts in curves.items():
            assert len(pts) == 513
            xs = np.array([p[0] for p in pts])
            ys = np.array([p[1] for p in pts])
            assert np.all(np.diff(xs) > 0)
            area = np.trapezoid(ys, xs)
            assert area == pytest.approx(mean_area, rel=1e-6), name

    def test_profile_run_count(self, ensemble):
        import dataclasses
        cfg, out, _ = ensemble
        cfg2 = dataclasses.replace(cfg, profile_runs=2, profile_arm="std")
        rows = alloc_profile_rows(cfg2, out)
        indices = {r["index"] for r in rows if r["row"] == "run"}
        assert indices == {0, 1}
        assert {r["name"] for r in rows if r["row"] == "run"} == {"std"}


class TestBootstrapTable:
    def test_rows_and_statistics(self, ensemble):
        cfg, out, _ = ensemble
        rows = bootstrap_table_rows(cfg, out)
        assert [r["statistic"] for r in rows] == [
            "mean", "repeats_std", "bootstrap_std", "bootstrap_over_repeats",
            "coverage_1sigma", "credible_upper_95", "coverage_95"]
        table = {r["statistic"]: r for r in rows}
        for key in ("log_z", "mean_theta1", "median_radius"):
            ratio = float(table["bootstrap_over_repeats"][key])
            assert ratio == pytest.approx(
                float(table["bootstrap_std"][key]) /
                float(table["repeats_std"][key]), rel=1e-12)
            for cov_row in ("coverage_1sigma", "coverage_95"):
                cov = float(table[cov_row][key])
                assert 0.0 <= cov <= 1.0
            assert float(table["credible_upper_95"][key]) >= \
                float(table["mean"][key]) - 3 * float(table["repeats_std"][key])

    def test_single_run_rejected(self, tmp_path):
        cfg = small_config(n_runs=1,
                           arms=[{"name": "std", "method": "standard",
                                  "n_live": 20}])
        out = str(tmp_path / "single")
        generate_ensemble(cfg, out)
        with pytest.raises(ValueError, match="at least 2 runs"):
            bootstrap_table_rows(cfg, out)
