import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from spatialar import (
    BoundaryPoint,
    ConfigError,
    ExperimentConfig,
    NearlyUnstableDesign,
    Schedule,
    Tolerances,
    run_clt,
    verify_covlim,
    verify_detB,
    verify_prop1,
    verify_score,
)
from spatialar.harness import dumps_canonical, scaled_expected_B


def interior_design():
    return NearlyUnstableDesign(BoundaryPoint.from_pair(0.5, 0.5),
                                Schedule.constant(1.0), Schedule.constant(1.0))


def boundary_design():
    return NearlyUnstableDesign(BoundaryPoint.from_pair(1.0, 0.0),
                                Schedule.constant(2.0), Schedule.constant(1.0))


def small_config(**kw):
    defaults = dict(design=interior_design(), ladder=[(16, 16)], reps=100,
                    master_seed=11)
    defaults.update(kw)
    return ExperimentConfig(**defaults)


class TestConfigValidation:
    def test_zero_reps_rejected(self):
        with pytest.raises(ConfigError):
            small_config(reps=0).validate()

    def test_small_reps_rejected(self):
        with pytest.raises(ConfigError):
            small_config(reps=50).validate()

    def test_flat_ladder_rejected(self):
        # s = m keeps the boundary-case statistic constant
        with pytest.raises(ConfigError):
            small_config(design=boundary_design(),
                         ladder=[(8, 8), (16, 16)]).validate()

    def test_decreasing_ladder_rejected(self):
        with pytest.raises(ConfigError):
            small_config(ladder=[(64, 64), (64, 32)]).validate()

    def test_index_too_small_rejected(self):
        from spatialar import NonStationaryError

        with pytest.raises(NonStationaryError):
            small_config(ladder=[(1, 16)]).validate()

    def test_json_roundtrip(self):
        cfg = small_config(out_dir="somewhere")
        cfg2 = ExperimentConfig.from_json(cfg.to_json())
        assert cfg2.to_json() == cfg.to_json()

    def test_malformed_config(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json({"design": {}})


class TestCanonicalJson:
    def test_seventeen_digit_floats(self):
        text = dumps_canonical({"x": 1.0 / 3.0})
        assert "0.33333333333333331" in text
        assert json.loads(text) == {"x": float(format(1 / 3, ".17g"))}

    def test_non_finite_become_strings(self):
        assert dumps_canonical({"w": math.inf}) == '{"w":"inf"}'

    def test_sorted_keys(self):
        assert dumps_canonical({"b": 1, "a": 2}) == '{"a":2,"b":1}'


class TestRunCLT:
    def test_determinism_across_runs_and_workers(self, tmp_path):
        cfg1 = small_config(out_dir=str(tmp_path / "r1"))
        rep1 = run_clt(cfg1, workers=1)
        cfg2 = small_config(out_dir=str(tmp_path / "r2"))
        rep2 = run_clt(cfg2, workers=2)
        d1, d2 = rep1.to_canonical_dict(), rep2.to_canonical_dict()
        d1["config"]["out_dir"] = d2["config"]["out_dir"] = None
        assert dumps_canonical(d1) == dumps_canonical(d2)
        csv1 = (tmp_path / "r1" / "errors_m16_s16.csv").read_bytes()
        csv2 = (tmp_path / "r2" / "errors_m16_s16.csv").read_bytes()
        assert csv1 == csv2

    def test_null_pipeline_is_exactly_zero(self):
        rep = run_clt(small_config(), use_true_theta=True)
        rec = rep.per_size[0]
        assert_allclose(rec["scaled_mean"], [0.0, 0.0])
        assert_allclose(rec["scaled_cov"], np.zeros((2, 2)))
        assert rec["proj_var"] == {"sum": 0.0, "diff": 0.0}

    def test_report_covariance_symmetric_psd(self):
        rep = run_clt(small_config(reps=200))
        cov = np.array(rep.per_size[0]["scaled_cov"])
        assert_allclose(cov, cov.T)
        assert np.all(np.linalg.eigvalsh(cov) >= -1e-12)

    def test_interior_singular_signature(self):
        # sum-direction variance shrinks along the ladder; difference
        # direction stays on the same scale (the rank-one limit law)
        cfg = small_config(ladder=[(24, 24), (96, 96)], reps=300,
                           master_seed=17)
        rep = run_clt(cfg)
        v1, v2 = (r["proj_var"] for r in rep.per_size)
        assert v2["sum"] < v1["sum"]
        assert 0.2 < v2["diff"] / v1["diff"] < 5.0

    def test_boundary_records(self):
        cfg = ExperimentConfig(boundary_design(), [(16, 64)], reps=150,
                               master_seed=5)
        rep = run_clt(cfg)
        rec = rep.per_size[0]
        assert rec["omega_n"] == pytest.approx(2.0)
        assert "normalized_cov" in rec and "elementwise_dev" in rec
        assert rec["singular_reps"] == 0

    def test_normality_diagnostic_reported(self):
        rep = run_clt(small_config(reps=400))
        rec = rep.per_size[0]["normality"]
        assert rec["threshold"] == pytest.approx(1.63 / math.sqrt(400))
        assert 0.0 < rec["d_diff"] < 1.0 and 0.0 < rec["d_sum"] < 1.0

    def test_report_files(self, tmp_path):
        cfg = small_config(out_dir=str(tmp_path / "out"))
        run_clt(cfg)
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["schema"] == "spatialar-report-v1"
        assert report["per_size"][0]["reps_used"] == 100
        timing = json.loads((tmp_path / "out" / "timing.json").read_text())
        assert len(timing["per_size"]) == 1
        with open(tmp_path / "out" / "errors_m16_s16.csv") as fh:
            header = fh.readline().strip()
        assert header == "rep_id,alpha_hat,beta_hat,scaled_err_a,scaled_err_b"


class TestVerifySuites:
    def test_prop1_boundary_passes(self):
        r = verify_prop1(boundary_design(),
                         [(m, math.ceil(m**1.25)) for m in (16, 32, 64)])
        assert r["strictly_decreasing"] and r["pass"]

    def test_prop1_interior_decreasing(self):
        r = verify_prop1(interior_design(), [(64, 64), (128, 128), (256, 256)])
        assert r["strictly_decreasing"]

    def test_covlim_both_cases(self):
        for design in (interior_design(), boundary_design()):
            r = verify_covlim(design, m=10_000_000, n_probe=8000)
            assert r["pass"], r
            assert r["value_at_zero_lag"] <= r["bound"] * (1 + 1e-6)

    def test_detb_report_structure(self):
        r = verify_detB(interior_design(), 64, 64, reps=150, master_seed=3)
        assert r["target"] == pytest.approx(2.0 * 2.0**-1.5)
        assert 0.2 < r["scaled_mean"] < 1.0
        assert r["std_error"] < 0.02

    def test_detb_interior_only(self):
        with pytest.raises(ConfigError):
            verify_detB(boundary_design(), 64, 64, reps=100)

    def test_detb_target_rescales_with_parameters(self):
        d = NearlyUnstableDesign(BoundaryPoint.from_pair(0.6, 0.4),
                                 Schedule.constant(1.0), Schedule.constant(1.0))
        r = verify_detB(d, 32, 32, reps=100, master_seed=3)
        assert r["target"] == pytest.approx(2.0 * 1.92**-1.5)

    def test_score_boundary_passes(self):
        r = verify_score(boundary_design(), 32, 181, reps=400, master_seed=7)
        assert r["pass"], r
        assert r["mean_within_4se"]

    def test_score_interior_mean_zero(self):
        r = verify_score(interior_design(), 64, 64, reps=300, master_seed=9)
        assert r["mean_within_4se"]


def test_scaled_expected_B_limits():
    # closed-form sanity for the two scalings used by the verifiers
    assert scaled_expected_B(interior_design(), 4096, 4096).a11 == pytest.approx(
        (32 * 0.25) ** -0.5, rel=0.02)
    assert scaled_expected_B(boundary_design(), 4096, 4096 * 2).a11 == pytest.approx(
        0.25, rel=0.01)
