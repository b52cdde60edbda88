"""Monte Carlo runners: power estimation, probit sample-size search, grid tables."""
import json
import math
import warnings

import numpy as np
import pytest
from scipy.stats import norm

from smartb import (
    GenParamsThreeWave,
    GenParamsTwoWave,
    SearchFailureError,
    SimulationFailureError,
    canonical_json,
    estimate_power,
    estimate_power_multi,
    find_sample_size,
    pilot_marginal_correlation,
)
from smartb.experiments import (
    DEFAULT_SEED,
    GENERATIVE_GRID,
    GRID_ROW_ORDER,
    REFERENCE_N,
    REFERENCE_POWER,
    REFERENCE_THREE_WAVE,
    TableDocument,
    run_table3,
    run_table4,
    run_table5,
)
from smartb.gee import ModelSpec

NULL_GEN = GenParamsTwoWave(resp_a1=0.0, beta_a1=0.0)
ROW = GENERATIVE_GRID[(0.6, 2.0)]


class TestGenerativeGrid:
    def test_nine_labelled_rows(self):
        assert len(GENERATIVE_GRID) == 9
        assert GRID_ROW_ORDER == tuple(sorted(GENERATIVE_GRID))
        for (rho, orr), gp in GENERATIVE_GRID.items():
            assert rho in (0.06, 0.3, 0.6)
            assert orr in (1.5, 2.0, 3.0)
            assert gp.beta_r == 1.0
            assert gp.beta_a2 == 0.0 and gp.beta_a1a2 == 0.0

    def test_reference_tables_align_with_grid(self):
        assert set(REFERENCE_N) == set(GENERATIVE_GRID)
        assert {k[:2] for k in REFERENCE_POWER} == set(GENERATIVE_GRID)
        assert {k for k in REFERENCE_POWER} == {(r, o, n) for (r, o) in GENERATIVE_GRID
                                                for n in (300, 500)}
        assert set(REFERENCE_THREE_WAVE) == {(d, n) for d in (False, True) for n in (300, 500)}
        # spot values
        assert REFERENCE_POWER[(0.6, 2.0, 300)][5] == 0.848
        assert REFERENCE_POWER[(0.6, 2.0, 300)][2] == 0.652
        assert REFERENCE_N[(0.06, 2.0)][0] == 414
        assert REFERENCE_N[(0.6, 2.0)][4] == 270
        assert REFERENCE_THREE_WAVE[(False, 300)][2] == 0.651


class TestEstimatePower:
    def test_counts_and_mc_se(self):
        est = estimate_power(ROW, ModelSpec.one_wave(), n=120, reps=80, seed=11)
        assert est.reps == 80
        assert est.n_converged + est.n_failed == 80
        assert est.power == est.n_rejected / est.n_converged
        assert est.mc_se == pytest.approx(
            math.sqrt(est.power * (1 - est.power) / est.n_converged))
        assert est.n == 120
        assert est.base_seed == (11,)

    def test_deterministic_and_worker_independent(self):
        a = estimate_power(ROW, ModelSpec.covariate_adjusted(), n=150, reps=60, seed=3, workers=1)
        b = estimate_power(ROW, ModelSpec.covariate_adjusted(), n=150, reps=60, seed=3, workers=3)
        assert canonical_json(a.to_dict()) == canonical_json(b.to_dict())
        c = estimate_power(ROW, ModelSpec.covariate_adjusted(), n=150, reps=60, seed=4, workers=1)
        assert a.power != c.power or a.n_rejected != c.n_rejected

    def test_seed_paths_validated(self):
        with pytest.raises(ValueError):
            estimate_power(ROW, ModelSpec.one_wave(), n=50, reps=4, seed=-1)
        with pytest.raises(ValueError):
            estimate_power(ROW, ModelSpec.one_wave(), n=50, reps=0, seed=1)
        est = estimate_power(ROW, ModelSpec.one_wave(), n=150, reps=4, seed=(2, 5))
        assert est.base_seed == (2, 5)

    def test_nonconvergence_accounting(self):
        with pytest.warns(UserWarning, match="failed to converge"):
            excl = estimate_power(GenParamsTwoWave(), ModelSpec.one_wave(),
                                  n=18, reps=200, seed=5)
        assert excl.n_failed > 10
        assert excl.warning
        assert excl.power == excl.n_rejected / excl.n_converged
        with pytest.warns(UserWarning):
            hard = estimate_power(GenParamsTwoWave(), ModelSpec.one_wave(),
                                  n=18, reps=200, seed=5, nonconverged="fail")
        assert hard.n_failed == excl.n_failed
        assert hard.power == hard.n_rejected / hard.reps
        assert hard.power <= excl.power
        with pytest.raises(ValueError):
            estimate_power(ROW, ModelSpec.one_wave(), n=50, reps=4, nonconverged="retry")

    def test_null_rejects_at_level(self):
        est = estimate_power(NULL_GEN, ModelSpec.one_wave(), n=300, reps=1500, seed=21)
        assert est.power == pytest.approx(0.05, abs=0.02)

    def test_multi_shares_datasets_with_solo_runs(self):
        solo = estimate_power(ROW, ModelSpec.one_wave(), n=100, reps=50, seed=9)
        multi = estimate_power_multi(
            ROW, [("one", ModelSpec.one_wave()), ("cov", ModelSpec.covariate_adjusted())],
            n=100, reps=50, seed=9)
        assert set(multi) == {"one", "cov"}
        assert multi["one"].power == solo.power
        assert multi["one"].n_rejected == solo.n_rejected
        assert multi["one"].model_id == solo.model_id

    def test_three_wave_generation_dispatch(self):
        est = estimate_power(GenParamsThreeWave(delayed=False),
                             ModelSpec.piecewise("ar1"), n=120, reps=30, seed=13)
        assert est.n_converged > 0
        assert "three-wave" in est.gen_id

    def test_scenario_generation_dispatch(self):
        from smartb import population_moments
        sc = population_moments(ROW).conditional_scenario()
        est = estimate_power(sc, ModelSpec.two_wave("exchangeable"), n=150, reps=40, seed=14)
        assert est.n_converged > 0
        assert est.gen_id.startswith("scenario:")


class TestPilotCorrelation:
    def test_low_and_high_rows(self):
        low = pilot_marginal_correlation(GENERATIVE_GRID[(0.06, 2.0)], reps=150, n=800, seed=6)
        high = pilot_marginal_correlation(ROW, reps=150, n=800, seed=6)
        assert low == pytest.approx(0.055, abs=0.02)
        assert high == pytest.approx(0.604, abs=0.02)


class TestFindSampleSize:
    def test_probit_line_reproduces_reported_coefficients(self):
        res = find_sample_size(ROW, ModelSpec.covariate_adjusted(),
                               grid=(150, 250, 350), reps_per_point=60, seed=2)
        zs = np.array([p["probit"] for p in res.points])
        ns = np.array([p["n"] for p in res.points], dtype=float)
        qs = np.array([p["power"] for p in res.points])
        ks = np.array([p["n_converged"] for p in res.points], dtype=float)
        w = ks * norm.pdf(zs) ** 2 / (qs * (1 - qs))
        sw, swn, swz = w.sum(), (w * ns).sum(), (w * zs).sum()
        slope = ((w * ns * zs).sum() - swn * swz / sw) / ((w * ns * ns).sum() - swn ** 2 / sw)
        intercept = (swz - slope * swn) / sw
        assert res.slope == pytest.approx(slope, rel=1e-9)
        assert res.intercept == pytest.approx(intercept, rel=1e-9)
        expected_raw = (norm.ppf(res.target) - intercept) / slope
        assert res.n_hat_raw == pytest.approx(expected_raw, rel=1e-9)
        assert res.n_hat == max(2, math.ceil(expected_raw))

    def test_power_estimates_clamp_before_probit(self):
        res = find_sample_size(ROW, ModelSpec.covariate_adjusted(),
                               grid=(600, 800, 1000), reps_per_point=30, seed=7)
        top = res.points[-1]
        if top["power"] >= 1.0 - 1e-12:
            assert top["clamped"]
            assert top["probit"] == pytest.approx(norm.ppf(1 - 1 / (30 + 2)))

    def test_default_grid_centers_on_formula_prediction(self):
        res = find_sample_size(ROW, ModelSpec.covariate_adjusted(),
                               reps_per_point=10, seed=8, grid_points=4)
        ns = [p["n"] for p in res.points]
        assert len(ns) == 4
        assert ns == sorted(ns)
        assert ns[0] >= 0.4 * 270 and ns[-1] <= 1.6 * 270

    def test_flat_null_power_fails_with_diagnostics(self):
        with pytest.raises(SearchFailureError) as exc:
            find_sample_size(NULL_GEN, ModelSpec.one_wave(),
                             grid=(60, 90, 120), reps_per_point=40, seed=1)
        diag = exc.value.diagnostics
        assert sorted(diag) == ["grid", "intercept", "powers", "slope"]
        assert diag["slope"] <= 0
        assert len(diag["powers"]) == 3

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            find_sample_size(ROW, ModelSpec.one_wave(), grid=(100, 200), reps_per_point=5)
        with pytest.raises(ValueError):
            find_sample_size(ROW, ModelSpec.one_wave(), grid=(200, 100, 300), reps_per_point=5)
        with pytest.raises(ValueError):
            find_sample_size(ROW, ModelSpec.one_wave(), grid=(100, 200, 300),
                             reps_per_point=5, target=1.0)

    def test_three_wave_requires_explicit_grid(self):
        with pytest.raises(ValueError, match="grid"):
            find_sample_size(GenParamsThreeWave(), ModelSpec.piecewise("ar1"),
                             reps_per_point=5)

    def test_deterministic_across_workers(self):
        a = find_sample_size(ROW, ModelSpec.one_wave(),
                             grid=(250, 400, 550), reps_per_point=40, seed=12, workers=1)
        b = find_sample_size(ROW, ModelSpec.one_wave(),
                             grid=(250, 400, 550), reps_per_point=40, seed=12, workers=2)
        assert canonical_json(a.to_dict()) == canonical_json(b.to_dict())


class TestTableRunners:
    def test_power_grid_row_structure(self):
        doc = run_table3(reps=60, seed=1, rows=((0.6, 2.0),), ns=(300,), pilot_reps=20)
        assert isinstance(doc, TableDocument)
        assert doc.name == "power-grid"
        assert len(doc.rows) == 1
        row = doc.rows[0]
        assert row["pretest_corr"] == 0.6
        assert row["odds_ratio"] == 2.0
        assert row["n"] == 300
        for col in ("pred_mpb_1w", "pred_cpb_1w", "sim_1w",
                    "pred_mpb_2w", "pred_cpb_2w", "sim_2w", "pilot_rho"):
            assert col in row
        assert 0 <= row["sim_2w"] <= 1
        assert row["detail"]["reference"] == list(REFERENCE_POWER[(0.6, 2.0, 300)])
        # formula columns approximate the published predictions even at pilot accuracy
        assert row["pred_mpb_2w"] == pytest.approx(0.836, abs=0.05)
        assert row["pred_cpb_2w"] == pytest.approx(0.840, abs=0.05)

    def test_power_grid_subset_preserves_row_seeds(self):
        solo = run_table3(reps=50, seed=2, rows=((0.6, 3.0),), ns=(300,), pilot_reps=10)
        pair = run_table3(reps=50, seed=2, rows=((0.06, 1.5), (0.6, 3.0)), ns=(300,), pilot_reps=10)
        target = [r for r in pair.rows if r["pretest_corr"] == 0.6][0]
        assert target["sim_1w"] == solo.rows[0]["sim_1w"]
        assert target["sim_2w"] == solo.rows[0]["sim_2w"]

    def test_power_grid_deterministic_across_workers(self):
        a = run_table3(reps=40, seed=3, rows=((0.3, 2.0),), ns=(300,), pilot_reps=10, workers=1)
        b = run_table3(reps=40, seed=3, rows=((0.3, 2.0),), ns=(300,), pilot_reps=10, workers=2)
        assert a.to_json() == b.to_json()

    def test_samplesize_grid_smoke(self):
        doc = run_table4(reps_per_point=25, seed=4, rows=((0.6, 2.0),),
                         grid_points=4, pilot_reps=10)
        assert doc.name == "samplesize-grid"
        row = doc.rows[0]
        for col in ("pred_mpb_1w", "pred_cpb_1w", "sim_n_1w",
                    "pred_mpb_2w", "pred_cpb_2w", "sim_n_2w"):
            assert col in row
        assert row["pred_cpb_2w"] == 270
        assert row["sim_n_2w"] > 100

    def test_three_wave_grid_smoke(self):
        doc = run_table5(reps=40, seed=5, ns=(300,), delayed=(False,))
        assert doc.name == "threewave-grid"
        row = doc.rows[0]
        assert row["delayed"] is False
        assert row["n"] == 300
        for col in ("y1_only", "y1_adjusted", "y2_only", "y2_adjusted",
                    "y2_trajectory_independence", "y2_trajectory_ar1",
                    "y2_trajectory_exchangeable"):
            assert col in row
        # the final-wave-only fit and the independence trajectory agree exactly
        assert row["y2_trajectory_independence"] == row["y2_only"]

    def test_documents_serialize_to_all_formats(self):
        doc = run_table5(reps=20, seed=6, ns=(300,), delayed=(True,))
        as_dict = doc.to_dict()
        assert as_dict["table"] == "threewave-grid"
        assert json.loads(doc.to_json())["rows"] == as_dict["rows"]
        csv_text = doc.to_csv()
        header = csv_text.splitlines()[0].split(",")
        assert "y2_only" in header
        assert len(csv_text.splitlines()) == 2
        text = doc.to_text()
        assert "threewave-grid" in text
        assert "reps" in text

    def test_rejects_unknown_rows(self):
        with pytest.raises(ValueError):
            run_table3(reps=10, rows=((0.5, 2.0),), ns=(300,), pilot_reps=5)
