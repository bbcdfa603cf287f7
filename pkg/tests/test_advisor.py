"""advisor tests: IOB decay, calculator formula, recommendation contract."""

import json

import numpy as np
import pytest

from bolusopt.advisor import (
    AdvisorConfig,
    BolusRecommendation,
    CalculatorSettings,
    DoseRecord,
    IobModel,
    iob,
    recommend_bolus,
    recommendation_to_json,
    standard_calculator,
)
from bolusopt.cost import CostConfig
from bolusopt.gp import FitConfig
from bolusopt.pg import train_pg_model

from test_pg import synthetic_samples

FAST_FIT = FitConfig(restarts=2, maxiter=400)
FAST_ADVISOR = AdvisorConfig(
    cost=CostConfig(mc_samples=300), bo_iterations=8, bo_init_points=8, bo_grid_size=257
)


@pytest.fixture(scope="module")
def predictor():
    return train_pg_model(synthetic_samples(8, seed=42), meal_aware=True, opt_config=FAST_FIT)


class TestIob:
    MODEL = IobModel(duration_minutes=240.0)

    def test_fresh_dose_fully_on_board(self):
        assert iob([DoseRecord(time=1000.0, units=5.0)], now=1000.0, model=self.MODEL) == 5.0

    def test_fully_decayed(self):
        assert iob([DoseRecord(time=0.0, units=5.0)], now=240 * 60.0, model=self.MODEL) == 0.0

    def test_half_life_linear(self):
        assert iob([DoseRecord(time=0.0, units=5.0)], now=120 * 60.0, model=self.MODEL) == 2.5

    def test_multiple_doses_sum(self):
        hist = [DoseRecord(time=0.0, units=4.0), DoseRecord(time=120 * 60.0, units=2.0)]
        got = iob(hist, now=180 * 60.0, model=self.MODEL)
        assert got == pytest.approx(4.0 * 0.25 + 2.0 * 0.75)

    def test_future_dose_rejected(self):
        with pytest.raises(ValueError):
            iob([DoseRecord(time=100.0, units=1.0)], now=0.0, model=self.MODEL)


class TestCalculator:
    def test_correction_term_zero_at_setpoint(self):
        s = CalculatorSettings(cr=10.0, cf=40.0, g_sp=140.0)
        assert standard_calculator(50.0, 140.0, s) == 5.0

    def test_direct_arithmetic(self):
        s = CalculatorSettings(cr=12.0, cf=40.0, g_sp=140.0)
        assert standard_calculator(60.0, 180.0, s, iob_units=1.0) == pytest.approx(5.0)

    def test_negative_total_clamped(self):
        s = CalculatorSettings(cr=10.0, cf=40.0, g_sp=140.0)
        assert standard_calculator(0.0, 60.0, s) == 0.0

    def test_bad_settings_rejected(self):
        with pytest.raises(ValueError):
            CalculatorSettings(cr=0.0, cf=40.0)
        with pytest.raises(ValueError):
            CalculatorSettings(cr=10.0, cf=-1.0)


class TestRecommend:
    def test_no_history_passes_raw_through(self, predictor):
        pre = np.linspace(120, 150, 8)
        rec = recommend_bolus(predictor, pre, 60.0, FAST_ADVISOR, [], now=0.0, seed=3)
        assert rec.iob == 0.0
        assert rec.final_bolus == rec.raw_bolus

    def test_iob_exceeding_raw_clamps_to_zero(self, predictor):
        pre = np.linspace(120, 150, 8)
        hist = [DoseRecord(time=0.0, units=40.0)]
        rec = recommend_bolus(predictor, pre, 60.0, FAST_ADVISOR, hist, now=600.0, seed=3)
        assert rec.iob > rec.raw_bolus
        assert rec.final_bolus == 0.0

    def test_deterministic_given_seed(self, predictor):
        pre = np.linspace(130, 160, 8)
        a = recommend_bolus(predictor, pre, 70.0, FAST_ADVISOR, [], now=0.0, seed=11)
        b = recommend_bolus(predictor, pre, 70.0, FAST_ADVISOR, [], now=0.0, seed=11)
        assert recommendation_to_json(a, pre, 70.0) == recommendation_to_json(b, pre, 70.0)

    def test_final_bolus_in_bounds(self, predictor):
        rng = np.random.default_rng(0)
        for k in range(3):
            pre = np.sort(rng.uniform(90, 220, 8))
            rec = recommend_bolus(predictor, pre, 65.0, FAST_ADVISOR, [], now=0.0, seed=k)
            assert 0.0 <= rec.final_bolus <= FAST_ADVISOR.cost.u_max
            assert np.isfinite(rec.final_bolus)

    def test_iob_subtraction_linearity(self, predictor):
        # prior bolus b delivered 10 min ago removes ~ (1 - 10/240) * b units
        pre = np.linspace(140, 170, 8)
        base = recommend_bolus(predictor, pre, 70.0, FAST_ADVISOR, [], now=0.0, seed=5)
        b = 3.0
        hist = [DoseRecord(time=0.0, units=b)]
        followup = recommend_bolus(predictor, pre, 70.0, FAST_ADVISOR, hist, now=600.0, seed=5)
        expected_cap = max(0.0, base.final_bolus - (1.0 - 10.0 / 240.0) * b)
        assert followup.final_bolus <= expected_cap + 1e-9

    def test_meal_awareness_mismatch(self, predictor):
        pre = np.linspace(120, 150, 8)
        with pytest.raises(ValueError):
            recommend_bolus(predictor, pre, None, FAST_ADVISOR, [], now=0.0, seed=0)

    def test_trace_shape(self, predictor):
        pre = np.linspace(120, 150, 8)
        rec = recommend_bolus(predictor, pre, 60.0, FAST_ADVISOR, [], now=0.0, seed=1)
        assert len(rec.bo_trace) == FAST_ADVISOR.bo_init_points + FAST_ADVISOR.bo_iterations

    def test_json_document_fields(self, predictor):
        pre = np.linspace(120, 150, 8)
        rec = recommend_bolus(predictor, pre, 60.0, FAST_ADVISOR, [], now=0.0, seed=1)
        doc = json.loads(recommendation_to_json(rec, pre, 60.0))
        assert doc["schema"] == "recommendation/v1"
        assert len(doc["trajectory"]["means"]) == 8
        assert len(doc["trajectory"]["variances"]) == 8
        assert doc["inputs"]["carbs"] == 60.0
