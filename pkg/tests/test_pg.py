"""pg model tests: windowing, normalization, training shapes, rollout."""

import numpy as np
import pytest

from bolusopt.gp import FitConfig, KernelParams, LinearMean, Dataset, build_trained_gp
from bolusopt.pg import (
    GlucoseTrace,
    MealEvent,
    NormalizationStats,
    PgPredictor,
    PgTrainingSample,
    PredictedTrajectory,
    load_samples_csv,
    predict_trajectory,
    predictor_from_dict,
    predictor_to_dict,
    save_samples_csv,
    serialize_samples,
    train_pg_model,
)

FAST_FIT = FitConfig(restarts=2, maxiter=400)
T = 900.0


def grid_trace(values, t0=0.0):
    times = t0 + np.arange(len(values)) * T
    return GlucoseTrace(times=times, values=np.asarray(values, dtype=float))


def synthetic_samples(n, meal_class="breakfast", seed=0, bolus_effect=3.0):
    """Meal episodes with a carb-driven rise damped by the bolus."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        base = rng.uniform(100, 160)
        pre = base + np.cumsum(rng.normal(0, 2, size=8))
        d = rng.uniform(40, 90)
        u = rng.uniform(2, 8)
        rise = d * 0.9 - bolus_effect * u * 2.0
        shape = np.array([0.15, 0.35, 0.6, 0.8, 1.0, 0.95, 0.8, 0.6])
        post = pre[-1] + rise * shape + rng.normal(0, 2, size=8)
        post = np.clip(post, 45, 420)
        out.append(
            PgTrainingSample(
                preprandial=pre, bolus=u, carbs=d, postprandial=post, meal_class=meal_class
            )
        )
    return out


class TestSerializeSamples:
    def test_exact_windowing(self):
        vals = np.linspace(100, 200, 16)  # 8 history + 8 future around index 7
        trace = grid_trace(vals)
        meal = MealEvent(time=7 * T, carbs=60, bolus=5, meal_class="breakfast")
        samples, skipped = serialize_samples(trace, [meal])
        assert len(samples) == 1 and not skipped
        np.testing.assert_array_equal(samples[0].preprandial, vals[:8])
        np.testing.assert_array_equal(samples[0].postprandial, vals[8:])
        assert samples[0].bolus == 5 and samples[0].carbs == 60

    def test_meal_too_early_skipped(self):
        trace = grid_trace(np.full(20, 120.0))
        meal = MealEvent(time=2 * T, carbs=60, bolus=5, meal_class="breakfast")
        samples, skipped = serialize_samples(trace, [meal])
        assert not samples
        assert len(skipped) == 1 and "preprandial" in skipped[0].reason

    def test_meal_at_end_skipped(self):
        trace = grid_trace(np.full(20, 120.0))
        meal = MealEvent(time=15 * T, carbs=60, bolus=5, meal_class="breakfast")
        samples, skipped = serialize_samples(trace, [meal])
        assert not samples and "postprandial" in skipped[0].reason

    def test_overlapping_meals_both_skipped(self):
        trace = grid_trace(np.full(40, 120.0))
        m1 = MealEvent(time=10 * T, carbs=50, bolus=4, meal_class="lunch_dinner")
        m2 = MealEvent(time=10 * T + 3600, carbs=70, bolus=6, meal_class="lunch_dinner")
        samples, skipped = serialize_samples(trace, [m1, m2])
        assert not samples
        assert len(skipped) == 2
        assert all("overlap" in s.reason for s in skipped)

    def test_meals_exactly_two_hours_apart_kept(self):
        trace = grid_trace(np.full(40, 120.0))
        m1 = MealEvent(time=10 * T, carbs=50, bolus=4, meal_class="lunch_dinner")
        m2 = MealEvent(time=10 * T + 7200, carbs=70, bolus=6, meal_class="lunch_dinner")
        samples, skipped = serialize_samples(trace, [m1, m2])
        assert len(samples) == 2 and not skipped

    def test_offgrid_meal_anchors_to_prior_grid_point(self):
        # linear glucose so interpolation onto the grid is exact; the meal
        # sits 10 min past a grid point and must anchor backwards
        times = np.arange(24) * T + 300.0
        vals = 100.0 + 0.01 * times
        trace = GlucoseTrace(times=times, values=vals)
        meal = MealEvent(time=times[0] + 8 * T + 600.0, carbs=55, bolus=4, meal_class="breakfast")
        samples, skipped = serialize_samples(trace, [meal])
        assert len(samples) == 1 and not skipped
        anchor_time = 300.0 + 8 * T  # last grid point (anchored at trace start) <= meal
        expected_last_pre = 100.0 + 0.01 * anchor_time
        assert samples[0].preprandial[-1] == pytest.approx(expected_last_pre, rel=1e-12)

    def test_irregular_offsets_interpolated_onto_grid(self):
        # timestamps jittered up to 4 min around the nominal grid
        rng = np.random.default_rng(8)
        base = np.arange(30) * T
        times = base + np.concatenate([[0.0], rng.uniform(-240, 240, size=29)])
        vals = 100.0 + 0.005 * times
        trace = GlucoseTrace(times=times, values=vals)
        meal = MealEvent(time=10 * T, carbs=50, bolus=3, meal_class="breakfast")
        samples, skipped = serialize_samples(trace, [meal])
        assert len(samples) == 1 and not skipped
        want = 100.0 + 0.005 * (np.arange(3, 11) * T)
        np.testing.assert_allclose(samples[0].preprandial, want, rtol=1e-12)

    def test_gap_in_readings_skips(self):
        times = np.concatenate([np.arange(10) * T, np.arange(13, 30) * T])
        vals = np.full(times.size, 130.0)
        trace = GlucoseTrace(times=times, values=vals)
        meal = MealEvent(time=11 * T, carbs=55, bolus=4, meal_class="breakfast")
        samples, skipped = serialize_samples(trace, [meal])
        assert not samples and "gap" in skipped[0].reason

    def test_short_trace_rejected(self):
        with pytest.raises(ValueError):
            serialize_samples(grid_trace([120.0]), [])


class TestTrain:
    def test_meal_aware_dimensions(self):
        samples = synthetic_samples(6)
        p = train_pg_model(samples, meal_aware=True, opt_config=FAST_FIT)
        assert p.input_dim == 10
        assert all(gp.dataset.dim == 10 for gp in p.step_models)

    def test_meal_free_dimensions(self):
        samples = synthetic_samples(6)
        p = train_pg_model(samples, meal_aware=False, opt_config=FAST_FIT)
        assert p.input_dim == 9

    def test_step1_targets_are_first_differences(self):
        samples = synthetic_samples(5)
        p = train_pg_model(samples, meal_aware=True, opt_config=FAST_FIT)
        want = np.array([s.postprandial[0] - s.preprandial[7] for s in samples])
        np.testing.assert_allclose(p.step_models[0].dataset.targets, want)

    def test_step2_window_includes_observed_postprandial(self):
        samples = synthetic_samples(5)
        p = train_pg_model(samples, meal_aware=True, opt_config=FAST_FIT)
        # denormalize the last glucose column of step 2 inputs
        col = p.step_models[1].dataset.inputs[:, 7]
        lo, hi = p.norm.mins[1][7], p.norm.maxs[1][7]
        got = lo + col * (hi - lo)
        want = np.array([s.postprandial[0] for s in samples])
        np.testing.assert_allclose(got, want, rtol=1e-10)

    def test_mixed_classes_rejected(self):
        samples = synthetic_samples(3) + synthetic_samples(3, meal_class="lunch_dinner", seed=1)
        with pytest.raises(ValueError):
            train_pg_model(samples, opt_config=FAST_FIT)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError):
            train_pg_model(synthetic_samples(1), opt_config=FAST_FIT)


class TestNormalization:
    def test_round_trip(self):
        rng = np.random.default_rng(4)
        mins = rng.uniform(80, 120, size=(8, 8))
        maxs = mins + rng.uniform(5, 80, size=(8, 8))
        stats = NormalizationStats(mins=mins, maxs=maxs, degenerate=np.zeros((8, 8), bool))
        for step in range(8):
            x = rng.uniform(mins[step], maxs[step])
            z = stats.apply(step, x)
            np.testing.assert_allclose(stats.invert(step, z), x, atol=1e-12)
            assert np.all((z >= 0) & (z <= 1))

    def test_out_of_range_extrapolates_not_clamps(self):
        mins = np.full((8, 8), 100.0)
        maxs = np.full((8, 8), 150.0)
        stats = NormalizationStats(mins=mins, maxs=maxs, degenerate=np.zeros((8, 8), bool))
        z = stats.apply(0, np.full(8, 200.0))
        np.testing.assert_allclose(z, 2.0)

    def test_degenerate_column_maps_to_half(self):
        samples = synthetic_samples(4)
        # force a constant column in step 1 inputs (first preprandial value)
        fixed = [
            PgTrainingSample(
                preprandial=np.concatenate([[111.0], s.preprandial[1:]]),
                bolus=s.bolus,
                carbs=s.carbs,
                postprandial=s.postprandial,
                meal_class=s.meal_class,
            )
            for s in samples
        ]
        p = train_pg_model(fixed, meal_aware=True, opt_config=FAST_FIT)
        assert p.norm.degenerate[0][0]
        z = p.norm.apply(0, fixed[0].preprandial)
        assert z[0] == 0.5


def zero_increment_predictor(meal_aware=True):
    """Predictor whose every step GP outputs exactly zero increments."""
    dim = 10 if meal_aware else 9
    X = np.vstack([np.linspace(0, 1, dim), np.linspace(1, 0, dim), np.full(dim, 0.5)])
    models = [
        build_trained_gp(
            Dataset(X, np.zeros(3)), KernelParams(1.0, np.ones(dim), 0.1), LinearMean.zero()
        )
        for _ in range(8)
    ]
    mins = np.full((8, 8), 90.0)
    maxs = np.full((8, 8), 180.0)
    stats = NormalizationStats(mins=mins, maxs=maxs, degenerate=np.zeros((8, 8), bool))
    return PgPredictor(
        step_models=models, norm=stats, meal_aware=meal_aware, meal_class="breakfast"
    )


class TestPredict:
    def test_zero_increment_rollout_settles_at_last_reading(self):
        p = zero_increment_predictor()
        pre = np.linspace(120, 145, 8)
        traj = predict_trajectory(p, pre, u=4.0, d=60.0)
        np.testing.assert_array_equal(traj.means, np.full(8, 145.0))

    def test_recurrence_matches_manual_rollout(self):
        from bolusopt.gp import posterior_predict

        samples = synthetic_samples(6, seed=3)
        p = train_pg_model(samples, meal_aware=True, opt_config=FAST_FIT)
        pre = samples[0].preprandial
        u, d = 5.0, 70.0
        traj = predict_trajectory(p, pre, u, d)

        window = pre.copy().astype(float)
        level = float(pre[-1])
        for step in range(8):
            z = np.concatenate([p.norm.apply(step, window), [u], [d]])
            delta, var = posterior_predict(p.step_models[step], z)
            level += delta
            assert traj.means[step] == pytest.approx(level, abs=1e-12)
            assert traj.variances[step] == pytest.approx(var, abs=1e-12)
            window[:-1] = window[1:]
            window[-1] = level

    def test_horizon_is_two_hours(self):
        p = zero_increment_predictor()
        traj = predict_trajectory(p, np.full(8, 120.0), 0.0, 50.0)
        assert traj.means.size == 8
        assert traj.spacing_minutes * traj.means.size == pytest.approx(120.0)

    def test_deterministic(self):
        samples = synthetic_samples(6, seed=5)
        p = train_pg_model(samples, meal_aware=True, opt_config=FAST_FIT)
        pre = samples[1].preprandial
        t1 = predict_trajectory(p, pre, 3.0, 55.0)
        t2 = predict_trajectory(p, pre, 3.0, 55.0)
        np.testing.assert_array_equal(t1.means, t2.means)
        np.testing.assert_array_equal(t1.variances, t2.variances)

    def test_meal_awareness_contract(self):
        aware = zero_increment_predictor(meal_aware=True)
        free = zero_increment_predictor(meal_aware=False)
        pre = np.full(8, 120.0)
        with pytest.raises(ValueError):
            predict_trajectory(aware, pre, 1.0, None)
        with pytest.raises(ValueError):
            predict_trajectory(free, pre, 1.0, 60.0)

    def test_bolus_sensitivity_finite(self):
        samples = synthetic_samples(8, seed=7)
        p = train_pg_model(samples, meal_aware=True, opt_config=FAST_FIT)
        pre = samples[2].preprandial
        us = np.linspace(0.0, 15.0, 31)
        m8 = np.array([predict_trajectory(p, pre, float(u), 60.0).means[-1] for u in us])
        assert np.all(np.isfinite(m8))
        grad = np.gradient(m8, us)
        assert np.all(np.isfinite(grad))

    def test_window_validation(self):
        p = zero_increment_predictor()
        with pytest.raises(ValueError):
            predict_trajectory(p, np.full(7, 120.0), 1.0, 60.0)
        with pytest.raises(ValueError):
            predict_trajectory(p, np.full(8, np.nan), 1.0, 60.0)


class TestSerializationRoundTrip:
    def test_predictor_round_trip_trajectories(self):
        samples = synthetic_samples(6, seed=9)
        p = train_pg_model(samples, meal_aware=True, opt_config=FAST_FIT)
        q = predictor_from_dict(predictor_to_dict(p))
        pre = samples[0].preprandial
        for u in [0.0, 4.0, 12.0]:
            t1 = predict_trajectory(p, pre, u, 65.0)
            t2 = predict_trajectory(q, pre, u, 65.0)
            np.testing.assert_allclose(t1.means, t2.means, atol=1e-10)
            np.testing.assert_allclose(t1.variances, t2.variances, atol=1e-10)

    def test_samples_csv_round_trip(self, tmp_path):
        samples = synthetic_samples(5, seed=11)
        path = tmp_path / "samples.csv"
        save_samples_csv(samples, path)
        loaded = load_samples_csv(path)
        assert len(loaded) == 5
        for a, b in zip(samples, loaded):
            np.testing.assert_array_equal(a.preprandial, b.preprandial)
            np.testing.assert_array_equal(a.postprandial, b.postprandial)
            assert a.bolus == b.bolus and a.carbs == b.carbs and a.meal_class == b.meal_class


class TestTrajectoryType:
    def test_rejects_negative_variance(self):
        with pytest.raises(ValueError):
            PredictedTrajectory(means=np.full(8, 120.0), variances=np.full(8, -1.0))

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            PredictedTrajectory(means=np.full(7, 120.0), variances=np.full(7, 1.0))
