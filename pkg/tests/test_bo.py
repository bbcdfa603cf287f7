"""bo engine tests with a quadrature oracle for expected improvement."""

import math

import numpy as np
import pytest

from bolusopt.bo import (
    BoState,
    CostSurrogate,
    Observation,
    expected_improvement,
    fit_surrogate,
    init_design,
    optimize_bolus,
    propose_next,
    trace_to_csv,
)
from bolusopt.cost import CostConfig


def ei_quadrature_oracle(m, sd, best, panels=24, order=20):
    """E[max(best - Z, 0)], Z ~ N(m, sd^2), by Gauss-Legendre panels over the
    truncated smooth region (the kink at Z = best bounds the domain)."""
    lo = min(m, best) - 14.0 * sd
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, best, panels + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        z = 0.5 * (b - a) * x + 0.5 * (a + b)
        pdf = np.exp(-0.5 * ((z - m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        total += 0.5 * (b - a) * np.sum(w * (best - z) * pdf)
    return total


class StubSurrogate:
    """Analytic surrogate for acquisition tests."""

    def __init__(self, mean_fn, sd_fn):
        self.mean_fn = mean_fn
        self.sd_fn = sd_fn

    def predict(self, u):
        return float(self.mean_fn(u)), float(self.sd_fn(u)) ** 2

    def predict_batch(self, us):
        us = np.atleast_1d(us)
        return (
            np.array([self.mean_fn(u) for u in us]),
            np.array([self.sd_fn(u) ** 2 for u in us]),
        )


class TestInitDesign:
    def test_table_bounds(self):
        pts = init_design((0.0, 15.0), 8)
        assert pts[0] == 0.0 and pts[-1] == 15.0
        np.testing.assert_allclose(pts, [15.0 * k / 7 for k in range(8)], atol=1e-12)

    def test_two_points(self):
        np.testing.assert_array_equal(init_design((0.0, 1.0), 2), [0.0, 1.0])

    def test_constant_spacing(self):
        pts = init_design((0.0, 15.0), 8)
        gaps = np.diff(pts)
        assert np.all(np.abs(gaps - gaps[0]) < 1e-12)


class TestExpectedImprovement:
    def test_zero_sd_is_zero(self):
        s = StubSurrogate(lambda u: 1.0, lambda u: 0.0)
        assert expected_improvement(s, 0.5, best_cost=10.0) == 0.0

    def test_at_best_with_unit_sd(self):
        s = StubSurrogate(lambda u: 3.0, lambda u: 1.0)
        assert expected_improvement(s, 0.0, best_cost=3.0) == pytest.approx(
            1.0 / math.sqrt(2 * math.pi), rel=1e-12
        )
        assert expected_improvement(s, 0.0, best_cost=3.0) == pytest.approx(0.398942, abs=1e-6)

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            m = float(rng.uniform(-5, 5))
            sd = float(rng.uniform(0.05, 3.0))
            best = m + float(rng.uniform(-4, 4)) * sd
            s = StubSurrogate(lambda u, m=m: m, lambda u, sd=sd: sd)
            got = expected_improvement(s, 0.0, best)
            want = ei_quadrature_oracle(m, sd, best)
            assert got == pytest.approx(want, rel=1e-6, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            s = StubSurrogate(lambda u: rng.uniform(-3, 3), lambda u: rng.uniform(0, 2))
            assert expected_improvement(s, 0.0, float(rng.uniform(-3, 3))) >= 0.0


class TestProposeNext:
    def test_flat_zero_ei_returns_lowest(self):
        s = StubSurrogate(lambda u: 5.0, lambda u: 0.0)
        state = BoState(
            observations=[Observation(7.0, 5.0)], surrogate=s, bounds=(0.0, 15.0)
        )
        assert propose_next(state, grid_size=64) == 0.0

    def test_interior_peak(self):
        # sd bump at u = 7.3 over a flat mean: EI peaks there
        s = StubSurrogate(lambda u: 5.0, lambda u: math.exp(-0.5 * ((u - 7.3) / 0.8) ** 2))
        state = BoState(
            observations=[Observation(0.0, 5.0)], surrogate=s, bounds=(0.0, 15.0)
        )
        grid = np.linspace(0, 15, 512)
        u = propose_next(state, grid_size=512)
        assert abs(u - 7.3) <= (grid[1] - grid[0]) / 2 + 1e-12

    def test_within_bounds(self):
        s = StubSurrogate(lambda u: 0.0, lambda u: 1.0 + u)
        state = BoState(observations=[Observation(1.0, 0.0)], surrogate=s, bounds=(0.0, 15.0))
        u = propose_next(state, grid_size=33)
        assert 0.0 <= u <= 15.0

    def test_repeat_moves_to_neighbor(self):
        grid = np.linspace(0.0, 15.0, 512)
        peak = float(grid[100])
        s = StubSurrogate(lambda u: 5.0, lambda u: math.exp(-0.5 * ((u - peak) / 0.5) ** 2))
        state = BoState(
            observations=[Observation(peak, 5.0)], surrogate=s, bounds=(0.0, 15.0)
        )
        u = propose_next(state, grid_size=512)
        assert u != peak
        assert u in (float(grid[99]), float(grid[101]))


class TestOptimizeBolus:
    CFG = CostConfig()

    def test_convex_objective(self):
        res = optimize_bolus(lambda u: (u - 6.0) ** 2, self.CFG)
        assert abs(res.u_best - 6.0) <= 0.1
        assert not res.flagged

    def test_monotone_objective_hits_boundary(self):
        res = optimize_bolus(lambda u: 3.0 + 0.5 * u, self.CFG)
        assert res.u_best == 0.0

    def test_trace_length(self):
        res = optimize_bolus(lambda u: (u - 6.0) ** 2, self.CFG, iterations=25, n_init=8)
        assert len(res.trace) == 33

    def test_best_cost_nonincreasing(self):
        res = optimize_bolus(lambda u: (u - 9.0) ** 2 + math.sin(u), self.CFG)
        best_so_far = np.minimum.accumulate([o.cost for o in res.trace])
        assert np.all(np.diff(best_so_far) <= 0)

    def test_all_points_in_bounds(self):
        res = optimize_bolus(lambda u: math.cos(u) * 5, self.CFG)
        assert all(0.0 <= o.u <= 15.0 for o in res.trace)

    def test_no_immediate_duplicates(self):
        res = optimize_bolus(lambda u: (u - 6.0) ** 2, self.CFG)
        proposals = [o.u for o in res.trace if o.iteration > 0]
        for a, b in zip(proposals, proposals[1:]):
            assert a != b

    def test_reproducible_trace_bytes(self):
        def noisy(seed):
            rng = np.random.default_rng(seed)

            def f(u):
                return (u - 4.0) ** 2 + 0.01 * rng.standard_normal()

            return f

        r1 = optimize_bolus(noisy(3), self.CFG)
        r2 = optimize_bolus(noisy(3), self.CFG)
        assert trace_to_csv(r1.trace) == trace_to_csv(r2.trace)

    def test_two_basin(self):
        def f(u):
            return -math.exp(-0.5 * (u - 3.0) ** 2) - 1.5 * math.exp(-0.5 * (u - 11.0) ** 2)

        res = optimize_bolus(f, self.CFG)
        assert abs(res.u_best - 11.0) <= 0.1


class TestSurrogate:
    def test_fit_interpolates_reasonably(self):
        obs = [Observation(float(u), float((u - 6.0) ** 2)) for u in np.linspace(0, 15, 8)]
        s = fit_surrogate(obs, (0.0, 15.0))
        m, _ = s.predict(6.0)
        assert abs(m - 0.0) < 5.0

    def test_trace_csv_shape(self):
        obs = [Observation(0.0, 1.0, 0, None), Observation(1.0, 0.5, 1, 0.25)]
        text = trace_to_csv(obs)
        lines = text.strip().split("\n")
        assert lines[0] == "iteration,u,cost,ei"
        assert len(lines) == 3
        assert lines[1].endswith(",")
