"""End-to-end bolus recommendation and the standard-calculator baseline.

The recommendation runs Bayesian optimization over the GP-predicted
trajectories scored by the risk-sensitive cost, then subtracts insulin on
board and clamps at zero. Monte-Carlo draws are re-seeded identically for
every candidate bolus within one recommendation (common random numbers), so
the surrogate sees a noise-consistent objective.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bo import BoResult, Observation, optimize_bolus
from .cost import CostConfig, total_cost
from .pg import PgPredictor, PredictedTrajectory, predict_trajectory

__all__ = [
    "IobModel",
    "DoseRecord",
    "CalculatorSettings",
    "AdvisorConfig",
    "BolusRecommendation",
    "iob",
    "standard_calculator",
    "recommend_bolus",
    "recommendation_to_dict",
]


@dataclass(frozen=True)
class IobModel:
    """Linear decay over the duration of insulin action."""

    duration_minutes: float = 240.0
    curve: str = "linear"

    def __post_init__(self):
        if self.duration_minutes <= 0:
            raise ValueError("duration of insulin action must be positive")
        if self.curve != "linear":
            raise ValueError(f"unsupported IOB curve {self.curve!r}")

    def remaining_fraction(self, elapsed_minutes: float) -> float:
        return max(0.0, 1.0 - elapsed_minutes / self.duration_minutes)


@dataclass(frozen=True)
class DoseRecord:
    time: float  # seconds
    units: float

    def __post_init__(self):
        if self.units < 0:
            raise ValueError("dose units must be nonnegative")


@dataclass(frozen=True)
class CalculatorSettings:
    """Carbohydrate ratio (g/U), correction factor (mg/dL per U) and glucose
    set-point for the standard bolus formula."""

    cr: float
    cf: float
    g_sp: float = 140.0

    def __post_init__(self):
        if self.cr <= 0 or self.cf <= 0:
            raise ValueError("CR and CF must be positive")


@dataclass(frozen=True)
class AdvisorConfig:
    """Everything the advisor needs: cost/penalty parameters, BO budget and
    the IOB model."""

    cost: CostConfig = field(default_factory=CostConfig)
    bo_iterations: int = 25
    bo_init_points: int = 8
    bo_grid_size: int = 512
    iob_model: IobModel = field(default_factory=IobModel)

    def __post_init__(self):
        if self.bo_iterations < 1 or self.bo_init_points < 2:
            raise ValueError("BO budget too small")


@dataclass(frozen=True)
class BolusRecommendation:
    raw_bolus: float
    iob: float
    final_bolus: float
    trajectory_at_solution: PredictedTrajectory
    bo_trace: list[Observation]
    seed: int
    flagged: bool = False


def iob(history: list[DoseRecord], now: float, model: IobModel) -> float:
    """Insulin still active from past doses under the decay model."""
    total = 0.0
    for dose in history:
        if dose.time > now:
            raise ValueError("dose history contains a future dose")
        elapsed_min = (now - dose.time) / 60.0
        total += dose.units * model.remaining_fraction(elapsed_min)
    return total


def standard_calculator(
    cho: float, g_c: float, settings: CalculatorSettings, iob_units: float = 0.0
) -> float:
    """CHO/CR + (G_c - G_sp)/CF - IOB, clamped at zero."""
    if not np.isfinite(cho) or cho < 0:
        raise ValueError("carbs must be finite and nonnegative")
    if not np.isfinite(g_c):
        raise ValueError("glucose must be finite")
    dose = cho / settings.cr + (g_c - settings.g_sp) / settings.cf - iob_units
    return max(0.0, dose)


def recommend_bolus(
    predictor: PgPredictor,
    preprandial,
    meal: float | None,
    config: AdvisorConfig,
    history: list[DoseRecord],
    now: float,
    seed: int,
) -> BolusRecommendation:
    """Optimize the meal bolus and apply the IOB safety subtraction.

    Deterministic given identical inputs and seed.
    """
    if predictor.meal_aware and meal is None:
        raise ValueError("meal-aware predictor requires announced carbs")
    if not predictor.meal_aware and meal is not None:
        raise ValueError("meal-free predictor takes no carbs")

    mc_seed = np.random.SeedSequence([seed, 0x1B0]).generate_state(1)[0]

    def objective(u: float) -> float:
        traj = predict_trajectory(predictor, preprandial, u, meal)
        # fresh generator per candidate: identical draws for every u (CRN)
        rng = np.random.default_rng(mc_seed)
        return total_cost(traj, u, config.cost, rng)

    result: BoResult = optimize_bolus(
        objective,
        config.cost,
        iterations=config.bo_iterations,
        n_init=config.bo_init_points,
        grid_size=config.bo_grid_size,
    )
    u_iob = iob(history, now, config.iob_model)
    final = max(0.0, result.u_best - u_iob)
    traj = predict_trajectory(predictor, preprandial, final, meal)
    return BolusRecommendation(
        raw_bolus=result.u_best,
        iob=u_iob,
        final_bolus=final,
        trajectory_at_solution=traj,
        bo_trace=result.trace,
        seed=seed,
        flagged=result.flagged,
    )


def recommendation_to_dict(rec: BolusRecommendation, preprandial=None, meal=None) -> dict:
    """Self-describing document: inputs echo, doses, trajectory, BO trace."""
    doc = {
        "schema": "recommendation/v1",
        "raw_bolus": rec.raw_bolus,
        "iob": rec.iob,
        "final_bolus": rec.final_bolus,
        "seed": rec.seed,
        "flagged": rec.flagged,
        "trajectory": {
            "means": [float(v) for v in rec.trajectory_at_solution.means],
            "variances": [float(v) for v in rec.trajectory_at_solution.variances],
            "spacing_minutes": rec.trajectory_at_solution.spacing_minutes,
        },
        "bo_trace": [
            {
                "iteration": o.iteration,
                "u": o.u,
                "cost": o.cost,
                "ei": None if o.ei is None else o.ei,
            }
            for o in rec.bo_trace
        ],
    }
    if preprandial is not None:
        doc["inputs"] = {
            "preprandial": [float(v) for v in preprandial],
            "carbs": meal,
        }
    return doc


def recommendation_to_json(rec: BolusRecommendation, preprandial=None, meal=None) -> str:
    return json.dumps(recommendation_to_dict(rec, preprandial, meal), indent=2, sort_keys=True)
