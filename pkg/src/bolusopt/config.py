"""Application configuration: one JSON document covering the advisor
parameters, IOB model, calculator defaults, cohort location and seed."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .advisor import AdvisorConfig, CalculatorSettings, IobModel
from .cost import CostConfig

__all__ = ["AppConfig", "ConfigError", "load_config", "save_config", "default_config"]


class ConfigError(ValueError):
    """Invalid configuration document."""


@dataclass(frozen=True)
class AppConfig:
    advisor: AdvisorConfig = field(default_factory=AdvisorConfig)
    calculator: CalculatorSettings = field(
        default_factory=lambda: CalculatorSettings(cr=10.0, cf=40.0, g_sp=140.0)
    )
    cohort_path: str | None = None  # None = packaged cohort
    seed: int = 0
    cgm_noise_sd: float = 2.0

    def __post_init__(self):
        if self.cgm_noise_sd < 0:
            raise ConfigError("cgm_noise_sd must be >= 0")


def default_config() -> AppConfig:
    return AppConfig()


def config_to_dict(cfg: AppConfig) -> dict:
    cost = cfg.advisor.cost
    return {
        "schema": "config/v1",
        "advisor": {
            "gamma": cost.gamma,
            "q_plus": cost.q_plus.tolist(),
            "gamma_quad": list(cost.gamma_quad),
            "target": cost.target.tolist(),
            "input_weight": cost.input_weight,
            "u_max": cost.u_max,
            "mc_samples": cost.mc_samples,
            "bo_iterations": cfg.advisor.bo_iterations,
            "bo_init_points": cfg.advisor.bo_init_points,
            "bo_grid_size": cfg.advisor.bo_grid_size,
        },
        "iob": {
            "duration_minutes": cfg.advisor.iob_model.duration_minutes,
            "curve": cfg.advisor.iob_model.curve,
        },
        "calculator": {
            "cr": cfg.calculator.cr,
            "cf": cfg.calculator.cf,
            "g_sp": cfg.calculator.g_sp,
        },
        "cohort_path": cfg.cohort_path,
        "seed": cfg.seed,
        "cgm_noise_sd": cfg.cgm_noise_sd,
    }


def config_from_dict(doc: dict) -> AppConfig:
    try:
        adv = doc.get("advisor", {})
        iob = doc.get("iob", {})
        calc = doc.get("calculator", {})
        cost = CostConfig(
            gamma=adv.get("gamma", -2.0),
            q_plus=np.asarray(adv["q_plus"], dtype=float)
            if "q_plus" in adv
            else CostConfig().q_plus,
            gamma_quad=tuple(adv.get("gamma_quad", (1.0, 10.0, 5.0, 1.0))),
            target=np.asarray(adv["target"], dtype=float)
            if "target" in adv
            else CostConfig().target,
            input_weight=adv.get("input_weight", 4.0),
            u_max=adv.get("u_max", 15.0),
            mc_samples=adv.get("mc_samples", 1000),
        )
        advisor = AdvisorConfig(
            cost=cost,
            bo_iterations=adv.get("bo_iterations", 25),
            bo_init_points=adv.get("bo_init_points", 8),
            bo_grid_size=adv.get("bo_grid_size", 512),
            iob_model=IobModel(
                duration_minutes=iob.get("duration_minutes", 240.0),
                curve=iob.get("curve", "linear"),
            ),
        )
        calculator = CalculatorSettings(
            cr=calc.get("cr", 10.0), cf=calc.get("cf", 40.0), g_sp=calc.get("g_sp", 140.0)
        )
        return AppConfig(
            advisor=advisor,
            calculator=calculator,
            cohort_path=doc.get("cohort_path"),
            seed=int(doc.get("seed", 0)),
            cgm_noise_sd=float(doc.get("cgm_noise_sd", 2.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path) -> AppConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return config_from_dict(doc)


def save_config(cfg: AppConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
