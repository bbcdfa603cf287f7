"""Data-collection and evaluation protocols on the virtual patient.

The collection protocol runs 7 days from 05:00 with randomized meal times
and sizes and deliberately perturbed calculator boluses. Protocol A is the
48 h two-day evaluation; Protocol B the 24 h single-day variant used for
basal-mismatch scenarios. All simulations step at 1 min with CGM readings
on the 15-min grid; everything derives from one master seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..advisor import AdvisorConfig, CalculatorSettings, DoseRecord, iob, recommend_bolus, standard_calculator
from ..pg import GlucoseTrace, MealEvent, PgPredictor, PgTrainingSample, serialize_samples
from .cohort import CohortMember, make_patient
from .patient import VirtualPatient, cgm_read, step_patient

__all__ = [
    "MealSpec",
    "ScenarioProtocol",
    "SimulationResult",
    "protocol_a",
    "protocol_b",
    "collection_protocol",
    "protocol_to_dict",
    "protocol_from_dict",
    "load_protocol",
    "CalculatorPolicy",
    "PerturbedCalculatorPolicy",
    "AdvisorPolicy",
    "run_protocol",
    "run_data_collection",
    "DEFAULT_CGM_NOISE_SD",
    "export_simulation_csv",
]

DEFAULT_CGM_NOISE_SD = 2.0  # mg/dL
CGM_PERIOD_MIN = 15
START_CLOCK_S = 5 * 3600  # protocols begin at 05:00
DAY_S = 24 * 3600


@dataclass(frozen=True)
class MealSpec:
    """Fixed time or a uniform clock window; fixed grams or a normal draw."""

    clock_s: float | None = None
    window_s: tuple[float, float] | None = None
    grams: float | None = None
    grams_mean: float | None = None
    grams_sd: float | None = None
    announced: bool = True
    meal_class: str = "lunch_dinner"

    def draw(self, day: int, rng: np.random.Generator) -> tuple[float, float]:
        """(absolute time s, grams) for the given day index."""
        if self.clock_s is not None:
            t = self.clock_s
        else:
            lo, hi = self.window_s
            t = float(rng.uniform(lo, hi))
        if self.grams is not None:
            g = self.grams
        else:
            g = max(5.0, float(rng.normal(self.grams_mean, self.grams_sd)))
        return day * DAY_S + t, g


@dataclass(frozen=True)
class ScenarioProtocol:
    """``metabolic_sd`` is the stationary SD of the log-EGP Ornstein-
    Uhlenbeck modulation that produces day-to-day fasting variability
    (0 disables it)."""

    name: str
    duration_h: float
    meals: tuple[MealSpec, ...]
    days: int
    basal_scale: float = 1.0
    start_clock_s: float = START_CLOCK_S
    metabolic_sd: float = 0.05
    metabolic_tau_min: float = 360.0

    def __post_init__(self):
        if self.basal_scale <= 0:
            raise ValueError("basal_scale must be positive")
        if self.metabolic_sd < 0 or self.metabolic_tau_min <= 0:
            raise ValueError("bad metabolic variability settings")


@dataclass
class SimulationResult:
    cgm: GlucoseTrace
    doses: list[DoseRecord]
    meals: list[MealEvent]
    seed: int
    start_clock_s: float = START_CLOCK_S


def protocol_a(basal_scale: float = 1.0) -> ScenarioProtocol:
    """48 h, meals 08:00/12:00/18:00: (55, 65, 85) g day 1, (45, 85, 65) g day 2."""
    day1 = [(8, 55.0, "breakfast"), (12, 65.0, "lunch_dinner"), (18, 85.0, "lunch_dinner")]
    day2 = [(8, 45.0, "breakfast"), (12, 85.0, "lunch_dinner"), (18, 65.0, "lunch_dinner")]
    meals = []
    for day, spec in ((0, day1), (1, day2)):
        for hour, grams, cls in spec:
            meals.append(
                MealSpec(clock_s=day * DAY_S + hour * 3600, grams=grams, meal_class=cls)
            )
    return ScenarioProtocol(
        name="A", duration_h=48.0, meals=tuple(meals), days=2, basal_scale=basal_scale
    )


def protocol_b(basal_scale: float = 1.0) -> ScenarioProtocol:
    """24 h, (45, 85, 65) g at 08:00/12:00/18:00."""
    meals = (
        MealSpec(clock_s=8 * 3600, grams=45.0, meal_class="breakfast"),
        MealSpec(clock_s=12 * 3600, grams=85.0, meal_class="lunch_dinner"),
        MealSpec(clock_s=18 * 3600, grams=65.0, meal_class="lunch_dinner"),
    )
    return ScenarioProtocol(
        name="B", duration_h=24.0, meals=meals, days=1, basal_scale=basal_scale
    )


def collection_protocol() -> ScenarioProtocol:
    """7 days; CHO ~ N([50, 75, 75], [3, 4, 4]) g at uniform times in
    [07:00, 09:00], [11:00, 13:00], [18:00, 20:00]."""
    meals = (
        MealSpec(window_s=(7 * 3600, 9 * 3600), grams_mean=50, grams_sd=3, meal_class="breakfast"),
        MealSpec(window_s=(11 * 3600, 13 * 3600), grams_mean=75, grams_sd=4, meal_class="lunch_dinner"),
        MealSpec(window_s=(18 * 3600, 20 * 3600), grams_mean=75, grams_sd=4, meal_class="lunch_dinner"),
    )
    return ScenarioProtocol(name="collect", duration_h=7 * 24.0, meals=meals, days=7)


def protocol_to_dict(p: ScenarioProtocol) -> dict:
    return {
        "schema": "protocol/v1",
        "name": p.name,
        "duration_h": p.duration_h,
        "days": p.days,
        "basal_scale": p.basal_scale,
        "start_clock_s": p.start_clock_s,
        "metabolic_sd": p.metabolic_sd,
        "metabolic_tau_min": p.metabolic_tau_min,
        "meals": [
            {
                "clock_s": m.clock_s,
                "window_s": list(m.window_s) if m.window_s else None,
                "grams": m.grams,
                "grams_mean": m.grams_mean,
                "grams_sd": m.grams_sd,
                "announced": m.announced,
                "meal_class": m.meal_class,
            }
            for m in p.meals
        ],
    }


def protocol_from_dict(doc: dict) -> ScenarioProtocol:
    meals = tuple(
        MealSpec(
            clock_s=m.get("clock_s"),
            window_s=tuple(m["window_s"]) if m.get("window_s") else None,
            grams=m.get("grams"),
            grams_mean=m.get("grams_mean"),
            grams_sd=m.get("grams_sd"),
            announced=m.get("announced", True),
            meal_class=m.get("meal_class", "lunch_dinner"),
        )
        for m in doc["meals"]
    )
    return ScenarioProtocol(
        name=doc["name"],
        duration_h=float(doc["duration_h"]),
        meals=meals,
        days=int(doc["days"]),
        basal_scale=float(doc.get("basal_scale", 1.0)),
        start_clock_s=float(doc.get("start_clock_s", START_CLOCK_S)),
        metabolic_sd=float(doc.get("metabolic_sd", 0.05)),
        metabolic_tau_min=float(doc.get("metabolic_tau_min", 360.0)),
    )


def load_protocol(path) -> ScenarioProtocol:
    import json

    with open(path, encoding="utf-8") as fh:
        return protocol_from_dict(json.load(fh))


class CalculatorPolicy:
    """Standard bolus calculator with the patient's CR/CF."""

    def __init__(self, settings: CalculatorSettings, iob_model=None):
        from ..advisor import IobModel

        self.settings = settings
        self.iob_model = iob_model or IobModel()

    def __call__(self, window, carbs, history, now, meal_class, rng):
        g_c = window[-1]
        on_board = iob(history, now, self.iob_model)
        return standard_calculator(carbs if carbs is not None else 0.0, g_c, self.settings, on_board)


class PerturbedCalculatorPolicy(CalculatorPolicy):
    """Calculator output scaled by a uniform factor in [1-f, 1+f]; the
    factors consumed from the simulation's random stream."""

    def __init__(self, settings: CalculatorSettings, fraction: float = 0.3, iob_model=None):
        super().__init__(settings, iob_model)
        self.fraction = fraction
        self.factors: list[float] = []

    def __call__(self, window, carbs, history, now, meal_class, rng):
        base = super().__call__(window, carbs, history, now, meal_class, rng)
        factor = float(rng.uniform(1.0 - self.fraction, 1.0 + self.fraction))
        self.factors.append(factor)
        return base * factor


class AdvisorPolicy:
    """GP + risk-cost + BO recommendation; selects the predictor for the
    meal class and derives one seed per decision."""

    def __init__(
        self,
        predictors: dict[str, PgPredictor],
        config: AdvisorConfig,
        seed: int,
        announce_meals: bool = True,
    ):
        self.predictors = predictors
        self.config = config
        self.seed = seed
        self.announce = announce_meals
        self.recommendations = []
        self._counter = 0

    def __call__(self, window, carbs, history, now, meal_class, rng):
        predictor = self.predictors[meal_class]
        meal = carbs if (self.announce and predictor.meal_aware) else None
        if predictor.meal_aware and meal is None:
            raise ValueError("meal-aware predictor in a no-announcement run")
        decision_seed = int(
            np.random.SeedSequence([self.seed, 0xD0 + self._counter]).generate_state(1)[0]
        )
        self._counter += 1
        rec = recommend_bolus(
            predictor, np.asarray(window), meal, self.config, list(history), now, decision_seed
        )
        self.recommendations.append(rec)
        return rec.final_bolus


def run_protocol(
    member: CohortMember,
    policy,
    protocol: ScenarioProtocol,
    seed: int,
    cgm_noise_sd: float = DEFAULT_CGM_NOISE_SD,
) -> SimulationResult:
    """Minute-stepped closed loop: CGM on the 15-min grid, policy invoked at
    each meal with the trailing 8-reading window."""
    meal_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA1]))
    cgm_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC6]))
    policy_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x90]))
    metab_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE6]))

    total_min = int(round(protocol.duration_h * 60))
    # meal schedule drawn up front, rounded to the minute
    schedule: dict[int, tuple[float, str]] = {}
    for day in range(protocol.days):
        for spec in protocol.meals:
            if spec.clock_s is not None and spec.window_s is None and protocol.days > 1:
                # fixed absolute offsets already encode the day
                if day > 0:
                    continue
                t_s, grams = spec.draw(0, meal_rng)
            else:
                t_s, grams = spec.draw(day, meal_rng)
            minute = int(round(t_s / 60.0)) - int(round(protocol.start_clock_s / 60.0))
            if 0 <= minute < total_min:
                schedule[minute] = (grams, spec.meal_class)

    patient = make_patient(member, basal_scale=protocol.basal_scale)
    basal = member.basal_rate * protocol.basal_scale

    # stationary OU start so day 1 mornings vary like later ones
    ou_sd = protocol.metabolic_sd
    ou_tau = protocol.metabolic_tau_min
    ou = float(ou_sd * metab_rng.standard_normal()) if ou_sd > 0 else 0.0
    ou_inc = ou_sd * np.sqrt(2.0 / ou_tau) if ou_sd > 0 else 0.0

    cgm_times: list[float] = []
    cgm_values: list[float] = []
    doses: list[DoseRecord] = []
    meals: list[MealEvent] = []
    history: list[DoseRecord] = []

    for minute in range(total_min + 1):
        now_s = minute * 60.0
        if minute % CGM_PERIOD_MIN == 0:
            cgm_times.append(now_s)
            cgm_values.append(cgm_read(patient, cgm_noise_sd, cgm_rng))

        bolus = 0.0
        meal_g = 0.0
        if minute in schedule:
            meal_g, meal_class = schedule[minute]
            window = cgm_values[-8:]
            if len(window) == 8:
                bolus = float(
                    policy(window, meal_g, tuple(history), now_s, meal_class, policy_rng)
                )
            meals.append(
                MealEvent(time=now_s, carbs=meal_g, bolus=bolus, meal_class=meal_class)
            )
            if bolus > 0:
                rec = DoseRecord(time=now_s, units=bolus)
                doses.append(rec)
                history.append(rec)

        if minute < total_min:
            if ou_sd > 0:
                ou += -ou / ou_tau + ou_inc * float(metab_rng.standard_normal())
            patient = step_patient(
                patient,
                basal_u_h=basal,
                bolus_u=bolus,
                meal_g=meal_g,
                dt=1.0,
                egp_scale=float(np.exp(ou)),
            )

    return SimulationResult(
        cgm=GlucoseTrace(times=np.array(cgm_times), values=np.array(cgm_values)),
        doses=doses,
        meals=meals,
        seed=seed,
        start_clock_s=protocol.start_clock_s,
    )


def export_simulation_csv(result: SimulationResult, prefix) -> list[str]:
    """Delimited exports: <prefix>_cgm.csv (time_s, mg/dL), <prefix>_doses.csv,
    <prefix>_meals.csv."""
    import csv

    written = []
    path = f"{prefix}_cgm.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "glucose_mg_dl"])
        for t, g in zip(result.cgm.times, result.cgm.values):
            w.writerow([repr(float(t)), repr(float(g))])
    written.append(path)

    path = f"{prefix}_doses.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "units"])
        for d in result.doses:
            w.writerow([repr(float(d.time)), repr(float(d.units))])
    written.append(path)

    path = f"{prefix}_meals.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "carbs_g", "bolus_u", "meal_class"])
        for m in result.meals:
            w.writerow([repr(float(m.time)), repr(float(m.carbs)), repr(float(m.bolus)), m.meal_class])
    written.append(path)
    return written


def run_data_collection(
    member: CohortMember,
    seed: int,
    cgm_noise_sd: float = DEFAULT_CGM_NOISE_SD,
    perturb_fraction: float = 0.3,
) -> tuple[list[PgTrainingSample], SimulationResult, list[float]]:
    """7-day collection run with perturbed calculator boluses; returns the
    serialized training samples, the raw simulation and the perturbation
    factors actually applied."""
    policy = PerturbedCalculatorPolicy(
        CalculatorSettings(cr=member.cr, cf=member.cf), fraction=perturb_fraction
    )
    result = run_protocol(member, policy, collection_protocol(), seed, cgm_noise_sd)
    samples, _ = serialize_samples(result.cgm, result.meals)
    return samples, result, policy.factors
