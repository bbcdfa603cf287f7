"""Advisory-mode replay of clinical glucose traces.

Historical data flow one way: each detected meal gets a recommendation from
its preprandial window and the clinician's past doses, and nothing computed
here feeds back into later rows. Clinical files are delimited text with a
header: the trace carries ISO-8601 timestamps and mg/dL readings; the meal
annotations carry time, grams and the clinician's bolus.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .advisor import AdvisorConfig, DoseRecord, recommend_bolus
from .pg import (
    N_WINDOW,
    SAMPLE_PERIOD_S,
    GlucoseTrace,
    PgPredictor,
    PredictedTrajectory,
    grid_resample,
)

__all__ = [
    "ClinicalMeal",
    "ReplayRow",
    "ReplayReport",
    "load_clinical_trace",
    "load_meal_annotations",
    "replay_trace",
    "replay_report_to_dict",
    "write_replay_csv",
]


@dataclass(frozen=True)
class ClinicalMeal:
    time: float  # epoch seconds
    grams: float
    clinician_bolus: float | None


@dataclass(frozen=True)
class ReplayRow:
    time: float
    window: np.ndarray | None
    clinician_bolus: float | None
    recommended_bolus: float | None
    raw_bolus: float | None
    iob: float | None
    trajectory: PredictedTrajectory | None
    skipped_reason: str | None = None


@dataclass
class ReplayReport:
    rows: list[ReplayRow]
    seed: int


def _parse_time(text: str) -> float:
    dt = datetime.fromisoformat(text.strip())
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def load_clinical_trace(path) -> GlucoseTrace:
    times, values = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "timestamp" not in reader.fieldnames:
            raise ValueError("trace file needs a header with timestamp, glucose columns")
        for row in reader:
            times.append(_parse_time(row["timestamp"]))
            values.append(float(row["glucose"]))
    order = np.argsort(times)
    return GlucoseTrace(times=np.asarray(times)[order], values=np.asarray(values)[order])


def load_meal_annotations(path) -> list[ClinicalMeal]:
    meals = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "time" not in reader.fieldnames:
            raise ValueError("meals file needs a header with time, grams, clinician_bolus")
        for row in reader:
            bolus = row.get("clinician_bolus", "")
            meals.append(
                ClinicalMeal(
                    time=_parse_time(row["time"]),
                    grams=float(row["grams"]),
                    clinician_bolus=float(bolus) if bolus not in ("", None) else None,
                )
            )
    meals.sort(key=lambda m: m.time)
    return meals


def replay_trace(
    trace: GlucoseTrace,
    meals: list[ClinicalMeal],
    predictor: PgPredictor,
    config: AdvisorConfig,
    seed: int,
) -> ReplayReport:
    """One recommendation per annotated meal, strictly open loop.

    The dose history handed to the IOB layer holds the clinician's recorded
    boluses (those actually happened); recommendations never enter it.
    """
    grid_t, grid_v, ok = grid_resample(trace)
    rows: list[ReplayRow] = []
    for k, meal in enumerate(meals):
        anchor = int(math.floor((meal.time - grid_t[0]) / SAMPLE_PERIOD_S))
        lo = anchor - (N_WINDOW - 1)
        if meal.time < grid_t[0] or lo < 0 or anchor >= grid_t.size:
            rows.append(
                ReplayRow(
                    time=meal.time,
                    window=None,
                    clinician_bolus=meal.clinician_bolus,
                    recommended_bolus=None,
                    raw_bolus=None,
                    iob=None,
                    trajectory=None,
                    skipped_reason="insufficient preprandial window",
                )
            )
            continue
        if not np.all(ok[lo : anchor + 1]):
            rows.append(
                ReplayRow(
                    time=meal.time,
                    window=None,
                    clinician_bolus=meal.clinician_bolus,
                    recommended_bolus=None,
                    raw_bolus=None,
                    iob=None,
                    trajectory=None,
                    skipped_reason="gap in readings before the meal",
                )
            )
            continue
        window = grid_v[lo : anchor + 1]
        history = [
            DoseRecord(time=m.time, units=m.clinician_bolus)
            for m in meals[:k]
            if m.clinician_bolus is not None and m.time <= meal.time
        ]
        rec = recommend_bolus(
            predictor,
            window,
            meal.grams if predictor.meal_aware else None,
            config,
            history,
            now=meal.time,
            seed=int(np.random.SeedSequence([seed, k]).generate_state(1)[0]),
        )
        rows.append(
            ReplayRow(
                time=meal.time,
                window=window,
                clinician_bolus=meal.clinician_bolus,
                recommended_bolus=rec.final_bolus,
                raw_bolus=rec.raw_bolus,
                iob=rec.iob,
                trajectory=rec.trajectory_at_solution,
            )
        )
    return ReplayReport(rows=rows, seed=seed)


def replay_report_to_dict(report: ReplayReport) -> dict:
    return {
        "schema": "replay/v1",
        "seed": report.seed,
        "rows": [
            {
                "time": r.time,
                "window": None if r.window is None else [float(v) for v in r.window],
                "clinician_bolus": r.clinician_bolus,
                "recommended_bolus": r.recommended_bolus,
                "raw_bolus": r.raw_bolus,
                "iob": r.iob,
                "trajectory_means": None
                if r.trajectory is None
                else [float(v) for v in r.trajectory.means],
                "trajectory_variances": None
                if r.trajectory is None
                else [float(v) for v in r.trajectory.variances],
                "skipped_reason": r.skipped_reason,
            }
            for r in report.rows
        ],
    }


def write_replay_csv(report: ReplayReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["time", "clinician_bolus", "recommended_bolus", "raw_bolus", "iob", "skipped_reason"]
        )
        for r in report.rows:
            w.writerow(
                [
                    repr(float(r.time)),
                    "" if r.clinician_bolus is None else repr(float(r.clinician_bolus)),
                    "" if r.recommended_bolus is None else repr(float(r.recommended_bolus)),
                    "" if r.raw_bolus is None else repr(float(r.raw_bolus)),
                    "" if r.iob is None else repr(float(r.iob)),
                    r.skipped_reason or "",
                ]
            )
