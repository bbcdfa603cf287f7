"""Advisory-mode replay over a clinic-style trace.

Builds a synthetic five-day FGM file plus meal annotations with clinician
doses (the stand-in for real exported data), trains a meal-free model from
the first days, and replays the remaining meals: the table compares what
the clinician gave with what the advisor would have suggested. Nothing is
fed back - pure open-loop comparison.
"""

import os
from datetime import datetime, timedelta, timezone

import numpy as np

from bolusopt.advisor import AdvisorConfig
from bolusopt.insilico.cohort import load_cohort
from bolusopt.insilico.protocols import run_data_collection
from bolusopt.pg import train_pg_model
from bolusopt.replay import ClinicalMeal, load_clinical_trace, replay_trace, write_replay_csv

out_dir = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(out_dir, exist_ok=True)

# synthesize the "clinic export" from the virtual patient
member = load_cohort()[2]
samples, sim, _ = run_data_collection(member, seed=909)
start = datetime(2024, 5, 6, 5, 0, tzinfo=timezone.utc)

trace_path = os.path.join(out_dir, "clinic_trace.csv")
with open(trace_path, "w", encoding="utf-8") as fh:
    fh.write("timestamp,glucose\n")
    for t, g in zip(sim.cgm.times, sim.cgm.values):
        stamp = (start + timedelta(seconds=float(t))).isoformat()
        fh.write(f"{stamp},{g:.1f}\n")

meals = [
    ClinicalMeal(
        time=start.timestamp() + m.time,
        grams=m.carbs,
        clinician_bolus=round(m.bolus, 1),
    )
    for m in sim.meals
]

# meal-free model from the same week (consistent-diet assumption)
lunch_dinner = [s for s in samples if s.meal_class == "lunch_dinner"]
predictor = train_pg_model(lunch_dinner, meal_aware=False)

trace = load_clinical_trace(trace_path)
late_meals = [m for m in meals[-6:]]
report = replay_trace(trace, late_meals, predictor, AdvisorConfig(), seed=5)

print(f"{'time':19s}  {'clinician':>9s}  {'advisor':>7s}  {'IOB':>5s}")
for row in report.rows:
    when = datetime.fromtimestamp(row.time, tz=timezone.utc).strftime("%Y-%m-%d %H:%M")
    if row.skipped_reason:
        print(f"{when:19s}  skipped: {row.skipped_reason}")
        continue
    print(
        f"{when:19s}  {row.clinician_bolus:9.1f}  {row.recommended_bolus:7.2f}  {row.iob:5.2f}"
    )

csv_path = os.path.join(out_dir, "06_replay.csv")
write_replay_csv(report, csv_path)
print(f"saved {csv_path}")
