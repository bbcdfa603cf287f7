"""Closed-loop comparison on one patient: advisor vs calculator.

Collects a training week, trains meal-aware models, then runs the 48-hour
two-day protocol under both dosing policies and overlays the CGM traces.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bolusopt.advisor import AdvisorConfig, CalculatorSettings
from bolusopt.insilico.cohort import load_cohort
from bolusopt.insilico.metrics import compute_metrics
from bolusopt.insilico.protocols import (
    AdvisorPolicy,
    CalculatorPolicy,
    protocol_a,
    run_data_collection,
    run_protocol,
)
from bolusopt.pg import train_pg_model

member = load_cohort()[0]
samples, _, _ = run_data_collection(member, seed=101)
by_class = {"breakfast": [], "lunch_dinner": []}
for s in samples:
    by_class[s.meal_class].append(s)
predictors = {cls: train_pg_model(ss, meal_aware=True) for cls, ss in by_class.items()}

advisor = AdvisorPolicy(predictors, AdvisorConfig(), seed=707)
calculator = CalculatorPolicy(CalculatorSettings(cr=member.cr, cf=member.cf))

runs = {}
for label, policy in (("advisor", advisor), ("calculator", calculator)):
    result = run_protocol(member, policy, protocol_a(), seed=7)
    report = compute_metrics(result)
    runs[label] = (result, report)
    print(f"{label:10s} TIR {report.pct_in_70_180:5.1f}%  <70 {report.pct_below_70:4.1f}%  "
          f"mean {report.mean_glucose:6.1f}  doses {[f'{d.units:.1f}' for d in result.doses]}")

fig, ax = plt.subplots(figsize=(10, 4.5))
for label, (result, _) in runs.items():
    ax.plot(result.cgm.times / 3600.0, result.cgm.values, label=label)
first = next(iter(runs.values()))[0]
for meal in first.meals:
    ax.axvline(meal.time / 3600.0, color="gray", ls=":", lw=0.7)
ax.axhspan(70, 180, alpha=0.08, color="green")
ax.set_xlabel("hours since 05:00 day 1 (dotted lines: meals)")
ax.set_ylabel("CGM (mg/dL)")
ax.legend()
os.makedirs(os.path.join(os.path.dirname(__file__), "output"), exist_ok=True)
out = os.path.join(os.path.dirname(__file__), "output", "05_closed_loop.png")
fig.tight_layout()
fig.savefig(out, dpi=120)
print(f"saved {out}")
