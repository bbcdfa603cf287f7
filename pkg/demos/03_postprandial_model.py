"""Learning postprandial dynamics from a week of collected data.

Runs the 7-day collection protocol on one cohort patient, trains the
breakfast model, and sweeps the bolus: each curve is the 8-step predicted
trajectory for the same preprandial window and meal at a different dose,
with the shaded band showing the per-step predictive uncertainty of the
middle dose.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bolusopt.cost import DEFAULT_TARGET
from bolusopt.insilico.cohort import load_cohort
from bolusopt.insilico.protocols import run_data_collection
from bolusopt.pg import predict_trajectory, train_pg_model

member = load_cohort()[0]
samples, _, factors = run_data_collection(member, seed=101)
breakfast = [s for s in samples if s.meal_class == "breakfast"]
print(f"{member.name}: {len(samples)} samples "
      f"({len(breakfast)} breakfast), dose perturbations "
      f"[{min(factors):.2f}, {max(factors):.2f}]")

predictor = train_pg_model(breakfast, meal_aware=True)
window = breakfast[0].preprandial
carbs = 55.0

minutes = (np.arange(8) + 1) * 15
fig, ax = plt.subplots(figsize=(8, 4.5))
ax.plot(np.arange(-7, 1) * 15, window, "k.-", label="preprandial window")
for u in (0.0, 2.0, 4.0, 6.0):
    traj = predict_trajectory(predictor, window, u, carbs)
    ax.plot(minutes, traj.means, marker="o", ms=3, label=f"bolus {u:.0f} U")
mid = predict_trajectory(predictor, window, 3.0, carbs)
sd = np.sqrt(mid.variances)
ax.fill_between(minutes, mid.means - 1.96 * sd, mid.means + 1.96 * sd, alpha=0.2)
ax.step(minutes, DEFAULT_TARGET, where="mid", ls="--", color="gray", label="target profile")
ax.set_xlabel("minutes relative to the meal")
ax.set_ylabel("glucose (mg/dL)")
ax.legend(fontsize=8)
os.makedirs(os.path.join(os.path.dirname(__file__), "output"), exist_ok=True)
out = os.path.join(os.path.dirname(__file__), "output", "03_postprandial_model.png")
fig.tight_layout()
fig.savefig(out, dpi=120)
print(f"saved {out}")
