"""The asymmetric risk-sensitive objective and its Bayesian optimization.

Left: the asymmetric penalty weights — constant above target, sigmoid-
escalating below. Right: the Monte-Carlo cost over the bolus range for one
trained model, with the BO evaluations and the chosen dose.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bolusopt.advisor import AdvisorConfig, recommend_bolus
from bolusopt.cost import CostConfig, q_minus_weight, total_cost
from bolusopt.insilico.cohort import load_cohort
from bolusopt.insilico.protocols import run_data_collection
from bolusopt.pg import predict_trajectory, train_pg_model

cfg = CostConfig()
member = load_cohort()[0]
samples, _, _ = run_data_collection(member, seed=101)
breakfast = [s for s in samples if s.meal_class == "breakfast"]
predictor = train_pg_model(breakfast, meal_aware=True)
window, carbs = breakfast[0].preprandial, 55.0

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))

devs = np.linspace(0, 60, 300)
ax1.plot(devs, [q_minus_weight(1.0, d, cfg.gamma_quad) for d in devs], label="below target")
ax1.axhline(1.0, ls="--", color="gray", label="above target")
ax1.set_xlabel("|deviation from target| (mg/dL)")
ax1.set_ylabel("penalty weight / q+")
ax1.legend()

us = np.linspace(0, cfg.u_max, 120)
curve = [
    total_cost(predict_trajectory(predictor, window, float(u), carbs), float(u), cfg,
               np.random.default_rng(42))
    for u in us
]
ax2.plot(us, curve, label="MC objective (fixed draws)")

rec = recommend_bolus(predictor, window, carbs, AdvisorConfig(), [], now=0.0, seed=42)
evals = [(o.u, o.cost) for o in rec.bo_trace]
ax2.scatter(*zip(*evals), s=14, color="k", label="BO evaluations")
ax2.axvline(rec.final_bolus, color="crimson", ls=":",
            label=f"recommended {rec.final_bolus:.2f} U")
ax2.set_xlabel("bolus (U)")
ax2.set_ylabel("cost")
ax2.set_yscale("log")
ax2.legend(fontsize=8)
print(f"raw {rec.raw_bolus:.2f} U, IOB {rec.iob:.2f} U, final {rec.final_bolus:.2f} U "
      f"({len(rec.bo_trace)} evaluations)")

os.makedirs(os.path.join(os.path.dirname(__file__), "output"), exist_ok=True)
out = os.path.join(os.path.dirname(__file__), "output", "04_risk_cost_and_bo.png")
fig.tight_layout()
fig.savefig(out, dpi=120)
print(f"saved {out}")
