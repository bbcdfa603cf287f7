"""The substitute virtual patient: meal and bolus responses.

Starts the nominal patient at its fasting fixed point (120 mg/dL) and
overlays three 6-hour experiments: an unbolused 60 g meal, the same meal
with a calculator-sized bolus, and the bolus alone.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from bolusopt.insilico.patient import (
    NOMINAL_PARAMS,
    VirtualPatient,
    fasting_state,
    solve_nominal_basal,
    step_patient,
)

basal = solve_nominal_basal(NOMINAL_PARAMS, target=120.0)
print(f"nominal basal {basal:.2f} U/h, hepatic ceiling "
      f"{NOMINAL_PARAMS.egp / NOMINAL_PARAMS.glucose_effectiveness:.0f} mg/dL")


def run(meal_g, bolus_u, hours=6):
    p = VirtualPatient(
        params=NOMINAL_PARAMS, state=fasting_state(NOMINAL_PARAMS, basal), basal_rate=basal
    )
    p = step_patient(p, basal_u_h=basal, bolus_u=bolus_u, meal_g=meal_g, dt=1.0)
    trace = [p.state.g]
    for _ in range(hours * 60 - 1):
        p = step_patient(p, basal_u_h=basal, dt=1.0)
        trace.append(p.state.g)
    return np.array(trace)


minutes = np.arange(6 * 60)
fig, ax = plt.subplots(figsize=(8, 4.5))
ax.plot(minutes, run(60, 0), label="60 g CHO, no bolus")
ax.plot(minutes, run(60, 5), label="60 g CHO + 5 U")
ax.plot(minutes, run(0, 5), label="5 U alone")
ax.axhspan(70, 180, alpha=0.08, color="green", label="70-180 mg/dL")
ax.set_xlabel("minutes after the meal")
ax.set_ylabel("plasma glucose (mg/dL)")
ax.legend()
os.makedirs(os.path.join(os.path.dirname(__file__), "output"), exist_ok=True)
out = os.path.join(os.path.dirname(__file__), "output", "02_virtual_patient.png")
fig.tight_layout()
fig.savefig(out, dpi=120)
print(f"saved {out}")
