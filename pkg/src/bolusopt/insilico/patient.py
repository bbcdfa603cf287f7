"""Substitute virtual T1D patient: minimal-model glucose kinetics with
two-compartment gut absorption and subcutaneous insulin transport.

Not a reimplementation of any commercial simulator; a small auditable ODE
model with enough structure for closed-loop bolus experiments. Glucose
responds to remote insulin action and endogenous production; meals and
boluses enter as impulses into first-stage compartments.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "PatientParams",
    "PatientState",
    "VirtualPatient",
    "NOMINAL_PARAMS",
    "fasting_state",
    "steady_state_glucose",
    "solve_nominal_basal",
    "step_patient",
    "cgm_read",
]

CGM_FLOOR = 20.0  # mg/dL


@dataclass(frozen=True)
class PatientParams:
    """Kinetic constants; rates are per minute, volumes in L (insulin) and
    dL (glucose)."""

    glucose_effectiveness: float = 0.010  # 1/min
    remote_decay: float = 0.018  # 1/min
    action_gain: float = 1.7e-5  # (mU/L)^-1 min^-2
    insulin_clearance: float = 0.10  # 1/min
    insulin_volume: float = 12.0  # L
    glucose_volume: float = 140.0  # dL
    sc_tau: float = 55.0  # min, subcutaneous absorption
    gut_tau: float = 40.0  # min, carb absorption
    bioavailability: float = 0.8
    egp: float = 3.0  # mg/dL/min endogenous production

    def __post_init__(self):
        for name in (
            "glucose_effectiveness",
            "remote_decay",
            "action_gain",
            "insulin_clearance",
            "insulin_volume",
            "glucose_volume",
            "sc_tau",
            "gut_tau",
            "bioavailability",
            "egp",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PatientState:
    """glucose mg/dL; remote action 1/min; plasma insulin mU/L; two sc
    insulin depots U; two gut compartments g."""

    g: float
    x: float
    i: float
    s1: float
    s2: float
    d1: float
    d2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.g, self.x, self.i, self.s1, self.s2, self.d1, self.d2])

    @classmethod
    def from_array(cls, a) -> "PatientState":
        return cls(*(float(v) for v in a))


@dataclass
class VirtualPatient:
    params: PatientParams
    state: PatientState
    basal_rate: float  # U/h, nominal
    name: str = "patient"

    def reset_to_fasting(self, basal_scale: float = 1.0) -> None:
        self.state = fasting_state(self.params, self.basal_rate * basal_scale)


NOMINAL_PARAMS = PatientParams()


def _derivs(y: np.ndarray, p: PatientParams, basal_u_per_min: float, egp_scale: float) -> np.ndarray:
    g, x, i, s1, s2, d1, d2 = y
    plasma_in = 1000.0 * s2 / (p.sc_tau * p.insulin_volume)  # mU/L/min
    ra = 1000.0 * d2 / (p.gut_tau * p.glucose_volume)  # mg/dL/min
    return np.array(
        [
            -(p.glucose_effectiveness + x) * g + egp_scale * p.egp + ra,
            -p.remote_decay * x + p.action_gain * i,
            -p.insulin_clearance * i + plasma_in,
            basal_u_per_min - s1 / p.sc_tau,
            (s1 - s2) / p.sc_tau,
            -d1 / p.gut_tau,
            (d1 - d2) / p.gut_tau,
        ]
    )


def steady_state_glucose(params: PatientParams, basal_u_h: float) -> float:
    """Fasting glucose at a constant basal rate (analytic fixed point)."""
    r = basal_u_h / 60.0
    i_ss = 1000.0 * r / (params.insulin_clearance * params.insulin_volume)
    x_ss = params.action_gain * i_ss / params.remote_decay
    return params.egp / (params.glucose_effectiveness + x_ss)


def fasting_state(params: PatientParams, basal_u_h: float) -> PatientState:
    r = basal_u_h / 60.0
    s = r * params.sc_tau
    i_ss = 1000.0 * r / (params.insulin_clearance * params.insulin_volume)
    x_ss = params.action_gain * i_ss / params.remote_decay
    g_ss = params.egp / (params.glucose_effectiveness + x_ss)
    return PatientState(g=g_ss, x=x_ss, i=i_ss, s1=s, s2=s, d1=0.0, d2=0.0)


def solve_nominal_basal(params: PatientParams, target: float = 120.0) -> float:
    """Basal rate (U/h) whose fasting fixed point sits at the target."""
    ceiling = params.egp / params.glucose_effectiveness
    if target >= ceiling:
        raise ValueError(f"target {target} above the zero-insulin ceiling {ceiling:.0f}")
    lo, hi = 1e-6, 30.0
    f = lambda u: steady_state_glucose(params, u) - target
    if f(hi) > 0:
        raise ValueError("basal bracket too small for this parameter set")
    return float(brentq(f, lo, hi, xtol=1e-10))


def step_patient(
    p: VirtualPatient,
    basal_u_h: float = 0.0,
    bolus_u: float = 0.0,
    meal_g: float = 0.0,
    dt: float = 1.0,
    egp_scale: float = 1.0,
) -> VirtualPatient:
    """One fixed-step RK4 update. Bolus and meal impulses land in the
    first-stage compartments before integration; basal flows continuously.
    ``egp_scale`` modulates endogenous production for slow metabolic
    variability (1.0 = nominal)."""
    if not 0.0 < dt <= 5.0:
        raise ValueError("dt must be in (0, 5] minutes")
    if bolus_u < 0 or meal_g < 0 or basal_u_h < 0:
        raise ValueError("inputs must be nonnegative")
    if egp_scale <= 0:
        raise ValueError("egp_scale must be positive")
    y = p.state.as_array()
    y[3] += bolus_u
    y[5] += p.params.bioavailability * meal_g
    r = basal_u_h / 60.0

    k1 = _derivs(y, p.params, r, egp_scale)
    k2 = _derivs(y + 0.5 * dt * k1, p.params, r, egp_scale)
    k3 = _derivs(y + 0.5 * dt * k2, p.params, r, egp_scale)
    k4 = _derivs(y + dt * k3, p.params, r, egp_scale)
    y_new = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    np.maximum(y_new, 0.0, out=y_new)  # round-off guard; dynamics stay nonnegative
    return replace(p, state=PatientState.from_array(y_new))


def cgm_read(p: VirtualPatient, noise_sd: float, rng: np.random.Generator) -> float:
    """Plasma glucose plus white sensor noise, floored at 20 mg/dL."""
    value = p.state.g
    if noise_sd > 0:
        value += noise_sd * rng.standard_normal()
    return max(CGM_FLOOR, float(value))
