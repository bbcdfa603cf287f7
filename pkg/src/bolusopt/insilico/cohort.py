"""Frozen 10-patient virtual cohort.

Parameter sets are log-normal perturbations (clipped at +-25%) around the
nominal patient, generated once from a fixed seed and shipped as a data
file. Each patient's nominal basal comes from the fasting fixed point at
120 mg/dL; CR/CF derive from the 1800/500 rules on the patient's estimated
total daily insulin, scaled by constants tuned against the simulator.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .patient import NOMINAL_PARAMS, PatientParams, VirtualPatient, fasting_state, solve_nominal_basal

__all__ = [
    "CohortMember",
    "generate_cohort",
    "load_cohort",
    "default_cohort_path",
    "make_patient",
    "COHORT_SEED",
]

COHORT_SEED = 20240501
COHORT_SIZE = 10
PERTURB_CLIP = 0.25
# 2-sigma of the log-normal multiplier hits the +-25% clip
PERTURB_SIGMA = math.log(1.0 + PERTURB_CLIP) / 2.0

# Daily CHO assumed by the TDD estimate (collection-protocol means) and the
# hand-tuned rule scalings frozen into the shipped cohort file. The CR scale
# was tuned on closed-loop runs so the calculator behaves like a realistic
# well-adjusted clinical baseline rather than an oracle.
ASSUMED_DAILY_CHO = 200.0
CR_RULE_SCALE = 1.15
CF_RULE_SCALE = 1.0

PERTURBED_FIELDS = (
    "glucose_effectiveness",
    "remote_decay",
    "action_gain",
    "insulin_clearance",
    "glucose_volume",
    "sc_tau",
    "gut_tau",
    "bioavailability",
    "egp",
)


@dataclass(frozen=True)
class CohortMember:
    name: str
    params: PatientParams
    basal_rate: float  # U/h
    cr: float  # g/U
    cf: float  # mg/dL per U


def _derive_settings(params: PatientParams, basal_u_h: float) -> tuple[float, float]:
    """CR/CF from the 1800/500 rules on estimated total daily insulin.

    TDD is estimated iteratively: boluses cover the assumed daily CHO at the
    CR implied by the current TDD guess; a few fixed-point sweeps converge.
    """
    tdd = 2.0 * 24.0 * basal_u_h  # start from basal-is-half heuristic
    for _ in range(20):
        cr = 500.0 / tdd
        tdd_next = 24.0 * basal_u_h + ASSUMED_DAILY_CHO / cr
        if abs(tdd_next - tdd) < 1e-10:
            tdd = tdd_next
            break
        tdd = tdd_next
    cr = CR_RULE_SCALE * 500.0 / tdd
    cf = CF_RULE_SCALE * 1800.0 / tdd
    return cr, cf


def generate_cohort(seed: int = COHORT_SEED, size: int = COHORT_SIZE) -> list[CohortMember]:
    rng = np.random.default_rng(seed)
    members = []
    for k in range(size):
        fields = {}
        for name in PERTURBED_FIELDS:
            mult = float(np.exp(PERTURB_SIGMA * rng.standard_normal()))
            mult = min(max(mult, 1.0 - PERTURB_CLIP), 1.0 + PERTURB_CLIP)
            fields[name] = getattr(NOMINAL_PARAMS, name) * mult
        params = PatientParams(insulin_volume=NOMINAL_PARAMS.insulin_volume, **fields)
        basal = solve_nominal_basal(params, target=120.0)
        cr, cf = _derive_settings(params, basal)
        members.append(
            CohortMember(name=f"adult{k + 1:02d}", params=params, basal_rate=basal, cr=cr, cf=cf)
        )
    return members


def cohort_to_dict(members: list[CohortMember], seed: int = COHORT_SEED) -> dict:
    return {
        "schema": "cohort/v1",
        "seed": seed,
        "patients": [
            {
                "name": m.name,
                "basal_rate": m.basal_rate,
                "cr": m.cr,
                "cf": m.cf,
                "params": {f: getattr(m.params, f) for f in PERTURBED_FIELDS}
                | {"insulin_volume": m.params.insulin_volume},
            }
            for m in members
        ],
    }


def cohort_from_dict(doc: dict) -> list[CohortMember]:
    members = []
    for entry in doc["patients"]:
        params = PatientParams(**entry["params"])
        members.append(
            CohortMember(
                name=entry["name"],
                params=params,
                basal_rate=entry["basal_rate"],
                cr=entry["cr"],
                cf=entry["cf"],
            )
        )
    return members


def default_cohort_path():
    return resources.files("bolusopt.insilico").joinpath("data/cohort_adults.json")


def load_cohort(path=None) -> list[CohortMember]:
    if path is None:
        text = default_cohort_path().read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return cohort_from_dict(json.loads(text))


def make_patient(member: CohortMember, basal_scale: float = 1.0) -> VirtualPatient:
    """Instantiate the patient at the fasting fixed point of the delivered
    basal. A basal mismatch is a chronic setting error, so scaled scenarios
    start already settled at the scaled rate (elevated or depressed fasting
    glucose), not at the nominal 120 mg/dL."""
    state = fasting_state(member.params, member.basal_rate * basal_scale)
    return VirtualPatient(
        params=member.params, state=state, basal_rate=member.basal_rate, name=member.name
    )
