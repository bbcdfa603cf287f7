"""Virtual patient, cohort, protocols and glycemic metrics."""

from .cohort import CohortMember, generate_cohort, load_cohort, make_patient
from .metrics import MetricsReport, compute_metrics
from .patient import (
    NOMINAL_PARAMS,
    PatientParams,
    PatientState,
    VirtualPatient,
    cgm_read,
    fasting_state,
    solve_nominal_basal,
    step_patient,
)
from .protocols import (
    AdvisorPolicy,
    CalculatorPolicy,
    MealSpec,
    PerturbedCalculatorPolicy,
    ScenarioProtocol,
    SimulationResult,
    collection_protocol,
    protocol_a,
    protocol_b,
    run_data_collection,
    run_protocol,
)

__all__ = [
    "CohortMember",
    "generate_cohort",
    "load_cohort",
    "make_patient",
    "MetricsReport",
    "compute_metrics",
    "NOMINAL_PARAMS",
    "PatientParams",
    "PatientState",
    "VirtualPatient",
    "cgm_read",
    "fasting_state",
    "solve_nominal_basal",
    "step_patient",
    "AdvisorPolicy",
    "CalculatorPolicy",
    "MealSpec",
    "PerturbedCalculatorPolicy",
    "ScenarioProtocol",
    "SimulationResult",
    "collection_protocol",
    "protocol_a",
    "protocol_b",
    "run_data_collection",
    "run_protocol",
]
