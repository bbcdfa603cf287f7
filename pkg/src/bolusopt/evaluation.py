"""Cohort evaluation: collect, train, run a protocol under one or both
dosing policies, and summarize the outcomes in a comparison table.

Per-patient seeds derive from the master seed and patient index only, so
results are independent of scheduling (the cohort can fan out over
processes) and byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .advisor import AdvisorConfig, CalculatorSettings
from .config import AppConfig
from .insilico.cohort import CohortMember, load_cohort
from .insilico.metrics import METRIC_ROWS, MetricsReport, compute_metrics
from .insilico.protocols import (
    AdvisorPolicy,
    CalculatorPolicy,
    SimulationResult,
    protocol_a,
    protocol_b,
    run_data_collection,
    run_protocol,
)
from .pg import train_pg_model

__all__ = [
    "PatientOutcome",
    "EvaluationReport",
    "evaluate_cohort",
    "comparison_table",
    "write_report_files",
]


@dataclass
class PatientOutcome:
    patient: str
    policy: str
    metrics: MetricsReport
    doses: list[float]
    first_meal_bolus: float
    cgm_times: np.ndarray
    cgm_values: np.ndarray


@dataclass
class EvaluationReport:
    protocol: str
    basal_scale: float
    meal_info: bool
    seed: int
    outcomes: list[PatientOutcome]

    def by_policy(self, policy: str) -> list[PatientOutcome]:
        return [o for o in self.outcomes if o.policy == policy]


def _patient_seed(master: int, index: int, purpose: int) -> int:
    return int(np.random.SeedSequence([master, index, purpose]).generate_state(1)[0])


def _protocol(name: str, basal_scale: float):
    if name.upper() == "A":
        return protocol_a(basal_scale)
    if name.upper() == "B":
        return protocol_b(basal_scale)
    raise ValueError(f"unknown protocol {name!r}")


def _outcome(result: SimulationResult, patient: str, policy: str) -> PatientOutcome:
    return PatientOutcome(
        patient=patient,
        policy=policy,
        metrics=compute_metrics(result),
        doses=[d.units for d in result.doses],
        first_meal_bolus=result.meals[0].bolus if result.meals else 0.0,
        cgm_times=result.cgm.times,
        cgm_values=result.cgm.values,
    )


def _evaluate_one(args) -> list[PatientOutcome]:
    (index, member, protocol_name, basal_scale, policies, meal_info, seed, advisor_cfg, noise_sd) = args
    protocol = _protocol(protocol_name, basal_scale)
    outcomes = []
    predictors = None
    for policy_name in policies:
        if policy_name == "calculator":
            policy = CalculatorPolicy(CalculatorSettings(cr=member.cr, cf=member.cf))
        elif policy_name == "advisor":
            if predictors is None:
                samples, _, _ = run_data_collection(
                    member, seed=_patient_seed(seed, index, 1), cgm_noise_sd=noise_sd
                )
                by_class: dict[str, list] = {"breakfast": [], "lunch_dinner": []}
                for s in samples:
                    by_class[s.meal_class].append(s)
                predictors = {
                    cls: train_pg_model(ss, meal_aware=meal_info) for cls, ss in by_class.items()
                }
            policy = AdvisorPolicy(
                predictors,
                advisor_cfg,
                seed=_patient_seed(seed, index, 2),
                announce_meals=meal_info,
            )
        else:
            raise ValueError(f"unknown policy {policy_name!r}")
        result = run_protocol(
            member, policy, protocol, seed=_patient_seed(seed, index, 3), cgm_noise_sd=noise_sd
        )
        outcomes.append(_outcome(result, member.name, policy_name))
    return outcomes


def evaluate_cohort(
    cohort: list[CohortMember] | None = None,
    protocol: str = "A",
    policies: tuple[str, ...] = ("calculator", "advisor"),
    meal_info: bool = True,
    basal_scale: float = 1.0,
    seed: int = 7,
    config: AppConfig | None = None,
    jobs: int = 1,
) -> EvaluationReport:
    cfg = config or AppConfig()
    members = cohort if cohort is not None else load_cohort(cfg.cohort_path)
    work = [
        (i, m, protocol, basal_scale, tuple(policies), meal_info, seed, cfg.advisor, cfg.cgm_noise_sd)
        for i, m in enumerate(members)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_one, work))
    else:
        results = [_evaluate_one(w) for w in work]
    outcomes = [o for group in results for o in group]
    return EvaluationReport(
        protocol=protocol,
        basal_scale=basal_scale,
        meal_info=meal_info,
        seed=seed,
        outcomes=outcomes,
    )


def _median_iqr(values) -> str:
    v = np.asarray(values, dtype=float)
    med = np.median(v)
    iqr = np.percentile(v, 75) - np.percentile(v, 25)
    return f"{med:.1f} ({iqr:.1f})"


def comparison_table(report: EvaluationReport) -> str:
    """Two-column median (IQR) table over the cohort, one row per metric."""
    policies = sorted({o.policy for o in report.outcomes})
    title = (
        f"Protocol {report.protocol}, basal {report.basal_scale:.0%}, "
        f"{'with' if report.meal_info else 'without'} meal information, "
        f"seed {report.seed}, n={len(report.by_policy(policies[0]))}"
    )
    header = ["Metric"] + [p.capitalize() for p in policies]
    rows = [header]
    for key, label in METRIC_ROWS:
        row = [label]
        for p in policies:
            row.append(_median_iqr([getattr(o.metrics, key) for o in report.by_policy(p)]))
        rows.append(row)
    widths = [max(len(r[c]) for r in rows) for c in range(len(header))]
    lines = [title, "-" * (sum(widths) + 3 * (len(widths) - 1))]
    for r in rows:
        lines.append("   ".join(s.ljust(w) for s, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def write_report_files(report: EvaluationReport, out_dir) -> list[str]:
    """comparison.txt, per-policy metrics CSVs, summary.json, CGM traces."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    path = os.path.join(out_dir, "comparison.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(comparison_table(report))
    written.append(path)

    for policy in sorted({o.policy for o in report.outcomes}):
        path = os.path.join(out_dir, f"metrics_{policy}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["patient"] + [k for k, _ in METRIC_ROWS] + ["doses"])
            for o in report.by_policy(policy):
                w.writerow(
                    [o.patient]
                    + [repr(getattr(o.metrics, k)) for k, _ in METRIC_ROWS]
                    + [";".join(repr(d) for d in o.doses)]
                )
        written.append(path)

    path = os.path.join(out_dir, "summary.json")
    summary = {
        "schema": "evaluation/v1",
        "protocol": report.protocol,
        "basal_scale": report.basal_scale,
        "meal_info": report.meal_info,
        "seed": report.seed,
        "patients": sorted({o.patient for o in report.outcomes}),
        "outcomes": [
            {
                "patient": o.patient,
                "policy": o.policy,
                "metrics": o.metrics.as_dict(),
                "doses": o.doses,
                "first_meal_bolus": o.first_meal_bolus,
            }
            for o in report.outcomes
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    written.append(path)

    traces_dir = os.path.join(out_dir, "traces")
    os.makedirs(traces_dir, exist_ok=True)
    for o in report.outcomes:
        path = os.path.join(traces_dir, f"{o.patient}_{o.policy}.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "glucose_mg_dl"])
            for t, g in zip(o.cgm_times, o.cgm_values):
                w.writerow([repr(float(t)), repr(float(g))])
        written.append(path)
    return written
