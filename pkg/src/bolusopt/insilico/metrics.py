"""Glycemic outcome metrics over a simulated or recorded CGM trace."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .protocols import SimulationResult

__all__ = ["MetricsReport", "compute_metrics", "METRIC_ROWS"]

METRIC_ROWS = (
    ("pct_below_54", "% time < 54 mg/dL"),
    ("pct_below_70", "% time < 70 mg/dL"),
    ("pct_in_70_180", "% time 70-180 mg/dL"),
    ("pct_above_180", "% time > 180 mg/dL"),
    ("pct_above_250", "% time > 250 mg/dL"),
    ("mean_glucose", "Mean glucose (mg/dL)"),
    ("sd_glucose", "SD glucose (mg/dL)"),
    ("mean_glucose_at_0700", "Mean glucose at 07:00 (mg/dL)"),
)


@dataclass(frozen=True)
class MetricsReport:
    pct_below_54: float
    pct_below_70: float
    pct_in_70_180: float
    pct_above_180: float
    pct_above_250: float
    mean_glucose: float
    sd_glucose: float
    mean_glucose_at_0700: float

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name, _ in METRIC_ROWS}


def compute_metrics(result: SimulationResult) -> MetricsReport:
    """Band percentages over all grid readings, overall mean/SD, and the
    average reading at clock 07:00 across days."""
    g = result.cgm.values
    n = g.size
    pct = lambda mask: 100.0 * float(np.count_nonzero(mask)) / n

    clock = (result.start_clock_s + result.cgm.times) % (24 * 3600.0)
    at_7 = np.abs(clock - 7 * 3600.0) < 1.0
    mean_at_7 = float(np.mean(g[at_7])) if np.any(at_7) else float("nan")

    return MetricsReport(
        pct_below_54=pct(g < 54.0),
        pct_below_70=pct(g < 70.0),
        pct_in_70_180=pct((g >= 70.0) & (g <= 180.0)),
        pct_above_180=pct(g > 180.0),
        pct_above_250=pct(g > 250.0),
        mean_glucose=float(np.mean(g)),
        sd_glucose=float(np.std(g)),
        mean_glucose_at_0700=mean_at_7,
    )
