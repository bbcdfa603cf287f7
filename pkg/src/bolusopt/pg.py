"""Postprandial glucose model: meal-episode serialization, per-step GP
training on glucose differences, and 8-step trajectory rollout.

Each of the 8 quarter-hour steps after a meal gets its own GP. Step i maps
[window of 8 glucose values, bolus, carbs] to the glucose increment
P_{t+i} - P_{t+i-1}; prediction rolls the window forward on its own
predictive means. Glucose inputs are min-max normalized per step and per
column; bolus and carbs enter raw.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .gp import (
    Dataset,
    FitConfig,
    KernelParams,
    TrainedGp,
    fit_hyperparams,
    gp_from_dict,
    gp_to_dict,
    posterior_predict,
)

__all__ = [
    "SAMPLE_PERIOD_S",
    "N_WINDOW",
    "N_STEPS",
    "MEAL_CLASSES",
    "GlucoseTrace",
    "MealEvent",
    "PgTrainingSample",
    "SkippedMeal",
    "NormalizationStats",
    "PgPredictor",
    "PredictedTrajectory",
    "serialize_samples",
    "grid_resample",
    "train_pg_model",
    "predict_trajectory",
    "predictor_to_dict",
    "predictor_from_dict",
    "save_predictor",
    "load_predictor",
    "save_samples_csv",
    "load_samples_csv",
]

SAMPLE_PERIOD_S = 900.0  # 15 min
ALIGN_TOL_S = 450.0  # half-period alignment tolerance
N_WINDOW = 8  # autoregressive lag 7 plus current reading
N_STEPS = 8  # 2 h horizon
MEAL_CLASSES = ("breakfast", "lunch_dinner")

GLUCOSE_MIN, GLUCOSE_MAX = 10.0, 600.0

# Default budget for the per-step fits. The slope prior and noise floor keep
# the 10-D linear mean identified on meal-sized datasets (7-14 episodes):
# unregularized joint fitting can interpolate the targets through the mean,
# collapse the predictive variance and destabilize the autoregressive
# rollout.
DEFAULT_PG_FIT = FitConfig(
    restarts=5,
    maxiter=2500,
    mean_slope_penalty=1.0,
    noise_floor_rel=0.01,
)


@dataclass(frozen=True)
class GlucoseTrace:
    """Timestamped glucose readings, nominally on a 15-min grid."""

    times: np.ndarray  # seconds
    values: np.ndarray  # mg/dL

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.size == 0:
            raise ValueError("empty glucose trace")
        if t.shape != v.shape:
            raise ValueError("times and values must have equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if np.any(v <= GLUCOSE_MIN) or np.any(v >= GLUCOSE_MAX):
            raise ValueError(f"glucose values must lie in ({GLUCOSE_MIN}, {GLUCOSE_MAX}) mg/dL")


@dataclass(frozen=True)
class MealEvent:
    time: float
    carbs: float
    bolus: float
    meal_class: str

    def __post_init__(self):
        if self.carbs < 0 or self.bolus < 0:
            raise ValueError("carbs and bolus must be nonnegative")
        if self.meal_class not in MEAL_CLASSES:
            raise ValueError(f"meal_class must be one of {MEAL_CLASSES}")


@dataclass(frozen=True)
class PgTrainingSample:
    """One meal episode: 2 h of history, dose, carbs, 2 h of outcome."""

    preprandial: np.ndarray
    bolus: float
    carbs: float
    postprandial: np.ndarray
    meal_class: str

    def __post_init__(self):
        pre = np.atleast_1d(np.asarray(self.preprandial, dtype=float))
        post = np.atleast_1d(np.asarray(self.postprandial, dtype=float))
        object.__setattr__(self, "preprandial", pre)
        object.__setattr__(self, "postprandial", post)
        if pre.shape != (N_WINDOW,) or post.shape != (N_STEPS,):
            raise ValueError(f"expected {N_WINDOW} preprandial and {N_STEPS} postprandial values")
        if self.meal_class not in MEAL_CLASSES:
            raise ValueError(f"meal_class must be one of {MEAL_CLASSES}")


@dataclass(frozen=True)
class SkippedMeal:
    event: MealEvent
    reason: str


@dataclass(frozen=True)
class NormalizationStats:
    """Per-step, per-column glucose input minima and maxima."""

    mins: np.ndarray  # (N_STEPS, N_WINDOW)
    maxs: np.ndarray
    degenerate: np.ndarray  # bool, max == min columns mapped to 0.5

    def __post_init__(self):
        mins = np.asarray(self.mins, dtype=float)
        maxs = np.asarray(self.maxs, dtype=float)
        deg = np.asarray(self.degenerate, dtype=bool)
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "degenerate", deg)
        if mins.shape != (N_STEPS, N_WINDOW) or maxs.shape != mins.shape:
            raise ValueError("normalization stats must be (8, 8)")
        if np.any(maxs < mins):
            raise ValueError("max must be >= min per column")

    def apply(self, step: int, window: np.ndarray) -> np.ndarray:
        """Min-max transform for one step's glucose window. No clamping:
        out-of-range inputs extrapolate linearly."""
        lo, hi = self.mins[step], self.maxs[step]
        span = hi - lo
        out = np.empty(N_WINDOW)
        deg = self.degenerate[step]
        out[deg] = 0.5
        out[~deg] = (window[~deg] - lo[~deg]) / span[~deg]
        return out

    def invert(self, step: int, normed: np.ndarray) -> np.ndarray:
        lo, hi = self.mins[step], self.maxs[step]
        out = np.where(self.degenerate[step], lo, lo + normed * (hi - lo))
        return out


@dataclass
class PgPredictor:
    """Eight per-step difference GPs plus their normalization stats."""

    step_models: list[TrainedGp]
    norm: NormalizationStats
    meal_aware: bool
    meal_class: str

    def __post_init__(self):
        if len(self.step_models) != N_STEPS:
            raise ValueError(f"expected {N_STEPS} step models")
        want = N_WINDOW + (2 if self.meal_aware else 1)
        for gp in self.step_models:
            if gp.dataset.dim != want:
                raise ValueError(f"step model has input dim {gp.dataset.dim}, expected {want}")

    @property
    def input_dim(self) -> int:
        return N_WINDOW + (2 if self.meal_aware else 1)


@dataclass(frozen=True)
class PredictedTrajectory:
    """8 Gaussian marginals at 15-min spacing (2 h horizon)."""

    means: np.ndarray
    variances: np.ndarray
    spacing_minutes: float = 15.0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.means, dtype=float))
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        if m.shape != (N_STEPS,) or v.shape != (N_STEPS,):
            raise ValueError(f"trajectory must have exactly {N_STEPS} steps")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite trajectory")
        if np.any(v < 0):
            raise ValueError("negative predictive variance")


def grid_resample(trace: GlucoseTrace):
    """Resample the trace onto the 15-min grid anchored at its first sample.

    Returns (grid times, interpolated values, validity mask). A grid point is
    valid when some raw timestamp lies within 7.5 min of it.
    """
    t0 = trace.times[0]
    n_grid = int(math.floor((trace.times[-1] - t0) / SAMPLE_PERIOD_S)) + 1
    grid_t = t0 + np.arange(n_grid) * SAMPLE_PERIOD_S
    vals = np.interp(grid_t, trace.times, trace.values)
    idx = np.searchsorted(trace.times, grid_t)
    dist_right = np.abs(trace.times[np.minimum(idx, trace.times.size - 1)] - grid_t)
    dist_left = np.abs(trace.times[np.maximum(idx - 1, 0)] - grid_t)
    ok = np.minimum(dist_left, dist_right) < ALIGN_TOL_S
    return grid_t, vals, ok


def serialize_samples(
    trace: GlucoseTrace, events: list[MealEvent]
) -> tuple[list[PgTrainingSample], list[SkippedMeal]]:
    """Window the trace around each meal into training samples.

    A meal needs a full 2 h history and 2 h future on the grid; the meal
    anchors to the last grid point at or before it. Meals closer than 2 h to
    each other are both skipped, as are meals whose windows fall off the
    trace or cross a gap in the readings.
    """
    if trace.times.size < 2:
        raise ValueError("trace too short to serialize meal samples")
    grid_t, vals, ok = grid_resample(trace)
    t0 = grid_t[0]
    n_grid = grid_t.size

    overlap = set()
    ordered = sorted(events, key=lambda e: e.time)
    for a, b in zip(ordered, ordered[1:]):
        if b.time - a.time < 2 * 3600.0:
            overlap.add(id(a))
            overlap.add(id(b))

    samples: list[PgTrainingSample] = []
    skipped: list[SkippedMeal] = []
    for ev in ordered:
        if id(ev) in overlap:
            skipped.append(SkippedMeal(ev, "overlaps another meal within 2 h"))
            continue
        if ev.time < t0:
            skipped.append(SkippedMeal(ev, "meal precedes the trace"))
            continue
        anchor = int(math.floor((ev.time - t0) / SAMPLE_PERIOD_S))
        if anchor - (N_WINDOW - 1) < 0:
            skipped.append(SkippedMeal(ev, "insufficient preprandial history"))
            continue
        if anchor + N_STEPS >= n_grid:
            skipped.append(SkippedMeal(ev, "insufficient postprandial coverage"))
            continue
        lo, hi = anchor - (N_WINDOW - 1), anchor + N_STEPS + 1
        if not np.all(ok[lo:hi]):
            skipped.append(SkippedMeal(ev, "gap in readings around the meal"))
            continue
        samples.append(
            PgTrainingSample(
                preprandial=vals[lo : anchor + 1],
                bolus=ev.bolus,
                carbs=ev.carbs,
                postprandial=vals[anchor + 1 : hi],
                meal_class=ev.meal_class,
            )
        )
    return samples, skipped


def _step_windows(samples: list[PgTrainingSample], step: int):
    """Glucose window and increment target for one step (0-based)."""
    seq = np.array([np.concatenate([s.preprandial, s.postprandial]) for s in samples])
    win = seq[:, step : step + N_WINDOW]
    tgt = seq[:, N_WINDOW + step] - seq[:, N_WINDOW + step - 1]
    return win, tgt


def train_pg_model(
    samples: list[PgTrainingSample],
    meal_aware: bool = True,
    opt_config: FitConfig | None = None,
) -> PgPredictor:
    """Fit the 8 per-step difference GPs (linear mean, SE kernel)."""
    if len(samples) < 2:
        raise ValueError("need at least 2 training samples")
    classes = {s.meal_class for s in samples}
    if len(classes) != 1:
        raise ValueError(f"samples mix meal classes: {sorted(classes)}")
    meal_class = classes.pop()

    u = np.array([s.bolus for s in samples])
    d = np.array([s.carbs for s in samples])

    mins = np.empty((N_STEPS, N_WINDOW))
    maxs = np.empty((N_STEPS, N_WINDOW))
    models: list[TrainedGp] = []
    degenerate = np.zeros((N_STEPS, N_WINDOW), dtype=bool)
    for step in range(N_STEPS):
        win, tgt = _step_windows(samples, step)
        mins[step] = win.min(axis=0)
        maxs[step] = win.max(axis=0)
        degenerate[step] = maxs[step] - mins[step] < 1e-9

    norm = NormalizationStats(mins=mins, maxs=maxs, degenerate=degenerate)

    for step in range(N_STEPS):
        win, tgt = _step_windows(samples, step)
        normed = np.vstack([norm.apply(step, row) for row in win])
        cols = [normed, u[:, None]]
        if meal_aware:
            cols.append(d[:, None])
        X = np.hstack(cols)
        y_var = float(np.var(tgt))
        sig0 = max(y_var, 1.0)
        ls0 = np.ones(X.shape[1])
        ls0[N_WINDOW] = max(float(np.std(u)), 1.0)  # bolus column, raw units
        if meal_aware:
            ls0[N_WINDOW + 1] = max(float(np.std(d)), 5.0)
        init = KernelParams(
            signal_variance=sig0,
            length_scales=ls0,
            noise_variance=0.05 * sig0,
        )
        models.append(
            fit_hyperparams(
                Dataset(X, tgt),
                init,
                mean_mode="linear",
                opt_config=opt_config or DEFAULT_PG_FIT,
            )
        )
    return PgPredictor(step_models=models, norm=norm, meal_aware=meal_aware, meal_class=meal_class)


def predict_trajectory(
    predictor: PgPredictor,
    preprandial,
    u: float,
    d: float | None = None,
) -> PredictedTrajectory:
    """Roll the per-step GPs forward, feeding predicted means back into the
    autoregressive window. Variance at step i is step i's predictive
    variance; no cross-step propagation."""
    pre = np.atleast_1d(np.asarray(preprandial, dtype=float))
    if pre.shape != (N_WINDOW,):
        raise ValueError(f"expected {N_WINDOW} preprandial values, got {pre.size}")
    if not np.all(np.isfinite(pre)):
        raise ValueError("non-finite preprandial window")
    if not np.isfinite(u) or u < 0:
        raise ValueError("bolus must be finite and nonnegative")
    if predictor.meal_aware and d is None:
        raise ValueError("meal-aware predictor requires announced carbs")
    if not predictor.meal_aware and d is not None:
        raise ValueError("meal-free predictor takes no carbs input")

    window = pre.copy()
    level = float(pre[-1])
    means = np.empty(N_STEPS)
    variances = np.empty(N_STEPS)
    for step in range(N_STEPS):
        z = predictor.norm.apply(step, window)
        feats = [z, [u]]
        if predictor.meal_aware:
            feats.append([d])
        x = np.concatenate(feats)
        delta, var = posterior_predict(predictor.step_models[step], x)
        level = level + delta
        if not (np.isfinite(level) and np.isfinite(var)):
            raise FloatingPointError(f"non-finite rollout at step {step + 1}")
        means[step] = level
        variances[step] = var
        window[:-1] = window[1:]
        window[-1] = level
    return PredictedTrajectory(means=means, variances=variances)


def predictor_to_dict(p: PgPredictor) -> dict:
    return {
        "schema": "pg-predictor/v1",
        "meal_aware": p.meal_aware,
        "meal_class": p.meal_class,
        "normalization": {
            "mins": p.norm.mins.tolist(),
            "maxs": p.norm.maxs.tolist(),
            "degenerate": p.norm.degenerate.astype(int).tolist(),
        },
        "step_models": [gp_to_dict(gp) for gp in p.step_models],
    }


def predictor_from_dict(d: dict) -> PgPredictor:
    norm = NormalizationStats(
        mins=np.asarray(d["normalization"]["mins"], dtype=float),
        maxs=np.asarray(d["normalization"]["maxs"], dtype=float),
        degenerate=np.asarray(d["normalization"]["degenerate"], dtype=bool),
    )
    models = [gp_from_dict(g) for g in d["step_models"]]
    return PgPredictor(
        step_models=models,
        norm=norm,
        meal_aware=bool(d["meal_aware"]),
        meal_class=d["meal_class"],
    )


def save_predictor(p: PgPredictor, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(predictor_to_dict(p), fh, indent=2, sort_keys=True)


def load_predictor(path) -> PgPredictor:
    with open(path, encoding="utf-8") as fh:
        return predictor_from_dict(json.load(fh))


SAMPLES_HEADER = (
    ["meal_class"]
    + [f"pre_{i}" for i in range(1, N_WINDOW + 1)]
    + ["bolus", "carbs"]
    + [f"post_{i}" for i in range(1, N_STEPS + 1)]
)


def save_samples_csv(samples: list[PgTrainingSample], path) -> None:
    """One row per meal episode; columns as in SAMPLES_HEADER."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLES_HEADER)
        for s in samples:
            w.writerow(
                [s.meal_class]
                + [repr(float(v)) for v in s.preprandial]
                + [repr(float(s.bolus)), repr(float(s.carbs))]
                + [repr(float(v)) for v in s.postprandial]
            )


def load_samples_csv(path) -> list[PgTrainingSample]:
    samples = []
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != SAMPLES_HEADER:
            raise ValueError(f"unexpected samples header: {header}")
        for row in r:
            vals = [float(v) for v in row[1:]]
            samples.append(
                PgTrainingSample(
                    preprandial=np.array(vals[:N_WINDOW]),
                    bolus=vals[N_WINDOW],
                    carbs=vals[N_WINDOW + 1],
                    postprandial=np.array(vals[N_WINDOW + 2 :]),
                    meal_class=row[0],
                )
            )
    return samples
