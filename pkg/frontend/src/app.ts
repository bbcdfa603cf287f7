/**
 * DOM glue for the what-if panel. All logic lives in state/api/chart; this
 * file only moves values between inputs and those modules.
 */

import { ApiClient, ApiError, PredictScheduler } from "./api";
import { renderChart } from "./chart";
import {
  SessionState,
  WINDOW_SIZE,
  applyFieldErrors,
  applyPrediction,
  applyRecommendation,
  canCallServer,
  initialState,
  missingCells,
  nearestTraceCost,
  recommendationMarker,
  setCandidateBolus,
  setCarbs,
  setWindowValue,
} from "./state";

const api = new ApiClient("");
let state: SessionState = initialState();
let target: number[] = [100, 120, 140, 160, 160, 150, 140, 140];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function windowValues(): number[] {
  return state.window.map((v) => v ?? NaN);
}

const scheduler = new PredictScheduler(
  (bolus) =>
    api.predict({
      window: windowValues(),
      bolus,
      carbs: state.mealAware ? state.carbs : null,
    }),
  (traj) => {
    state = applyPrediction(state, traj);
    redraw();
  },
  150,
  (err) => {
    if (err instanceof ApiError) {
      state = applyFieldErrors(state, err.errors);
      redraw();
    }
  },
);

function redraw(): void {
  const chart = el<HTMLDivElement>("chart");
  chart.innerHTML = renderChart({
    history: state.window.map((v) => v ?? 120),
    prediction: state.lastPrediction,
    target,
    recommendedBolus: recommendationMarker(state),
    candidateBolus: state.candidateBolus,
    uMax: state.uMax,
  });

  const missing = new Set(missingCells(state));
  for (let i = 0; i < WINDOW_SIZE; i++) {
    el<HTMLInputElement>(`cell-${i}`).classList.toggle("missing", missing.has(i));
  }
  el<HTMLButtonElement>("recommend").disabled = !canCallServer(state);
  el<HTMLSpanElement>("bolus-value").textContent = state.candidateBolus.toFixed(2);

  const rec = state.lastRecommendation;
  const near = nearestTraceCost(state);
  const costNote = near
    ? `  —  observed cost ${near.cost.toFixed(1)} at ${near.u.toFixed(2)} U (closest evaluation)`
    : "";
  el<HTMLDivElement>("recommendation").textContent = rec
    ? `recommended ${rec.final_bolus.toFixed(2)} U  (optimizer ${rec.raw_bolus.toFixed(2)} U, ` +
      `IOB ${rec.iob.toFixed(2)} U)${costNote}`
    : "no recommendation yet";

  const errBox = el<HTMLDivElement>("errors");
  errBox.textContent = state.fieldErrors.map((e) => `${e.field}: ${e.message}`).join("  |  ");
}

function wire(): void {
  const cells = el<HTMLDivElement>("cells");
  for (let i = 0; i < WINDOW_SIZE; i++) {
    const input = document.createElement("input");
    input.id = `cell-${i}`;
    input.type = "number";
    input.placeholder = `${(i - 7) * 15}m`;
    input.addEventListener("input", () => {
      const v = input.value === "" ? null : Number(input.value);
      state = setWindowValue(state, i, v);
      if (canCallServer(state)) scheduler.move(state.candidateBolus);
      redraw();
    });
    cells.appendChild(input);
  }

  el<HTMLInputElement>("carbs").addEventListener("input", (ev) => {
    const raw = (ev.target as HTMLInputElement).value;
    state = setCarbs(state, raw === "" ? null : Number(raw));
    if (canCallServer(state)) scheduler.move(state.candidateBolus);
    redraw();
  });

  const slider = el<HTMLInputElement>("bolus");
  slider.addEventListener("input", () => {
    state = setCandidateBolus(state, Number(slider.value));
    if (canCallServer(state)) scheduler.move(state.candidateBolus);
    redraw();
  });

  el<HTMLButtonElement>("recommend").addEventListener("click", () => {
    api
      .recommend({
        window: windowValues(),
        carbs: state.mealAware ? state.carbs : null,
        history: state.history,
      })
      .then((rec) => {
        state = applyRecommendation(state, rec);
        redraw();
      })
      .catch((err) => {
        if (err instanceof ApiError) {
          state = applyFieldErrors(state, err.errors);
          redraw();
        }
      });
  });
}

async function boot(): Promise<void> {
  wire();
  try {
    const [cfg, model] = await Promise.all([api.config(), api.model()]);
    state = initialState(cfg.advisor.u_max, model.meal_aware);
    target = cfg.advisor.target;
    const slider = el<HTMLInputElement>("bolus");
    slider.max = String(state.uMax);
    el<HTMLDivElement>("model-info").textContent =
      `${model.meal_class} model, ${model.meal_aware ? "meal-aware" : "meal-free"}, ` +
      `${model.n_training_samples} training episodes`;
    el<HTMLInputElement>("carbs").disabled = !model.meal_aware;
  } catch {
    el<HTMLDivElement>("model-info").textContent = "service unreachable";
  }
  redraw();
}

boot();
