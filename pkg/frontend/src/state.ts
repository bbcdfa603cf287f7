/**
 * Session state for the what-if panel.
 *
 * The panel never computes dosing math itself: every displayed number comes
 * from a stored server response. State updates are immutable so view code
 * can diff cheaply.
 */

import type { DoseEntry, FieldError, RecommendationV1, TrajectoryV1 } from "./types";

export const WINDOW_SIZE = 8;

export interface SessionState {
  /** 8 editable preprandial readings; null = empty cell. */
  window: (number | null)[];
  carbs: number | null;
  mealAware: boolean;
  history: DoseEntry[];
  candidateBolus: number;
  uMax: number;
  lastPrediction: TrajectoryV1 | null;
  lastRecommendation: RecommendationV1 | null;
  fieldErrors: FieldError[];
}

export function initialState(uMax = 15, mealAware = true): SessionState {
  return {
    window: new Array(WINDOW_SIZE).fill(null),
    carbs: null,
    mealAware,
    history: [],
    candidateBolus: 0,
    uMax,
    lastPrediction: null,
    lastRecommendation: null,
    fieldErrors: [],
  };
}

export function missingCells(s: SessionState): number[] {
  const out: number[] = [];
  s.window.forEach((v, i) => {
    if (v === null || !Number.isFinite(v)) out.push(i);
  });
  return out;
}

export function windowComplete(s: SessionState): boolean {
  return missingCells(s).length === 0;
}

/** Server calls are enabled only with a full window and consistent meal data. */
export function canCallServer(s: SessionState): boolean {
  if (!windowComplete(s)) return false;
  if (s.mealAware && (s.carbs === null || !Number.isFinite(s.carbs) || s.carbs < 0)) return false;
  return s.candidateBolus >= 0 && s.candidateBolus <= s.uMax;
}

export function setWindowValue(s: SessionState, index: number, value: number | null): SessionState {
  if (index < 0 || index >= WINDOW_SIZE) throw new RangeError(`cell ${index} out of range`);
  const window = s.window.slice();
  window[index] = value;
  return { ...s, window, fieldErrors: [] };
}

export function setCarbs(s: SessionState, carbs: number | null): SessionState {
  return { ...s, carbs, fieldErrors: [] };
}

export function setCandidateBolus(s: SessionState, u: number): SessionState {
  const clamped = Math.min(Math.max(u, 0), s.uMax);
  return { ...s, candidateBolus: clamped };
}

export function addDose(s: SessionState, dose: DoseEntry): SessionState {
  return { ...s, history: [...s.history, dose] };
}

export function applyPrediction(s: SessionState, t: TrajectoryV1): SessionState {
  return { ...s, lastPrediction: t, fieldErrors: [] };
}

export function applyRecommendation(s: SessionState, r: RecommendationV1): SessionState {
  return { ...s, lastRecommendation: r, lastPrediction: r.trajectory ? { ...r.trajectory } : s.lastPrediction, fieldErrors: [] };
}

export function applyFieldErrors(s: SessionState, errors: FieldError[]): SessionState {
  return { ...s, fieldErrors: errors };
}

/** The pinned marker value: exactly the server's final_bolus, or null. */
export function recommendationMarker(s: SessionState): number | null {
  return s.lastRecommendation ? s.lastRecommendation.final_bolus : null;
}

/**
 * Server-observed cost closest to the candidate bolus, from the BO trace of
 * the last recommendation. Keeps all displayed numbers server-computed.
 */
export function nearestTraceCost(s: SessionState): { u: number; cost: number } | null {
  const trace = s.lastRecommendation?.bo_trace;
  if (!trace || trace.length === 0) return null;
  let best = trace[0];
  for (const item of trace) {
    if (Math.abs(item.u - s.candidateBolus) < Math.abs(best.u - s.candidateBolus)) {
      best = item;
    }
  }
  return { u: best.u, cost: best.cost };
}
