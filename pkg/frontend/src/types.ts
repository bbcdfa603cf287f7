/** v1 wire formats of the advisor service. */

export interface TrajectoryV1 {
  schema?: string;
  means: number[];
  variances: number[];
  spacing_minutes: number;
}

export interface BoTraceItem {
  iteration: number;
  u: number;
  cost: number;
  ei: number | null;
}

export interface RecommendationV1 {
  schema: string;
  raw_bolus: number;
  iob: number;
  final_bolus: number;
  seed: number;
  flagged: boolean;
  trajectory: { means: number[]; variances: number[]; spacing_minutes: number };
  bo_trace: BoTraceItem[];
  inputs?: { preprandial: number[]; carbs: number | null };
}

export interface ConfigV1 {
  schema: string;
  advisor: {
    u_max: number;
    target: number[];
    gamma: number;
    input_weight: number;
    bo_iterations: number;
    [k: string]: unknown;
  };
  [k: string]: unknown;
}

export interface ModelInfoV1 {
  schema: string;
  meal_aware: boolean;
  meal_class: string;
  input_dim: number;
  n_training_samples: number;
  steps: number;
}

export interface FieldError {
  field: string;
  message: string;
}

export interface DoseEntry {
  time: number;
  units: number;
}
